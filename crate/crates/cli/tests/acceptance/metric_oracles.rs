//! Response metrics against brute-force recomputation on real predictions,
//! and ECE on a perfectly calibrated fixture.

use saladbench::metrics::{self, DEFAULT_ECE_BINS};
use saladbench::providers::{Prediction, Provider};
use saladbench::xform::{TransformKind, TransformSpec};

use crate::fixtures::{Corpus, Toy};
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "metric oracles",
    budget: None,
    uses_corpora: true,
    run,
};

const CALIBRATED_TOL: f64 = 1e-12;

fn pct(k: usize, n: usize) -> f64 {
    100.0 * k as f64 / n as f64
}

/// Textbook ECE: bin m covers (m/B, (m+1)/B], zero joins the first bin.
fn oracle_ece(preds: &[Prediction], gold: &[usize], bins: usize) -> f64 {
    let n = preds.len() as f64;
    let mut total = 0.0;
    for m in 0..bins {
        let lo = m as f64 / bins as f64;
        let hi = (m + 1) as f64 / bins as f64;
        let members: Vec<usize> = (0..preds.len())
            .filter(|&i| {
                let c = preds[i].confidence;
                (c > lo || (m == 0 && c == 0.0)) && c <= hi
            })
            .collect();
        if members.is_empty() {
            continue;
        }
        let k = members.len() as f64;
        let correct = members.iter().filter(|&&i| preds[i].predicted == gold[i]).count() as f64;
        let conf: f64 = members.iter().map(|&i| preds[i].confidence).sum();
        total += (k / n) * (correct / k - conf / k).abs();
    }
    total
}

fn oracle_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

fn check_corpus(c: &Corpus) -> Result<String, String> {
    let eval = &c.data.eval;
    let gold: Vec<usize> = eval.examples.iter().map(|e| e.gold_label.expect("labelled")).collect();
    let original = c.provider.predict_batch(&eval.examples).map_err(|e| e.to_string())?;
    for p in &original {
        if p.predicted != oracle_argmax(&p.probs) || p.confidence != p.probs[p.predicted] {
            return Err(format!("`{}`: predicted/confidence disagree with probs", p.id));
        }
    }
    let got = metrics::ece(&original, &gold, DEFAULT_ECE_BINS).map_err(|e| e.to_string())?;
    let want = oracle_ece(&original, &gold, DEFAULT_ECE_BINS);
    if got != want {
        return Err(format!("ECE {got} vs oracle {want}"));
    }
    let acc = metrics::accuracy(&original, &gold).map_err(|e| e.to_string())?;
    let want_acc = pct(original.iter().zip(&gold).filter(|(p, &y)| p.predicted == y).count(), gold.len());
    if acc != want_acc {
        return Err(format!("accuracy {acc} vs oracle {want_acc}"));
    }

    let engine = c.engine();
    let mut checked = 0;
    for kind in TransformKind::ALL {
        if !kind.applicable(eval.task_kind) {
            continue;
        }
        let out = engine
            .apply_batch(&eval.examples, &TransformSpec::new(kind, eval.task_kind))
            .map_err(|e| e.to_string())?;
        if out.transformed.is_empty() {
            continue;
        }
        let inputs: Vec<_> = out.transformed.iter().map(|t| t.example.clone()).collect();
        let preds = c.provider.predict_batch(&inputs).map_err(|e| e.to_string())?;
        let paired: Vec<Prediction> = out
            .transformed
            .iter()
            .map(|t| original.iter().find(|p| p.id == t.source_id).expect("source predicted").clone())
            .collect();
        let n = preds.len();
        let agree = metrics::agreement(&paired, &preds).map_err(|e| e.to_string())?;
        let want = pct(paired.iter().zip(&preds).filter(|(o, t)| o.predicted == t.predicted).count(), n);
        if agree != want {
            return Err(format!("{kind}: agreement {agree} vs oracle {want}"));
        }
        let conf = metrics::mean_confidence(&preds).map_err(|e| e.to_string())?;
        let want = 100.0 * preds.iter().map(|p| p.probs[oracle_argmax(&p.probs)]).sum::<f64>() / n as f64;
        if conf != want {
            return Err(format!("{kind}: mean confidence {conf} vs oracle {want}"));
        }
        let default = eval.labels.default_label();
        match metrics::default_agreement(&preds, default) {
            Ok(v) => {
                let d = default.expect("default label present when defined");
                let want = pct(preds.iter().filter(|p| p.predicted == d).count(), n);
                if v != want {
                    return Err(format!("{kind}: default agreement {v} vs oracle {want}"));
                }
            }
            Err(_) if default.is_none() => {}
            Err(e) => return Err(format!("{kind}: {e}")),
        }
        checked += 1;
    }
    Ok(format!("{}: {checked} transformed sets and ECE {want:.4} agree exactly", c.name()))
}

/// Ten predictions per bin at confidence 0.6 through 1.0, with exactly
/// that share correct.
fn calibrated_fixture() -> f64 {
    let mut preds = Vec::new();
    let mut gold = Vec::new();
    for (b, conf) in [0.6, 0.7, 0.8, 0.9, 1.0].into_iter().enumerate() {
        let hits = (conf * 10.0_f64).round() as usize;
        for i in 0..10 {
            let p = Prediction::from_probs(format!("{b}-{i}"), vec![conf, 1.0 - conf], 2).expect("valid probs");
            preds.push(p);
            gold.push(if i < hits { 0 } else { 1 });
        }
    }
    metrics::ece(&preds, &gold, DEFAULT_ECE_BINS).expect("ece")
}

fn run(toy: &Toy) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for c in toy.corpora() {
        match check_corpus(c) {
            Ok(d) => details.push(d),
            Err(e) => {
                pass = false;
                details.push(format!("{}: {e}", c.name()));
            }
        }
    }
    let cal = calibrated_fixture();
    pass &= cal.abs() <= CALIBRATED_TOL;
    details.push(format!("calibrated fixture ECE {cal:.1e}"));
    Verdict::new(pass, details.join("; "))
}
