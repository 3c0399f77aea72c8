//! Temperature scaling: the fitted temperature never changes a predicted
//! label, never raises tuning NLL, and repairs an overconfident model.

use saladbench::corpus::Example;
use saladbench::metrics::{self, DEFAULT_ECE_BINS};
use saladbench::providers::{EmbeddedProvider, Provider};
use saladbench::toyclf::{self, fit_temperature, nll_at_temperature, LossConfig, ToyModel, TrainConfig};

use crate::fixtures::{train_config, Corpus, Toy};
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "temperature calibration",
    budget: None,
    uses_corpora: true,
    run,
};

/// Training budget of the overconfident model: too little to fit well.
const BRIEF_EPOCHS: usize = 1;
const BRIEF_LEARNING_RATE: f64 = 0.05;
/// Multiplies head and bias of the briefly trained model, sharpening every
/// softmax.
const OVERCONFIDENCE_SCALE: f64 = 40.0;
/// The overconfident fixture must exceed its accuracy by this many points
/// of mean confidence, or it does not test what it claims to.
const MIN_OVERCONFIDENCE: f64 = 5.0;

fn gold(examples: &[Example]) -> Vec<usize> {
    examples.iter().map(|e| e.gold_label.expect("labelled")).collect()
}

/// `(T, ECE before, ECE after)` on the evaluation split, after checking
/// labels and tuning NLL.
fn calibrate(model: &ToyModel, c: &Corpus) -> Result<(f64, f64, f64), String> {
    let tune = &c.data.tune.examples;
    let eval = &c.data.eval.examples;
    let t = fit_temperature(model, tune).map_err(|e| e.to_string())?;
    let logits: Vec<Vec<f64>> = tune
        .iter()
        .map(|e| model.logits(&model.encode(e).expect("encodes")))
        .collect();
    let tune_gold = gold(tune);
    let (fitted, unit) = (
        nll_at_temperature(&logits, &tune_gold, t),
        nll_at_temperature(&logits, &tune_gold, 1.0),
    );
    if fitted > unit {
        return Err(format!("NLL at T={t} is {fitted:.6}, above {unit:.6} at T=1"));
    }
    let mut scaled = model.clone();
    scaled.set_temperature(t).map_err(|e| e.to_string())?;
    let before = EmbeddedProvider::new(model.clone()).predict_batch(eval).map_err(|e| e.to_string())?;
    let after = EmbeddedProvider::new(scaled).predict_batch(eval).map_err(|e| e.to_string())?;
    if let Some((b, a)) = before.iter().zip(&after).find(|(b, a)| b.predicted != a.predicted) {
        return Err(format!("`{}` changed label {} -> {} at T={t}", b.id, b.predicted, a.predicted));
    }
    let g = gold(eval);
    let pre = metrics::ece(&before, &g, DEFAULT_ECE_BINS).map_err(|e| e.to_string())?;
    let post = metrics::ece(&after, &g, DEFAULT_ECE_BINS).map_err(|e| e.to_string())?;
    Ok((t, pre, post))
}

/// A briefly trained model with its logits sharpened: confident
/// everywhere, right less often.
fn overconfident(c: &Corpus) -> Result<ToyModel, String> {
    let cfg = TrainConfig {
        epochs: BRIEF_EPOCHS,
        learning_rate: BRIEF_LEARNING_RATE,
        ..train_config()
    };
    let mut m = toyclf::train(&c.data.train, &LossConfig::cross_entropy(), &cfg, None).map_err(|e| e.to_string())?;
    m.head.iter_mut().for_each(|h| *h *= OVERCONFIDENCE_SCALE);
    m.bias.iter_mut().for_each(|b| *b *= OVERCONFIDENCE_SCALE);
    let provider = EmbeddedProvider::new(m.clone());
    for (split, examples) in [("tune", &c.data.tune.examples), ("eval", &c.data.eval.examples)] {
        let preds = provider.predict_batch(examples).map_err(|e| e.to_string())?;
        let conf = metrics::mean_confidence(&preds).map_err(|e| e.to_string())?;
        let acc = metrics::accuracy(&preds, &gold(examples)).map_err(|e| e.to_string())?;
        if conf - acc < MIN_OVERCONFIDENCE {
            return Err(format!("fixture not overconfident on {split}: confidence {conf:.2} vs accuracy {acc:.2}"));
        }
    }
    Ok(m)
}

fn check_corpus(c: &Corpus) -> Result<String, String> {
    let (t, pre, post) = calibrate(&c.baseline, c)?;
    let sharp = overconfident(c)?;
    let (st, spre, spost) = calibrate(&sharp, c)?;
    if spost > spre {
        return Err(format!("overconfident model ECE rose {spre:.4} -> {spost:.4} at T={st}"));
    }
    Ok(format!(
        "{}: baseline T={t} ECE {pre:.4}->{post:.4}, overconfident T={st} ECE {spre:.4}->{spost:.4}",
        c.name()
    ))
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
    Verdict::new(pass, details.join("; "))
}
