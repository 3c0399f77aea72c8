//! Mitigation strategies at the fixed toy configuration, the threshold
//! search against an exhaustive oracle, and detector transfer.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saladbench::metrics;
use saladbench::mitigate::{
    invalid_sets, run_strategy, threshold_search, transfer_matrix, MitigationConfig, Strategy, ThresholdResult,
};
use saladbench::providers::{Prediction, Provider};
use saladbench::xform::TransformKind;

use crate::fixtures::{train_config, Corpus, Toy, MITIGATION_EPOCHS, SEED};
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "mitigation strategies",
    budget: Some(Duration::from_secs(180)),
    uses_corpora: true,
    run,
};

pub const TRANSFER: Criterion = Criterion {
    name: "detector transfer",
    budget: None,
    uses_corpora: true,
    run: run_transfer,
};

/// Invalid-class detection over content-changing kinds, percent.
const MIN_DETECTION: f64 = 90.0;
/// Allowed clean-accuracy loss of the invalid-class model, points.
const MAX_CLEAN_DROP: f64 = 3.0;
/// Required fall in mean confidence on content-changing invalid inputs
/// after entropic training, points.
const MIN_CONFIDENCE_DROP: f64 = 15.0;
const ENTROPY_WEIGHT: f64 = 0.5;
const N_THRESHOLD_FIXTURES: usize = 200;

fn content_changing() -> Vec<TransformKind> {
    TransformKind::ALL.into_iter().filter(|k| k.changes_content()).collect()
}

fn mitigation_config(strategy: Strategy, transforms: Vec<TransformKind>) -> MitigationConfig {
    MitigationConfig {
        strategy,
        transforms,
        entropy_weight: ENTROPY_WEIGHT,
        epochs: MITIGATION_EPOCHS,
        seed: SEED,
        ..MitigationConfig::default()
    }
}

/// Exhaustive search written from the definition: the grid runs from 1/N
/// in `step` increments and ends at 1; a point is feasible when its clean
/// accuracy is within the tolerance of the baseline; the best feasible
/// point rejects the most invalid inputs, ties to the smaller θ; with no
/// feasible point the answer is 1/N, marked infeasible.
fn oracle_threshold(
    clean: &[Prediction],
    gold: &[usize],
    invalid: &[Prediction],
    baseline: f64,
    cfg: &MitigationConfig,
) -> ThresholdResult {
    let n = clean[0].probs.len();
    let start = 1.0 / n as f64;
    let mut grid: Vec<f64> = (0..)
        .map(|k| start + k as f64 * cfg.grid_step)
        .take_while(|t| *t < 1.0 - 1e-12)
        .collect();
    grid.push(1.0);
    let at = |theta: f64| {
        let acc = 100.0
            * clean.iter().zip(gold).filter(|(p, &y)| p.confidence >= theta && p.predicted == y).count() as f64
            / clean.len() as f64;
        let det = 100.0 * invalid.iter().filter(|p| p.confidence < theta).count() as f64 / invalid.len() as f64;
        (acc, det)
    };
    let mut best: Option<ThresholdResult> = None;
    for &theta in &grid {
        let (acc, det) = at(theta);
        let feasible = acc >= baseline - 100.0 * cfg.accuracy_tolerance - 1e-9;
        if feasible && best.map_or(true, |b| det > b.detection) {
            best = Some(ThresholdResult {
                theta,
                clean_accuracy: acc,
                detection: det,
                feasible: true,
            });
        }
    }
    best.unwrap_or_else(|| {
        let (acc, det) = at(start);
        ThresholdResult {
            theta: start,
            clean_accuracy: acc,
            detection: det,
            feasible: false,
        }
    })
}

fn compare_threshold(
    clean: &[Prediction],
    gold: &[usize],
    invalid: &[Prediction],
    baseline: f64,
    cfg: &MitigationConfig,
) -> Result<ThresholdResult, String> {
    let got = threshold_search(clean, gold, invalid, baseline, cfg).map_err(|e| e.to_string())?;
    let want = oracle_threshold(clean, gold, invalid, baseline, cfg);
    if got != want {
        return Err(format!("search {got:?} vs oracle {want:?}"));
    }
    let bound = baseline - 100.0 * cfg.accuracy_tolerance - 1e-9;
    if got.feasible && got.clean_accuracy < bound {
        return Err(format!("chosen θ {} violates the accuracy bound", got.theta));
    }
    Ok(got)
}

fn random_prediction(rng: &mut ChaCha8Rng, id: usize, n: usize) -> Prediction {
    let coarse = rng.gen_bool(0.5);
    let mut raw: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.0..1.0);
            if coarse {
                (v * 10.0).round() + 0.5
            } else {
                v.powi(3) + 1e-3
            }
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|v| *v /= s);
    Prediction::from_probs(id.to_string(), raw, n).expect("valid probs")
}

fn random_threshold_fixtures() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e5);
    let mut infeasible = 0;
    for f in 0..N_THRESHOLD_FIXTURES {
        let n = rng.gen_range(2..=4);
        let clean: Vec<Prediction> = (0..rng.gen_range(1..40)).map(|i| random_prediction(&mut rng, i, n)).collect();
        let gold: Vec<usize> = clean
            .iter()
            .map(|p| if rng.gen_bool(0.7) { p.predicted } else { rng.gen_range(0..n) })
            .collect();
        let invalid: Vec<Prediction> = (0..rng.gen_range(1..40)).map(|i| random_prediction(&mut rng, i, n)).collect();
        let cfg = MitigationConfig {
            accuracy_tolerance: [0.0, 0.01, 0.03, 0.1][rng.gen_range(0..4)],
            grid_step: [0.001, 0.01, 0.05, 0.3][rng.gen_range(0..4)],
            ..MitigationConfig::default()
        };
        let baseline = rng.gen_range(0.0..110.0);
        let r = compare_threshold(&clean, &gold, &invalid, baseline, &cfg).map_err(|e| format!("fixture {f}: {e}"))?;
        infeasible += usize::from(!r.feasible);
    }
    Ok(infeasible)
}

/// The search on the baseline's real tuning predictions.
fn real_threshold(c: &Corpus) -> Result<ThresholdResult, String> {
    let tune = &c.data.tune.examples;
    let engine = c.engine();
    let (sets, _) = invalid_sets(tune, &TransformKind::ALL, &engine, SEED).map_err(|e| e.to_string())?;
    let pooled: Vec<_> = sets.into_iter().flat_map(|(_, v)| v).collect();
    let clean = c.provider.predict_batch(tune).map_err(|e| e.to_string())?;
    let invalid = c.provider.predict_batch(&pooled).map_err(|e| e.to_string())?;
    let gold: Vec<usize> = tune.iter().map(|e| e.gold_label.expect("labelled")).collect();
    let baseline = metrics::accuracy(&clean, &gold).map_err(|e| e.to_string())?;
    compare_threshold(&clean, &gold, &invalid, baseline, &MitigationConfig::default())
}

fn check_corpus(c: &Corpus) -> (bool, String) {
    let engine = c.engine();
    let cc = content_changing();
    let mut pass = true;
    let mut notes = Vec::new();

    let ic = run_strategy(
        &c.baseline,
        &c.data,
        &engine,
        &mitigation_config(Strategy::InvalidClass, cc.clone()),
        &TransformKind::ALL,
        &train_config(),
    );
    match ic {
        Ok(run) => {
            let det = run.report.detection_over(&cc).unwrap_or(0.0);
            let clean = run.report.clean_accuracy;
            let base = run.baseline.clean_accuracy;
            let ok_det = det >= MIN_DETECTION;
            let ok_clean = clean >= base - MAX_CLEAN_DROP;
            pass &= ok_det && ok_clean;
            notes.push(format!(
                "invalid-class detection {det:.2}{} clean {clean:.2} vs baseline {base:.2}{}",
                if ok_det { "" } else { " [below 90]" },
                if ok_clean { "" } else { " [drop over 3]" }
            ));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("invalid-class failed: {e}"));
        }
    }

    let en = run_strategy(
        &c.baseline,
        &c.data,
        &engine,
        &mitigation_config(Strategy::EntropicThreshold, TransformKind::ALL.to_vec()),
        &TransformKind::ALL,
        &train_config(),
    );
    match en {
        Ok(run) => {
            let base = run.baseline.confidence_over(&cc).unwrap_or(f64::NAN);
            let after = run
                .unscaled
                .as_ref()
                .and_then(|u| u.confidence_over(&cc))
                .unwrap_or(f64::NAN);
            let ok = after <= base - MIN_CONFIDENCE_DROP;
            pass &= ok;
            notes.push(format!(
                "entropic confidence {base:.2} -> {after:.2} ({:+.2}){}",
                after - base,
                if ok { "" } else { " [fall under 15]" }
            ));
        }
        Err(e) => {
            pass = false;
            notes.push(format!("entropic failed: {e}"));
        }
    }

    match real_threshold(c) {
        Ok(r) => notes.push(format!("tuning θ {:.3} matches oracle", r.theta)),
        Err(e) => {
            pass = false;
            notes.push(format!("threshold search: {e}"));
        }
    }
    (pass, format!("{}: {}", c.name(), notes.join(", ")))
}

fn run(toy: &Toy) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for c in toy.corpora() {
        let (ok, d) = check_corpus(c);
        pass &= ok;
        details.push(d);
    }
    match random_threshold_fixtures() {
        Ok(inf) => details.push(format!("{N_THRESHOLD_FIXTURES} random threshold fixtures match ({inf} infeasible)")),
        Err(e) => {
            pass = false;
            details.push(format!("threshold oracle: {e}"));
        }
    }
    Verdict::new(pass, details.join("; "))
}

fn run_transfer(toy: &Toy) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for c in toy.corpora() {
        let cfg = mitigation_config(Strategy::InvalidClass, TransformKind::ALL.to_vec());
        match transfer_matrix(&c.baseline, &c.data.train, &c.data.eval, &c.engine(), &cfg, &train_config()) {
            Ok(m) => match (m.within_family_mean(), m.cross_family_mean()) {
                (Some(w), Some(x)) => {
                    pass &= w > x;
                    details.push(format!("{}: within-family {w:.2} vs cross-family {x:.2}", c.name()));
                }
                _ => {
                    pass = false;
                    details.push(format!("{}: matrix lacks within or cross pairs", c.name()));
                }
            },
            Err(e) => {
                pass = false;
                details.push(format!("{}: {e}", c.name()));
            }
        }
    }
    Verdict::new(pass, details.join("; "))
}
