//! Analytic gradients of every loss against central finite differences of
//! an independent forward pass, plus the zero-head saliency identity.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saladbench::corpus::{Example, Side, TaskKind, TextInput};
use saladbench::toyclf::{self, Batch, Encoded, EntropySign, LossConfig, LossKind, ToyModel};

use crate::fixtures::Toy;
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "loss gradients",
    budget: Some(Duration::from_secs(30)),
    uses_corpora: false,
    run,
};

const N_FIXTURES: usize = 100;
const EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Denominator floor, so entries that are zero up to rounding compare
/// on an absolute scale.
const REL_FLOOR: f64 = 1e-6;
const KINDS: [LossKind; 4] = [
    LossKind::CrossEntropy,
    LossKind::LabelSmoothing,
    LossKind::Focal,
    LossKind::Entropic,
];
const WORDS: [&str; 5] = ["good", "bad", "plot", "film", "dull"];

/// Parameters read straight from the model, with one token occurrence
/// optionally replaced by a perturbed embedding.
struct Oracle<'a> {
    model: &'a ToyModel,
    dim: usize,
    n: usize,
}

/// `(item, side, position, component, delta)`: shifts one coordinate of one
/// token occurrence.
type Nudge = (usize, usize, usize, usize, f64);

impl Oracle<'_> {
    fn logits(&self, enc: &Encoded, item: usize, nudge: Option<Nudge>) -> Vec<f64> {
        let d = self.dim;
        let mut pooled = vec![0.0; enc.sides.len() * d];
        for (s, ids) in enc.sides.iter().enumerate() {
            for (pos, &id) in ids.iter().enumerate() {
                for k in 0..d {
                    let mut e = self.model.emb[id * d + k];
                    if let Some((ni, ns, np, nk, delta)) = nudge {
                        if (ni, ns, np, nk) == (item, s, pos, k) {
                            e += delta;
                        }
                    }
                    pooled[s * d + k] += e / ids.len() as f64;
                }
            }
        }
        (0..self.n)
            .map(|c| {
                self.model.bias[c]
                    + pooled
                        .iter()
                        .enumerate()
                        .map(|(r, p)| self.model.head[r * self.n + c] * p)
                        .sum::<f64>()
            })
            .collect()
    }

    fn probs(&self, z: &[f64]) -> Vec<f64> {
        let t = self.model.temperature();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    fn loss(&self, clean: &[(Encoded, usize)], invalid: &[Encoded], cfg: &LossConfig, nudge: Option<Nudge>) -> f64 {
        let mut total = 0.0;
        if !clean.is_empty() {
            let mut sum = 0.0;
            for (i, (enc, y)) in clean.iter().enumerate() {
                let p = self.probs(&self.logits(enc, i, nudge));
                sum += match cfg.kind {
                    LossKind::CrossEntropy | LossKind::Entropic => -p[*y].ln(),
                    LossKind::LabelSmoothing => {
                        let lam = cfg.label_smoothing;
                        -(0..self.n)
                            .map(|c| (lam / self.n as f64 + if c == *y { 1.0 - lam } else { 0.0 }) * p[c].ln())
                            .sum::<f64>()
                    }
                    LossKind::Focal => -(1.0 - p[*y]).powf(cfg.gamma) * p[*y].ln(),
                };
            }
            total += sum / clean.len() as f64;
        }
        if cfg.kind == LossKind::Entropic && !invalid.is_empty() {
            let mut h = 0.0;
            for (j, enc) in invalid.iter().enumerate() {
                let p = self.probs(&self.logits(enc, clean.len() + j, nudge));
                h -= p.iter().map(|q| q * q.ln()).sum::<f64>();
            }
            total -= cfg.entropy_weight * h / invalid.len() as f64;
        }
        total
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

struct Worst {
    err: f64,
    what: String,
}

impl Worst {
    fn see(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let e = rel_err(analytic, numeric);
        if e > self.err {
            self.err = e;
            self.what = format!("{} (analytic {analytic:.3e}, numeric {numeric:.3e})", what());
        }
    }
}

fn random_encoded(rng: &mut ChaCha8Rng, sides: usize, vocab: usize) -> Encoded {
    Encoded {
        sides: (0..sides)
            .map(|_| (0..rng.gen_range(1..=5)).map(|_| rng.gen_range(0..vocab)).collect())
            .collect(),
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> ToyModel {
    let task = if rng.gen_bool(0.5) { TaskKind::Single } else { TaskKind::Pair };
    let dim = rng.gen_range(1..=4);
    let n = rng.gen_range(2..=4);
    let words = WORDS.iter().map(|w| w.to_string()).collect();
    let mut m = ToyModel::new(words, dim, n, task, rng.gen()).expect("valid model");
    m.head.iter_mut().for_each(|h| *h = rng.gen_range(-2.0..2.0));
    m.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
    m.set_temperature(rng.gen_range(0.5..2.0)).expect("positive temperature");
    m
}

fn loss_config(rng: &mut ChaCha8Rng, kind: LossKind) -> LossConfig {
    LossConfig {
        kind,
        label_smoothing: rng.gen_range(0.0..0.3),
        gamma: [0.0, 1.0, 2.0, 3.5][rng.gen_range(0..4)],
        entropy_weight: rng.gen_range(0.05..1.0),
        entropy_sign: EntropySign::Max,
    }
}

fn check_fixture(rng: &mut ChaCha8Rng, kind: LossKind, worst: &mut Worst) -> Result<(), String> {
    let mut model = random_model(rng);
    let cfg = loss_config(rng, kind);
    let sides = model.task_kind().sides().len();
    let vocab = model.vocab().len();
    let n = model.n_classes();
    let clean: Vec<(Encoded, usize)> = (0..rng.gen_range(1..=3))
        .map(|_| (random_encoded(rng, sides, vocab), rng.gen_range(0..n)))
        .collect();
    let invalid: Vec<Encoded> = (0..rng.gen_range(0..=3)).map(|_| random_encoded(rng, sides, vocab)).collect();
    let batch = Batch {
        clean: &clean,
        invalid: &invalid,
    };
    let g = toyclf::grad(&model, &batch, &cfg).map_err(|e| e.to_string())?;
    let reported = toyclf::loss(&model, &batch, &cfg).map_err(|e| e.to_string())?;

    let oracle_loss = {
        let o = Oracle { model: &model, dim: model.dim(), n };
        o.loss(&clean, &invalid, &cfg, None)
    };
    worst.see(reported, oracle_loss, || format!("{kind:?} loss value"));
    worst.see(g.loss, oracle_loss, || format!("{kind:?} loss reported with gradient"));

    let dim = model.dim();
    let eval = |m: &ToyModel, nudge: Option<Nudge>| Oracle { model: m, dim, n }.loss(&clean, &invalid, &cfg, nudge);

    for i in 0..model.emb.len() {
        let orig = model.emb[i];
        model.emb[i] = orig + EPS;
        let up = eval(&model, None);
        model.emb[i] = orig - EPS;
        let down = eval(&model, None);
        model.emb[i] = orig;
        worst.see(g.emb[i], (up - down) / (2.0 * EPS), || format!("{kind:?} emb[{i}]"));
    }
    for i in 0..model.head.len() {
        let orig = model.head[i];
        model.head[i] = orig + EPS;
        let up = eval(&model, None);
        model.head[i] = orig - EPS;
        let down = eval(&model, None);
        model.head[i] = orig;
        worst.see(g.head[i], (up - down) / (2.0 * EPS), || format!("{kind:?} head[{i}]"));
    }
    for i in 0..model.bias.len() {
        let orig = model.bias[i];
        model.bias[i] = orig + EPS;
        let up = eval(&model, None);
        model.bias[i] = orig - EPS;
        let down = eval(&model, None);
        model.bias[i] = orig;
        worst.see(g.bias[i], (up - down) / (2.0 * EPS), || format!("{kind:?} bias[{i}]"));
    }
    let items: Vec<&Encoded> = clean.iter().map(|(e, _)| e).chain(&invalid).collect();
    if g.tokens.len() != items.len() {
        return Err(format!("{} token-gradient items for {} inputs", g.tokens.len(), items.len()));
    }
    for (it, enc) in items.iter().enumerate() {
        for (s, ids) in enc.sides.iter().enumerate() {
            for pos in 0..ids.len() {
                for k in 0..dim {
                    let up = eval(&model, Some((it, s, pos, k, EPS)));
                    let down = eval(&model, Some((it, s, pos, k, -EPS)));
                    worst.see(g.tokens[it][s][pos][k], (up - down) / (2.0 * EPS), || {
                        format!("{kind:?} token item {it} side {s} pos {pos} dim {k}")
                    });
                }
            }
        }
    }
    Ok(())
}

/// With a zero head the logits do not depend on any token, so every
/// saliency score is exactly zero.
fn zero_head_saliency(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut model = random_model(rng);
    model.head.iter_mut().for_each(|h| *h = 0.0);
    let text = |rng: &mut ChaCha8Rng| {
        (0..rng.gen_range(1..=6))
            .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (input, side) = match model.task_kind() {
        TaskKind::Single => (TextInput::single(text(rng)), Side::A),
        TaskKind::Pair => (TextInput::pair(text(rng), text(rng)), Side::B),
    };
    let ex = Example::new("z", input, None);
    let label = rng.gen_range(0..model.n_classes());
    let s = model.saliency(&ex, label, side).map_err(|e| e.to_string())?;
    if s.scores.iter().any(|&v| v != 0.0) {
        return Err(format!("zero-head saliency {:?}", s.scores));
    }
    Ok(())
}

fn run(_: &Toy) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x96ad);
    let mut worst = Worst {
        err: 0.0,
        what: String::new(),
    };
    for f in 0..N_FIXTURES {
        for kind in KINDS {
            if let Err(msg) = check_fixture(&mut rng, kind, &mut worst) {
                return Verdict::new(false, format!("fixture {f}: {msg}"));
            }
        }
        if let Err(msg) = zero_head_saliency(&mut rng) {
            return Verdict::new(false, format!("fixture {f}: {msg}"));
        }
    }
    Verdict::new(
        worst.err <= REL_TOL,
        format!(
            "{N_FIXTURES} fixtures x {} losses; worst relative error {:.2e} (tol {REL_TOL:.0e}) at {}; zero-head saliency exact",
            KINDS.len(),
            worst.err,
            worst.what
        ),
    )
}
