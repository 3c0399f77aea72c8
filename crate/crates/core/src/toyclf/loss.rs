use serde::{Deserialize, Serialize};

use super::{softmax, Encoded, ToyModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    LabelSmoothing,
    Focal,
    Entropic,
}

/// How the invalid-set entropy enters the minimised objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropySign {
    /// `L_D − λ·H_D′`: entropy on invalid inputs is pushed up.
    #[default]
    Max,
    /// `L_D + λ·H_D′`, as the objective is usually written.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub label_smoothing: f64,
    pub gamma: f64,
    pub entropy_weight: f64,
    #[serde(default)]
    pub entropy_sign: EntropySign,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::CrossEntropy,
            label_smoothing: 0.1,
            gamma: 2.0,
            entropy_weight: 0.1,
            entropy_sign: EntropySign::Max,
        }
    }
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        LossConfig::default()
    }

    pub fn of_kind(kind: LossKind) -> Self {
        LossConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("gamma {} < 0", self.gamma)));
        }
        if !(self.entropy_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "entropy weight {} < 0",
                self.entropy_weight
            )));
        }
        Ok(())
    }
}

/// Labelled examples for the supervised term and, for the entropic loss,
/// unlabelled invalid inputs.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub clean: &'a [(Encoded, usize)],
    pub invalid: &'a [Encoded],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub emb: Vec<f64>,
    pub head: Vec<f64>,
    pub bias: Vec<f64>,
    /// Gradient at each token occurrence's embedding: clean items first,
    /// then invalid, each as `[side][token][dim]`.
    pub tokens: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Supervised loss and its gradient with respect to the scaled logits `z/T`.
fn supervised(p: &[f64], y: usize, cfg: &LossConfig) -> (f64, Vec<f64>) {
    let n = p.len();
    let ln = |x: f64| x.max(f64::MIN_POSITIVE).ln();
    match cfg.kind {
        LossKind::CrossEntropy | LossKind::Entropic => {
            let g = (0..n).map(|c| p[c] - if c == y { 1.0 } else { 0.0 }).collect();
            (-ln(p[y]), g)
        }
        LossKind::LabelSmoothing => {
            let lam = cfg.label_smoothing;
            let q: Vec<f64> = (0..n)
                .map(|c| lam / n as f64 + if c == y { 1.0 - lam } else { 0.0 })
                .collect();
            let l = -q.iter().zip(p).map(|(qc, pc)| qc * ln(*pc)).sum::<f64>();
            (l, (0..n).map(|c| p[c] - q[c]).collect())
        }
        LossKind::Focal => {
            let g = cfg.gamma;
            let py = p[y];
            let one_minus = 1.0 - py;
            let l = -one_minus.powf(g) * ln(py);
            // dL/dp_y, then chain through dp_y/du_c = p_y (δ_yc − p_c)
            let dl_dpy = if one_minus > 0.0 && g > 0.0 {
                g * one_minus.powf(g - 1.0) * ln(py) - one_minus.powf(g) / py
            } else if g == 0.0 {
                -1.0 / py
            } else {
                0.0
            };
            let grad = (0..n)
                .map(|c| dl_dpy * py * (if c == y { 1.0 } else { 0.0 } - p[c]))
                .collect();
            (l, grad)
        }
    }
}

/// Entropy `H(p)` and its gradient with respect to the scaled logits.
fn entropy(p: &[f64]) -> (f64, Vec<f64>) {
    let plogp = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let h = -p.iter().map(|&x| plogp(x)).sum::<f64>();
    let g = p
        .iter()
        .map(|&x| if x > 0.0 { -x * (x.ln() + h) } else { 0.0 })
        .collect();
    (h, g)
}

fn entropy_factor(cfg: &LossConfig) -> f64 {
    if cfg.kind != LossKind::Entropic {
        return 0.0;
    }
    match cfg.entropy_sign {
        EntropySign::Max => -cfg.entropy_weight,
        EntropySign::PaperLiteral => cfg.entropy_weight,
    }
}

fn check_labels(model: &ToyModel, batch: &Batch<'_>) -> Result<()> {
    if let Some((_, y)) = batch.clean.iter().find(|(_, y)| *y >= model.n_classes()) {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    Ok(())
}

/// Mean supervised loss over `clean`, plus `∓λ·mean H` over `invalid` for
/// the entropic kind.
pub fn loss(model: &ToyModel, batch: &Batch<'_>, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    check_labels(model, batch)?;
    let t = model.temperature();
    let mut total = 0.0;
    if !batch.clean.is_empty() {
        let s: f64 = batch
            .clean
            .iter()
            .map(|(enc, y)| supervised(&softmax(&model.logits(enc), t), *y, cfg).0)
            .sum();
        total += s / batch.clean.len() as f64;
    }
    let factor = entropy_factor(cfg);
    if factor != 0.0 && !batch.invalid.is_empty() {
        let h: f64 = batch
            .invalid
            .iter()
            .map(|enc| entropy(&softmax(&model.logits(enc), t)).0)
            .sum();
        total += factor * h / batch.invalid.len() as f64;
    }
    Ok(total)
}

/// Exact gradients of [`loss`] for every parameter and token occurrence.
pub fn grad(model: &ToyModel, batch: &Batch<'_>, cfg: &LossConfig) -> Result<Gradients> {
    cfg.validate()?;
    check_labels(model, batch)?;
    let d = model.dim();
    let n = model.n_classes();
    let t = model.temperature();
    let mut g = Gradients {
        loss: 0.0,
        emb: vec![0.0; model.emb.len()],
        head: vec![0.0; model.head.len()],
        bias: vec![0.0; n],
        tokens: Vec::with_capacity(batch.clean.len() + batch.invalid.len()),
    };
    let factor = entropy_factor(cfg);

    let clean_w = if batch.clean.is_empty() {
        0.0
    } else {
        1.0 / batch.clean.len() as f64
    };
    let inv_w = if factor == 0.0 || batch.invalid.is_empty() {
        0.0
    } else {
        factor / batch.invalid.len() as f64
    };

    let items = batch
        .clean
        .iter()
        .map(|(e, y)| (e, Some(*y)))
        .chain(batch.invalid.iter().map(|e| (e, None)));
    for (enc, label) in items {
        let z = model.logits(enc);
        let p = softmax(&z, t);
        let (l, gu, w) = match label {
            Some(y) => {
                let (l, gu) = supervised(&p, y, cfg);
                (l, gu, clean_w)
            }
            None => {
                let (h, gu) = entropy(&p);
                (h, gu, inv_w)
            }
        };
        g.loss += w * l;
        if w == 0.0 {
            g.tokens.push(enc.sides.iter().map(|ids| vec![vec![0.0; d]; ids.len()]).collect());
            continue;
        }
        let dz: Vec<f64> = gu.iter().map(|v| w * v / t).collect();
        let pooled = model.pooled(enc);
        for (r, pr) in pooled.iter().enumerate() {
            for c in 0..n {
                g.head[r * n + c] += pr * dz[c];
            }
        }
        for c in 0..n {
            g.bias[c] += dz[c];
        }
        let dpooled: Vec<f64> = (0..pooled.len())
            .map(|r| (0..n).map(|c| model.head[r * n + c] * dz[c]).sum())
            .collect();
        let mut per_side = Vec::with_capacity(enc.sides.len());
        for (s, ids) in enc.sides.iter().enumerate() {
            let inv_len = 1.0 / ids.len() as f64;
            let dt: Vec<f64> = dpooled[s * d..(s + 1) * d].iter().map(|v| v * inv_len).collect();
            for &id in ids {
                for (acc, v) in g.emb[id * d..(id + 1) * d].iter_mut().zip(&dt) {
                    *acc += v;
                }
            }
            per_side.push(vec![dt; ids.len()]);
        }
        g.tokens.push(per_side);
    }
    Ok(g)
}
