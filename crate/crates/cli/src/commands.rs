//! One function per subcommand. Each reads the resolved [`Context`],
//! writes its artifacts under the output directory and returns a short
//! human-readable summary for stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use saladbench::corpus::{load_dataset, write_records, DataFormat, Dataset, Example};
use saladbench::metrics::{
    self, build_report, transform_row, MetricsReport, Provenance, ReportMeta, ReportRow,
    DEFAULT_ECE_BINS,
};
use saladbench::mitigate::{run_strategy, transfer_matrix, MitigationData, MitigationRun};
use saladbench::providers::{write_predictions, EmbeddedProvider, Prediction, Provider};
use saladbench::toyclf::{self, fit_temperature, save_model};
use saladbench::xform::statistical::{PbsmtGenerators, PbsmtModel, build_parallel_corpus};
use saladbench::xform::{TransformEngine, TransformKind, TransformSpec};
use saladbench::{Error, Result};
use serde::Serialize;

use crate::context::{Context, ORIGINAL_SET};

pub const TRANSFORMED_DIR: &str = "transformed";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const MODEL_FILE: &str = "model.json";
pub const GENERATORS_DIR: &str = "generators";

/// File stem of one transformed set: `sort`, or `shuffle-seed3` for
/// multi-seed kinds.
pub fn set_name(kind: TransformKind, seed: u64, multi_seed: bool) -> String {
    if multi_seed {
        format!("{kind}-seed{seed}")
    } else {
        kind.to_string()
    }
}

/// The seed variants a kind is run with.
fn seeds_for(ctx: &Context, kind: TransformKind) -> Vec<u64> {
    if kind == TransformKind::Shuffle {
        ctx.cfg.shuffle_seeds.clone()
    } else {
        vec![ctx.cfg.seed]
    }
}

/// Transformed variants of one kind, or the reason there are none.
enum KindSets {
    Ready(Vec<(u64, Vec<Example>)>),
    Undefined(String),
}

fn transformed_sets(
    ctx: &Context,
    eval: &Dataset,
    engine: &TransformEngine<'_>,
) -> Result<Vec<(TransformKind, KindSets)>> {
    let mut out = Vec::new();
    for &kind in &ctx.cfg.transforms {
        if !kind.applicable(eval.task_kind) {
            out.push((kind, KindSets::Undefined("not defined for single-text tasks".into())));
            continue;
        }
        if let Err(e) = engine.check(kind) {
            log::warn!("{kind}: skipped: {e}");
            out.push((kind, KindSets::Undefined(e.to_string())));
            continue;
        }
        let mut variants = Vec::new();
        for seed in seeds_for(ctx, kind) {
            let spec = TransformSpec::new(kind, eval.task_kind).with_seed(seed).with_r(ctx.cfg.r);
            let batch = engine.apply_batch(&eval.examples, &spec)?;
            log_skips(kind, &batch.skipped);
            variants.push((seed, batch.transformed.into_iter().map(|t| t.example).collect()));
        }
        out.push((kind, KindSets::Ready(variants)));
    }
    Ok(out)
}

/// One warning per kind; the individual reasons go to the debug log.
fn log_skips(kind: TransformKind, skipped: &[(String, Error)]) {
    if let Some((id, e)) = skipped.first() {
        log::warn!("{kind}: {} example(s) skipped, first `{id}`: {e}", skipped.len());
    }
    for (id, e) in skipped.iter().skip(1) {
        log::debug!("{kind}: example `{id}` skipped: {e}");
    }
}

/// The vocabulary Replace draws from: the model's if it exposes one,
/// otherwise the words of the available data.
fn replacement_vocabulary(provider: &dyn Provider, train: Option<&Dataset>, eval: &Dataset) -> Vec<String> {
    provider
        .vocabulary()
        .or_else(|| train.map(Dataset::vocabulary))
        .unwrap_or_else(|| eval.vocabulary())
}

pub fn transform(ctx: &Context) -> Result<String> {
    let eval = ctx.eval_set()?;
    let train = ctx.optional_train_set()?;
    let needs_saliency = ctx.cfg.transforms.iter().any(|k| k.needs_saliency());
    let providers = if needs_saliency {
        Some(ctx.providers(train.as_ref())?)
    } else {
        None
    };
    let saliency = providers.as_ref().map(|p| p.get(ORIGINAL_SET)).transpose()?;
    let generators = if ctx.cfg.transforms.contains(&TransformKind::Pbsmt) {
        ctx.generators(train.as_ref())?
    } else {
        None
    };
    let mut engine = TransformEngine::new(eval.task_kind);
    if let Some(p) = saliency.as_deref() {
        engine = engine
            .with_saliency(p)
            .with_vocabulary(replacement_vocabulary(p, train.as_ref(), &eval));
    }
    if let Some(g) = &generators {
        engine = engine.with_generators(g);
    }
    let dir = ctx.subdir(TRANSFORMED_DIR)?;
    let format = ctx.output_format();
    let mut summary = String::new();
    for (kind, sets) in transformed_sets(ctx, &eval, &engine)? {
        match sets {
            KindSets::Undefined(why) => {
                let _ = writeln!(summary, "{kind}: skipped ({why})");
            }
            KindSets::Ready(variants) => {
                let multi = variants.len() > 1;
                for (seed, examples) in variants {
                    let path = dir.join(format!("{}.{}", set_name(kind, seed, multi), format.extension()));
                    let spec = TransformSpec::new(kind, eval.task_kind).with_seed(seed).with_r(ctx.cfg.r);
                    let records: Vec<_> = examples
                        .iter()
                        .map(|e| {
                            let mut r = saladbench::corpus::Record::from_example(e, &eval.labels);
                            r.source_id = Some(e.id.clone());
                            r.transform = Some(spec.tag());
                            r
                        })
                        .collect();
                    write_records(&path, format, &records)?;
                    let _ = writeln!(summary, "{kind}: {} rows -> {}", records.len(), path.display());
                }
            }
        }
    }
    Ok(summary)
}

fn read_transformed(ctx: &Context, dir: &Path, eval: &Dataset) -> Result<Vec<(TransformKind, KindSets)>> {
    let mut out = Vec::new();
    for &kind in &ctx.cfg.transforms {
        if !kind.applicable(eval.task_kind) {
            out.push((kind, KindSets::Undefined("not defined for single-text tasks".into())));
            continue;
        }
        let seeds = seeds_for(ctx, kind);
        let multi = seeds.len() > 1;
        let mut variants = Vec::new();
        for seed in seeds {
            let stem = set_name(kind, seed, multi);
            let path = [DataFormat::Tsv, DataFormat::Jsonl]
                .into_iter()
                .map(|f| dir.join(format!("{stem}.{}", f.extension())))
                .find(|p| p.exists());
            if let Some(path) = path {
                let ds = load_dataset(&path, DataFormat::from_path(&path), &eval.labels, eval.task_kind)?;
                variants.push((seed, ds.dataset.examples));
            }
        }
        if variants.is_empty() {
            log::warn!("{kind}: no transformed file in {}", dir.display());
            out.push((kind, KindSets::Undefined("no transformed file".into())));
        } else {
            out.push((kind, KindSets::Ready(variants)));
        }
    }
    Ok(out)
}

fn gold(examples: &[Example]) -> Option<Vec<usize>> {
    examples.iter().map(|e| e.gold_label).collect()
}

/// Predicts on the evaluation set and every transformed set, and writes
/// `report.json`, `report.csv` and `report.md`. Transformed sets come from
/// `transformed` when given, else they are produced inline.
pub fn evaluate(ctx: &Context, transformed: Option<&Path>) -> Result<String> {
    let eval = ctx.eval_set()?;
    let train = ctx.optional_train_set()?;
    let providers = ctx.providers(train.as_ref())?;
    let original_provider = providers.get(ORIGINAL_SET)?;
    let generators;
    let sets = match transformed {
        Some(dir) => read_transformed(ctx, dir, &eval)?,
        None => {
            generators = if ctx.cfg.transforms.contains(&TransformKind::Pbsmt) {
                ctx.generators(train.as_ref())?
            } else {
                None
            };
            let mut engine = TransformEngine::new(eval.task_kind);
            if original_provider.descriptor().supports_saliency {
                engine = engine
                    .with_saliency(&*original_provider)
                    .with_vocabulary(replacement_vocabulary(&*original_provider, train.as_ref(), &eval));
            }
            if let Some(g) = &generators {
                engine = engine.with_generators(g);
            }
            transformed_sets(ctx, &eval, &engine)?
        }
    };

    let pred_dir = ctx.subdir(PREDICTIONS_DIR)?;
    let original = original_provider.predict_batch(&eval.examples)?;
    write_predictions(&pred_dir.join(format!("{ORIGINAL_SET}.jsonl")), &original)?;
    let default_label = eval.labels.default_label();
    let mut rows = Vec::new();
    let mut seeds = vec![ctx.cfg.seed];
    for (kind, s) in sets {
        match s {
            KindSets::Undefined(why) => rows.push(ReportRow::undefined(kind, why)),
            KindSets::Ready(variants) => {
                let multi = variants.len() > 1;
                let mut preds: Vec<(u64, Vec<Prediction>)> = Vec::new();
                for (seed, examples) in variants {
                    let name = set_name(kind, seed, multi);
                    let p = providers.get(&name)?.predict_batch(&examples)?;
                    write_predictions(&pred_dir.join(format!("{name}.jsonl")), &p)?;
                    if !seeds.contains(&seed) {
                        seeds.push(seed);
                    }
                    preds.push((seed, p));
                }
                if preds.iter().all(|(_, p)| p.is_empty()) {
                    rows.push(ReportRow::undefined(kind, "no transformable examples"));
                } else {
                    rows.push(transform_row(kind, &original, &preds, default_label)?);
                }
            }
        }
    }
    let gold = gold(&eval.examples);
    let meta = ReportMeta {
        n_classes: eval.labels.n_classes(),
        original_accuracy: gold.as_ref().map(|g| metrics::accuracy(&original, g)).transpose()?,
        original_confidence: metrics::mean_confidence(&original)?,
        ece: gold
            .as_ref()
            .map(|g| metrics::ece(&original, g, DEFAULT_ECE_BINS))
            .transpose()?,
        provenance: Provenance {
            provider: original_provider.descriptor(),
            seeds,
            datasets: ctx.checksums()?,
            config_hash: Some(ctx.config_hash.clone()),
        },
    };
    let report = build_report(rows, meta)?;
    write_report(ctx, &report)?;
    Ok(report.to_markdown())
}

fn write_report(ctx: &Context, report: &MetricsReport) -> Result<()> {
    ctx.write("report.json", &report.to_json()?)?;
    ctx.write("report.csv", &report.to_csv())?;
    ctx.write("report.md", &report.to_markdown())?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct TrainSummary {
    loss: saladbench::toyclf::LossKind,
    epochs: usize,
    train_examples: usize,
    eval_accuracy: Option<f64>,
    eval_ece: Option<f64>,
    config_hash: String,
}

pub fn train(ctx: &Context) -> Result<String> {
    let train = ctx.train_set()?;
    let model = toyclf::train(&train, &ctx.cfg.loss, &ctx.cfg.train, None)?;
    save_model(&model, &ctx.out.join(MODEL_FILE))?;
    let (eval_accuracy, eval_ece) = match ctx.data.eval.as_ref() {
        Some(_) => {
            let eval = ctx.eval_set()?;
            let preds = EmbeddedProvider::new(model).predict_batch(&eval.examples)?;
            match gold(&eval.examples) {
                Some(g) => (
                    Some(metrics::accuracy(&preds, &g)?),
                    Some(metrics::ece(&preds, &g, DEFAULT_ECE_BINS)?),
                ),
                None => (None, None),
            }
        }
        None => (None, None),
    };
    let summary = TrainSummary {
        loss: ctx.cfg.loss.kind,
        epochs: ctx.cfg.train.epochs,
        train_examples: train.len(),
        eval_accuracy,
        eval_ece,
        config_hash: ctx.config_hash.clone(),
    };
    ctx.write("train.json", &to_json(&summary)?)?;
    let mut s = format!("model -> {}\n", ctx.out.join(MODEL_FILE).display());
    if let (Some(a), Some(e)) = (eval_accuracy, eval_ece) {
        let _ = writeln!(s, "eval accuracy {a:.2}  ECE {e:.4}");
    }
    Ok(s)
}

#[derive(Serialize)]
struct CalibrationSummary {
    temperature: f64,
    ece_before: f64,
    ece_after: f64,
    nll_before: f64,
    nll_after: f64,
    config_hash: String,
}

/// Fits a temperature on the evaluation set and reports ECE before and
/// after scaling.
pub fn calibrate(ctx: &Context) -> Result<String> {
    let eval = ctx.eval_set()?;
    let train = ctx.optional_train_set()?;
    let mut model = match &train {
        Some(t) => ctx.model_or_train(t)?,
        None => ctx.model()?,
    };
    let g = gold(&eval.examples)
        .ok_or_else(|| Error::InvalidArgument("calibration needs gold labels on every example".into()))?;
    let logits: Vec<Vec<f64>> = eval
        .examples
        .iter()
        .map(|e| Ok(model.logits(&model.encode(e)?)))
        .collect::<Result<_>>()?;
    let before = EmbeddedProvider::new(model.clone()).predict_batch(&eval.examples)?;
    let t = fit_temperature(&model, &eval.examples)?;
    model.set_temperature(t)?;
    let after = EmbeddedProvider::new(model.clone()).predict_batch(&eval.examples)?;
    save_model(&model, &ctx.out.join(MODEL_FILE))?;
    let summary = CalibrationSummary {
        temperature: t,
        ece_before: metrics::ece(&before, &g, DEFAULT_ECE_BINS)?,
        ece_after: metrics::ece(&after, &g, DEFAULT_ECE_BINS)?,
        nll_before: toyclf::nll_at_temperature(&logits, &g, 1.0),
        nll_after: toyclf::nll_at_temperature(&logits, &g, t),
        config_hash: ctx.config_hash.clone(),
    };
    ctx.write("calibration.json", &to_json(&summary)?)?;
    Ok(format!(
        "temperature {t:.2}\nECE {:.4} -> {:.4}\nNLL {:.4} -> {:.4}\n",
        summary.ece_before, summary.ece_after, summary.nll_before, summary.nll_after
    ))
}

#[derive(Serialize)]
struct MitigationOutput<'a> {
    #[serde(flatten)]
    run: &'a MitigationRun,
    config_hash: &'a str,
}

fn mitigation_csv(run: &MitigationRun) -> String {
    let mut s = String::from("transform,detected,mean_confidence,baseline_mean_confidence,n\n");
    for d in &run.report.per_transform {
        let base = run
            .baseline
            .per_transform
            .iter()
            .find(|b| b.transform == d.transform)
            .map_or(f64::NAN, |b| b.mean_confidence);
        let _ = writeln!(s, "{},{:.2},{:.2},{:.2},{}", d.transform, d.detected, d.mean_confidence, base, d.n);
    }
    let _ = writeln!(
        s,
        "all,{:.2},{:.2},{:.2},{}",
        run.report.invalid_detected,
        run.report.invalid_mean_confidence,
        run.baseline.invalid_mean_confidence,
        run.report.per_transform.iter().map(|d| d.n).sum::<usize>()
    );
    s
}

fn mitigation_markdown(run: &MitigationRun) -> String {
    let mut s = format!("# Mitigation: {}\n\n", run.strategy);
    s.push_str("| | Clean acc. | % Invalid | Invalid conf. |\n|---|---|---|---|\n");
    let _ = writeln!(
        s,
        "| Baseline | {:.2} | {:.2} | {:.2} |",
        run.baseline.clean_accuracy, run.baseline.invalid_detected, run.baseline.invalid_mean_confidence
    );
    let _ = writeln!(
        s,
        "| {} | {:.2} | {:.2} | {:.2} |",
        run.strategy, run.report.clean_accuracy, run.report.invalid_detected, run.report.invalid_mean_confidence
    );
    if let Some(th) = &run.threshold {
        let _ = writeln!(s, "\nθ = {:.3} at T = {:.2} (feasible: {})", th.theta, run.temperature, th.feasible);
    }
    if let Some(l) = run.entropy_weight {
        let _ = writeln!(s, "λ = {l}");
    }
    s
}

/// Trains and scores one mitigation strategy; optionally also the transfer
/// matrix.
pub fn mitigate(ctx: &Context) -> Result<String> {
    let data = MitigationData::from_split(&ctx.train_set()?, ctx.eval_set()?, ctx.cfg.seed)?;
    let baseline = ctx.model_or_train(&data.train)?;
    let provider = EmbeddedProvider::new(baseline.clone());
    let generators = ctx.generators(Some(&data.train))?;
    let mut engine = TransformEngine::new(data.train.task_kind)
        .with_saliency(&provider)
        .with_vocabulary(data.train.vocabulary());
    if let Some(g) = &generators {
        engine = engine.with_generators(g);
    }
    let mcfg = &ctx.cfg.mitigation;
    let run = run_strategy(&baseline, &data, &engine, mcfg, &TransformKind::ALL, &ctx.cfg.train)?;
    for (kind, why) in &run.skipped {
        log::warn!("{kind}: skipped: {why}");
    }
    if let Some(th) = &run.threshold {
        if !th.feasible {
            log::warn!("no threshold met the accuracy tolerance; using θ = {}", th.theta);
        }
    }
    if let Some(model) = &run.model {
        save_model(model, &ctx.out.join(MODEL_FILE))?;
    }
    ctx.write(
        "report.json",
        &to_json(&MitigationOutput {
            run: &run,
            config_hash: &ctx.config_hash,
        })?,
    )?;
    ctx.write("report.csv", &mitigation_csv(&run))?;
    let mut md = mitigation_markdown(&run);
    if ctx.cfg.transfer_matrix {
        let m = transfer_matrix(&baseline, &data.train, &data.eval, &engine, mcfg, &ctx.cfg.train)?;
        ctx.write("matrix.csv", &m.to_csv())?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "--".to_string(), |x| format!("{x:.2}"));
        let _ = writeln!(
            md,
            "\nTransfer: within-family {}  cross-family {}",
            fmt(m.within_family_mean()),
            fmt(m.cross_family_mean())
        );
    }
    ctx.write("report.md", &md)?;
    Ok(md)
}

/// Trains generators for `label` (or every label) on the training set.
pub fn pbsmt_train(ctx: &Context, label: Option<&str>) -> Result<String> {
    let train = ctx.train_set()?;
    let root = ctx.subdir(GENERATORS_DIR)?;
    let gens = match label {
        Some(name) => {
            let idx = train
                .labels
                .index_of(name)
                .or_else(|| name.parse().ok().filter(|&i| i < train.labels.n_classes()))
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label `{name}`")))?;
            let corpus = build_parallel_corpus(&train, idx, ctx.cfg.pbsmt.min_pairs)?;
            let mut g = PbsmtGenerators::default();
            g.insert(PbsmtModel::train(&corpus, ctx.cfg.pbsmt)?);
            g
        }
        None => PbsmtGenerators::train_all(&train, ctx.cfg.pbsmt)?,
    };
    if gens.is_empty() {
        return Err(Error::InsufficientData("no label had enough data for a generator".into()));
    }
    gens.save(&root)?;
    let labels: Vec<String> = gens.labels().map(|l| l.to_string()).collect();
    Ok(format!("generators for labels [{}] -> {}\n", labels.join(", "), root.display()))
}

/// Writes the PBSMT-transformed evaluation set.
pub fn pbsmt_generate(ctx: &Context) -> Result<String> {
    let eval = ctx.eval_set()?;
    let dir = ctx.cfg.generators.as_ref().ok_or_else(|| {
        Error::Config("pbsmt generate needs --generators (from `pbsmt train`)".into())
    })?;
    let gens = PbsmtGenerators::load(dir)?;
    let engine = TransformEngine::new(eval.task_kind).with_generators(&gens);
    let spec = TransformSpec::new(TransformKind::Pbsmt, eval.task_kind).with_seed(ctx.cfg.seed);
    let batch = engine.apply_batch(&eval.examples, &spec)?;
    log_skips(TransformKind::Pbsmt, &batch.skipped);
    let out_dir = ctx.subdir(TRANSFORMED_DIR)?;
    let format = ctx.output_format();
    let path = out_dir.join(format!("pbsmt.{}", format.extension()));
    let records: Vec<_> = batch.transformed.iter().map(|t| t.to_record(&eval.labels)).collect();
    write_records(&path, format, &records)?;
    Ok(format!("pbsmt: {} rows -> {}\n", records.len(), path.display()))
}

/// Re-renders a saved metrics report.
pub fn report(input: &Path, format: &str) -> Result<String> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let report = MetricsReport::from_json(&text)?;
    match format {
        "md" | "markdown" => Ok(report.to_markdown()),
        "csv" => Ok(report.to_csv()),
        "json" => report.to_json(),
        other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
    }
}
