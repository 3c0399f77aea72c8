//! Two CLI runs with the same configuration write byte-identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::fixtures::Toy;
use crate::{Criterion, Verdict};

pub const CRITERION: Criterion = Criterion {
    name: "cli determinism",
    budget: None,
    uses_corpora: false,
    run,
};

const CONFIG: &str = r#"{
  "seed": 7,
  "data": { "bundled": "sentiment" },
  "shuffle_seeds": [0, 1],
  "train": { "epochs": 3 },
  "mitigation": { "strategy": "entropic-threshold", "epochs": 3, "entropy_weight": 0.5 }
}"#;

fn saladbench(config: &Path, out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_saladbench"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`saladbench {}` exited with {}: {}",
            args.join(" "),
            status.status,
            String::from_utf8_lossy(&status.stderr)
        ))
    }
}

/// Runs transform, evaluate on the transformed sets, and mitigate.
fn pipeline(config: &Path, root: &Path) -> Result<(), String> {
    let transformed = root.join("transform");
    saladbench(config, &transformed, &["transform"])?;
    let sets = transformed.join("transformed");
    saladbench(
        config,
        &root.join("evaluate"),
        &["evaluate", "--transformed", sets.to_str().expect("utf-8 path")],
    )?;
    saladbench(config, &root.join("mitigate"), &["mitigate"])
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).expect("readable output file"));
            }
        }
    }
    out
}

fn run(_: &Toy) -> Verdict {
    let tmp = tempfile::tempdir().expect("temp dir");
    let config = tmp.path().join("run.json");
    fs::write(&config, CONFIG).expect("config written");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for root in [&a, &b] {
        if let Err(e) = pipeline(&config, root) {
            return Verdict::new(false, e);
        }
    }
    let (fa, fb) = (files(&a), files(&b));
    if fa.keys().ne(fb.keys()) {
        return Verdict::new(false, format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()));
    }
    let differing: Vec<String> = fa
        .iter()
        .filter(|(k, v)| fb[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    Verdict::new(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files identical across two runs", fa.len())
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}
