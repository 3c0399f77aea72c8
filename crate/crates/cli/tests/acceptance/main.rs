//! Acceptance suite: every headline criterion of the toolkit, each judged
//! at a tolerance pinned in this file tree, each reported on one line.
//!
//! Runs without the libtest harness so the PASS/FAIL lines always print.
//! The process exits non-zero if any criterion fails.

mod calibration;
mod determinism;
mod gradient;
mod lexical;
mod metric_oracles;
mod mitigation;
mod pbsmt;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// What a criterion found, whether or not it passed.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Verdict {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub name: &'static str,
    /// Wall-clock budget; exceeding it fails the criterion.
    pub budget: Option<Duration>,
    /// Whether the shared corpora fixture is built before the clock starts.
    pub uses_corpora: bool,
    pub run: fn(&fixtures::Toy) -> Verdict,
}

fn criteria() -> Vec<Criterion> {
    vec![
        lexical::CRITERION,
        lexical::FIGURE_ONE,
        gradient::CRITERION,
        permutation::CRITERION,
        metric_oracles::CRITERION,
        calibration::CRITERION,
        mitigation::CRITERION,
        mitigation::TRANSFER,
        pbsmt::CRITERION,
        determinism::CRITERION,
    ]
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let toy = fixtures::Toy::new();
    let mut failed = Vec::new();
    for c in criteria() {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        if c.uses_corpora {
            let start = Instant::now();
            if panic::catch_unwind(AssertUnwindSafe(|| toy.corpora())).is_err() {
                println!("FAIL {:<34} fixture could not be built", c.name);
                failed.push(c.name);
                continue;
            }
            let built = start.elapsed();
            if built > Duration::from_millis(50) {
                println!("     toy fixture built in {:.2}s", built.as_secs_f64());
            }
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(|| (c.run)(&toy)));
        let elapsed = start.elapsed();
        let mut v = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if let Some(budget) = c.budget {
            if elapsed > budget {
                v.pass = false;
                v.detail.push_str(&format!("; over budget of {budget:?}"));
            }
        }
        println!(
            "{} {:<34} {:>7.2}s  {}",
            if v.pass { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(c.name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        ExitCode::FAILURE
    }
}
