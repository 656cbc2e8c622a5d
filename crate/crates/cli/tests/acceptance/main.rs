//! Acceptance checks, one line of PASS/FAIL per criterion.
//!
//! Run a subset by passing name fragments:
//! `cargo test --test acceptance -- throughput`.

/// `Err` with a message unless `cond` holds.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

mod budgets;
mod determinism;
mod loss_labels;
mod oracle;
mod ordering;
mod throughput;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { name: "equation unit suite", run: equations::run },
    Criterion { name: "loss-label thresholds", run: loss_labels::run },
    Criterion { name: "loss-prediction and phase-2 values", run: loss_labels::run_values },
    Criterion { name: "budget identity", run: budgets::run },
    Criterion { name: "pipeline equivalence", run: pipeline::run },
    Criterion { name: "CLI determinism", run: determinism::run },
    Criterion { name: "superpixel and clustering properties", run: superpixels::run },
    Criterion { name: "throughput", run: throughput::run },
    Criterion { name: "AL ordering experiment", run: ordering::run },
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {} ({secs:.1} s): {detail}", c.name),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {} ({secs:.1} s): {reason}", c.name);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
