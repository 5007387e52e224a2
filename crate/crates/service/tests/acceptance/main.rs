//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs as a plain binary so the report is always printed.

// NaN must fail `ensure!`, hence the negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../../core/tests/support/mask_oracle.rs"]
mod mask_oracle;
#[path = "../support/mod.rs"]
mod support;

mod alignment;
mod api;
mod ingestion;
mod manual;
mod mask;
mod rendering;
mod schema;
mod store;
mod webcam;

use std::panic::AssertUnwindSafe;
use std::time::Instant;

/// Detail line on success, reason on failure.
pub type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn run(name: &str, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag}  {name:<22} {detail} [{secs:.2} s]");
    ok
}

fn main() {
    let _ = env_logger::builder().is_test(true).filter_level(log::LevelFilter::Error).try_init();
    let criteria: [Criterion; 8] = [
        ("rendering-oracle", rendering::check),
        ("alignment-round-trip", alignment::check),
        ("snow-mask-exactness", mask::check),
        ("manual-correction", manual::check),
        ("ingestion-filters", ingestion::check),
        ("webcam-daily", webcam::check),
        ("store", store::check),
        ("api-contract", api::check),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        if !run(name, f) {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
