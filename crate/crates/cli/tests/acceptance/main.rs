//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p gradepipe-cli --test acceptance`.

mod calibrated;
mod end_to_end;
mod highlighting;
mod identity;
mod split;
mod tiling;
mod timing;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Outcome of one criterion: a short detail line, or the reason it failed.
pub type Check = Result<String, String>;

/// Fails with `msg` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "calibrated fixture", limit: Some(Duration::from_secs(1)), run: calibrated::run },
        Criterion { name: "trimming oracle", limit: Some(Duration::from_secs(5)), run: trimming::run },
        Criterion { name: "split invariants", limit: Some(Duration::from_secs(5)), run: split::run },
        Criterion { name: "geometry tiling", limit: Some(Duration::from_secs(5)), run: tiling::run },
        Criterion { name: "highlight soundness and completeness", limit: Some(Duration::from_secs(10)), run: highlighting::run },
        Criterion { name: "identity mapping", limit: None, run: identity::run },
        Criterion { name: "timing contract", limit: None, run: timing::run },
        Criterion { name: "end-to-end pipeline", limit: Some(Duration::from_secs(60)), run: end_to_end::run },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => {
                Err(format!("took {:.2} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {} ({:.2} s): {detail}", c.name, elapsed.as_secs_f64()),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {} ({:.2} s): {reason}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
