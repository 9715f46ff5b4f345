//! Acceptance suite: runs every criterion at full size and prints one PASS/FAIL line each.
//!
//! `ACCEPTANCE_CRITERIA=2,3,11` restricts the run and `ACCEPTANCE_BUDGET=0.1` scales the
//! Monte Carlo sample counts; both default to the full suite.
//!
//! Criteria with a known gap are expected to fail. The process exits non-zero when any
//! other criterion fails; a known gap that passes is reported without failing the run.

use std::process::ExitCode;

use rcurrent_core::verify::{run_suite, VerifyConfig};

fn config() -> Result<VerifyConfig, String> {
    let mut cfg = VerifyConfig::default();
    if let Ok(list) = std::env::var("ACCEPTANCE_CRITERIA") {
        cfg.criteria = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<u8>().map_err(|e| format!("bad criterion {s:?}: {e}")))
            .collect::<Result<_, _>>()?;
    }
    if let Ok(b) = std::env::var("ACCEPTANCE_BUDGET") {
        cfg.budget = b.parse().map_err(|e| format!("bad budget {b:?}: {e}"))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cfg = match config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("acceptance: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("acceptance suite: seed {}, budget {}", cfg.seed, cfg.budget);
    let outcomes = match run_suite(&cfg, |o| {
        println!("{}", o.report());
        for n in &o.notes {
            println!("      note: {n}");
        }
    }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("acceptance: suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let unexpected: Vec<u8> = outcomes.iter().filter(|o| !o.passed && o.known_gap.is_none()).map(|o| o.id).collect();
    let closed: Vec<u8> = outcomes.iter().filter(|o| o.passed && o.known_gap.is_some()).map(|o| o.id).collect();
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} criteria pass; unexpected failures: {unexpected:?}; known gaps passing: {closed:?}", outcomes.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
