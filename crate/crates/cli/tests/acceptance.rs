//! Acceptance battery: one line per criterion, nonzero exit on any failure.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use htl_core::suites::{self, BatteryConfig, SuiteOutcome};
use serde_json::Value;

/// Wall-clock ceilings per criterion; `None` means unlimited.
const TIME_LIMITS: [(u32, Option<u64>); 9] = [
    (1, Some(10)),
    (2, Some(5)),
    (3, None),
    (4, Some(60)),
    (5, None),
    (6, None),
    (7, Some(300)),
    (8, None),
    (9, None),
];
const VERIFY_ALL_LIMIT: Duration = Duration::from_secs(15 * 60);
/// Criteria whose refinement-stability flag is part of the requirement.
const STABILITY_REQUIRED: [u32; 4] = [4, 5, 7, 9];

struct Verdict {
    id: u32,
    name: String,
    passed: bool,
    detail: String,
}

fn judge(outcome: &SuiteOutcome, elapsed: Duration, limit: Option<u64>) -> Verdict {
    let mut problems = Vec::new();
    if !outcome.passed {
        problems.push("suite failed".to_string());
    }
    if STABILITY_REQUIRED.contains(&outcome.id) && !outcome.stable {
        problems.push("refinement-unstable".to_string());
    }
    if let Some(s) = limit {
        if elapsed > Duration::from_secs(s) {
            problems.push(format!("runtime {:.1}s over {s}s", elapsed.as_secs_f64()));
        }
    }
    Verdict {
        id: outcome.id,
        name: outcome.name.clone(),
        passed: problems.is_empty(),
        detail: format!(
            "{} [{:.1}s]{}",
            outcome.summary,
            elapsed.as_secs_f64(),
            if problems.is_empty() { String::new() } else { format!(" <- {}", problems.join(", ")) }
        ),
    }
}

fn verify_all() -> Verdict {
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_htl"))
        .arg("verify-all")
        .arg("--out")
        .arg(dir.path())
        .output()
        .expect("spawn htl");
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    if out.status.code() != Some(0) {
        problems.push(format!("exit status {:?}", out.status.code()));
    }
    if elapsed > VERIFY_ALL_LIMIT {
        problems.push(format!("runtime {:.0}s over {}s", elapsed.as_secs_f64(), VERIFY_ALL_LIMIT.as_secs()));
    }
    match std::fs::read_to_string(dir.path().join("report.json")) {
        Ok(text) => match serde_json::from_str::<Value>(&text) {
            Ok(report) => {
                for key in ["task", "passed", "config", "result", "warnings", "tables"] {
                    if report.get(key).is_none() {
                        problems.push(format!("report.json lacks `{key}`"));
                    }
                }
                let suites = report["result"].as_array().map_or(0, |a| a.len());
                if suites != 9 {
                    problems.push(format!("report.json holds {suites} suites"));
                }
                if report["config"]["scheme"].is_null() {
                    problems.push("report.json config lacks the scheme".into());
                }
                if let Some(tables) = report["tables"].as_array() {
                    for t in tables.iter().filter_map(|t| t.as_str()) {
                        if !dir.path().join(t).exists() {
                            problems.push(format!("table {t} not written"));
                        }
                    }
                }
            }
            Err(e) => problems.push(format!("report.json unparsable: {e}")),
        },
        Err(e) => problems.push(format!("report.json missing: {e}")),
    }
    Verdict {
        id: 10,
        name: "verify-all".into(),
        passed: problems.is_empty(),
        detail: format!(
            "exit {:?} [{:.1}s]{}",
            out.status.code(),
            elapsed.as_secs_f64(),
            if problems.is_empty() { String::new() } else { format!(" <- {}", problems.join(", ")) }
        ),
    }
}

fn main() -> ExitCode {
    let cfg = BatteryConfig::default();
    let mut verdicts = Vec::new();
    for (id, name, run) in suites::SUITES {
        let limit = TIME_LIMITS.iter().find(|(i, _)| *i == id).and_then(|(_, l)| *l);
        let start = Instant::now();
        let v = match run(&cfg) {
            Ok(outcome) => judge(&outcome, start.elapsed(), limit),
            Err(e) => Verdict {
                id,
                name: name.into(),
                passed: false,
                detail: format!("error: {e}"),
            },
        };
        println!("{} criterion {:>2} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
        verdicts.push(v);
    }
    let v = verify_all();
    println!("{} criterion {:>2} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    verdicts.push(v);
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
