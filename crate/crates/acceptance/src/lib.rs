//! A small runner that prints one pass/fail line per acceptance check.

use std::time::{Duration, Instant};

/// What a check found, in one line.
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub struct Check {
    pub id: u32,
    pub name: &'static str,
    /// Wall-clock budget, if the check has one.
    pub budget: Option<Duration>,
    pub run: fn() -> Verdict,
}

pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub elapsed: Duration,
    pub line: String,
}

/// Runs one check. A panic counts as a failure and over-budget runs fail.
pub fn run_check(check: &Check) -> Outcome {
    let start = Instant::now();
    let verdict = std::panic::catch_unwind(check.run).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Verdict::new(false, format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let mut passed = verdict.passed;
    let mut detail = verdict.detail;
    if let Some(budget) = check.budget {
        if elapsed > budget {
            passed = false;
            detail.push_str(&format!("; over budget {:.1} s", budget.as_secs_f64()));
        }
    }
    let tag = if passed { "PASS" } else { "FAIL" };
    let line = format!(
        "[{tag}] {:>2} {}: {detail} ({:.2} s)",
        check.id,
        check.name,
        elapsed.as_secs_f64()
    );
    Outcome {
        id: check.id,
        name: check.name,
        passed,
        elapsed,
        line,
    }
}

/// Runs every check in order, printing as it goes, and returns the outcomes.
pub fn run_all(checks: &[Check]) -> Vec<Outcome> {
    checks
        .iter()
        .map(|c| {
            let out = run_check(c);
            println!("{}", out.line);
            out
        })
        .collect()
}
