//! Oracle-backed validation suites shared by `potflow validate` and the
//! acceptance tests.

pub mod fluid;
pub mod geometry;
pub mod solver;

use std::fmt;
use std::time::Duration;

/// One measured quantity compared against a limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= limit`.
    pub fn at_most(name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_owned(),
            measured,
            limit,
            passed: measured <= limit,
            detail: detail.into(),
        }
    }

    /// Passes when `measured < limit`.
    pub fn below(name: &str, measured: f64, limit: f64, detail: impl Into<String>) -> Self {
        Check {
            passed: measured < limit,
            ..Check::at_most(name, measured, limit, detail)
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (limit {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.limit
        )?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(
            f,
            "suite {}: {} in {:.1}s",
            self.suite,
            if self.passed() { "passed" } else { "FAILED" },
            self.elapsed.as_secs_f64()
        )
    }
}

/// Relative difference `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
