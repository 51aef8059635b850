//! Reporting helpers for the acceptance run.

use std::fmt;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(id: u32, title: &'static str, pass: bool, detail: impl Into<String>) -> Self {
        Self { id, title, pass, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {verdict} {}: {}", self.id, self.title, self.detail)
    }
}

/// Collects checks and prints each as it is recorded.
#[derive(Debug, Default)]
pub struct Report {
    checks: Vec<Check>,
}

impl Report {
    pub fn record(&mut self, check: Check) {
        println!("{check}");
        self.checks.push(check);
    }

    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.pass).count()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn summary(&self) -> String {
        format!("acceptance: {}/{} criteria passed", self.passed(), self.checks.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_one_line() {
        let c = Check::new(3, "identities", true, "max error 1e-16");
        assert_eq!(c.to_string(), "criterion  3 PASS identities: max error 1e-16");
        let mut r = Report::default();
        r.record(c);
        r.record(Check::new(4, "values", false, "off"));
        assert_eq!(r.summary(), "acceptance: 1/2 criteria passed");
        assert!(!r.all_passed());
    }
}
