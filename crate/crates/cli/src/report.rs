//! Machine-readable validation report (JSON).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the analytic side could not be evaluated.
    pub measured: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= threshold`.
    pub fn at_most(name: &str, measured: Option<f64>, threshold: f64, detail: String) -> Self {
        let measured = measured.filter(|m| m.is_finite());
        let passed = measured.is_some_and(|m| m <= threshold);
        Check { name: name.to_string(), measured, threshold, passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub experiment: String,
    pub git_revision: String,
    pub seed: u64,
    pub drops: u64,
    /// Config keys overridden on the analytic side only.
    pub analytic_overrides: Vec<(String, String)>,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new(
        experiment: &str,
        git_revision: &str,
        seed: u64,
        drops: u64,
        analytic_overrides: Vec<(String, String)>,
        checks: Vec<Check>,
    ) -> Self {
        ValidationReport {
            experiment: experiment.to_string(),
            git_revision: git_revision.to_string(),
            seed,
            drops,
            analytic_overrides,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
