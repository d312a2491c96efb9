//! Prediction/measurement pairs with tolerances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|measured − prediction| ≤ tolerance`
    Within,
    /// `|measured − prediction| / |prediction| ≤ tolerance`
    RelativeWithin,
    /// `|measured − prediction| > tolerance`
    Separated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub prediction: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub rule: Rule,
    pub pass: bool,
    /// Gating checks decide the `--check` exit status; the rest are recorded
    /// for inspection only.
    pub gate: bool,
}

impl Check {
    pub fn deviation(&self) -> f64 {
        let d = (self.measured - self.prediction).abs();
        match self.rule {
            Rule::RelativeWithin => d / self.prediction.abs(),
            _ => d,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Checks {
    overrides: BTreeMap<String, f64>,
    list: Vec<Check>,
}

impl Checks {
    pub fn new(overrides: BTreeMap<String, f64>) -> Self {
        Checks { overrides, list: Vec::new() }
    }

    fn push(&mut self, name: &str, prediction: f64, measured: f64, tolerance: f64, rule: Rule, gate: bool) {
        let tolerance = self.overrides.get(name).copied().unwrap_or(tolerance);
        let d = (measured - prediction).abs();
        let pass = match rule {
            Rule::Within => d <= tolerance,
            Rule::RelativeWithin => d <= tolerance * prediction.abs(),
            Rule::Separated => d > tolerance,
        };
        self.list.push(Check { name: name.to_string(), prediction, measured, tolerance, rule, pass, gate });
    }

    pub fn within(&mut self, name: &str, prediction: f64, measured: f64, tolerance: f64) {
        self.push(name, prediction, measured, tolerance, Rule::Within, true);
    }

    pub fn relative(&mut self, name: &str, prediction: f64, measured: f64, tolerance: f64) {
        self.push(name, prediction, measured, tolerance, Rule::RelativeWithin, true);
    }

    pub fn separated(&mut self, name: &str, prediction: f64, measured: f64, tolerance: f64) {
        self.push(name, prediction, measured, tolerance, Rule::Separated, true);
    }

    /// A yes/no property, encoded as `prediction 1`, `measured 0 | 1`.
    pub fn flag(&mut self, name: &str, holds: bool) {
        self.push(name, 1.0, if holds { 1.0 } else { 0.0 }, 0.0, Rule::Within, true);
    }

    /// Recorded but not gating.
    pub fn info(&mut self, name: &str, prediction: f64, measured: f64, tolerance: f64) {
        self.push(name, prediction, measured, tolerance, Rule::Within, false);
    }

    pub fn list(&self) -> &[Check] {
        &self.list
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.list.iter().filter(|c| c.gate && !c.pass).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_and_overrides() {
        let mut c = Checks::new([("evolve.mu".to_string(), 0.1)].into());
        c.within("evolve.mu", 1.0, 1.05, 0.01);
        c.within("evolve.lambda", 1.0, 1.05, 0.01);
        c.relative("rel", 2.0, 2.3, 0.2);
        c.separated("gap", 0.0, 0.06, 0.05);
        c.flag("flag", false);
        c.info("info", 0.0, 1.0, 0.1);
        let pass: Vec<bool> = c.list().iter().map(|x| x.pass).collect();
        assert_eq!(pass, vec![true, false, true, true, false, false]);
        assert_eq!(c.failures().len(), 2);
        assert!((c.list()[2].deviation() - 0.15).abs() < 1e-12);
    }
}
