//! Experiment configuration. Every struct rejects unknown keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nonbloch_core::dynamics::FitWindows;
use nonbloch_core::healing::HealingParams;
use nonbloch_core::model::{self, ModelFile, Preset};
use nonbloch_core::BlochSymbol;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Spectra,
    Saddles,
    Thimbles,
    Evolve,
    LambdaV,
    Crossover,
    Healing,
    Multiband,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Spectra,
        Task::Saddles,
        Task::Thimbles,
        Task::Evolve,
        Task::LambdaV,
        Task::Crossover,
        Task::Healing,
        Task::Multiband,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Spectra => "spectra",
            Task::Saddles => "saddles",
            Task::Thimbles => "thimbles",
            Task::Evolve => "evolve",
            Task::LambdaV => "lambda_v",
            Task::Crossover => "crossover",
            Task::Healing => "healing",
            Task::Multiband => "multiband",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).with_context(|| {
            let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
            format!("unknown task '{s}' (known: {})", names.join(", "))
        })
    }
}

/// Initial wave packet. Sites are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Delta {
        #[serde(default)]
        site: usize,
        #[serde(default)]
        band: usize,
    },
    /// Uniform over sites `0..width`, normalized.
    Flat {
        width: usize,
        #[serde(default)]
        band: usize,
    },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Delta { site: 0, band: 0 }
    }
}

impl InitialState {
    pub fn is_default(&self) -> bool {
        *self == InitialState::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSettings {
    /// Trace length in units of the crossover time.
    #[serde(default = "default_span")]
    pub span: f64,
    /// Spacing of rows in `trace.csv`.
    #[serde(default = "default_record")]
    pub record_every: f64,
    /// Spacing of profiles in `heatmap.csv`.
    #[serde(default = "default_snapshot")]
    pub snapshot_every: f64,
    #[serde(default)]
    pub windows: WindowSettings,
}

fn default_span() -> f64 {
    nonbloch_core::dynamics::TRACE_SPAN
}

fn default_record() -> f64 {
    0.1
}

fn default_snapshot() -> f64 {
    1.0
}

impl Default for TimeSettings {
    fn default() -> Self {
        TimeSettings {
            span: default_span(),
            record_every: default_record(),
            snapshot_every: default_snapshot(),
            windows: WindowSettings::default(),
        }
    }
}

/// Fit windows in units of the crossover time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSettings {
    pub short_start: f64,
    pub short_end: f64,
    pub long_start: f64,
}

impl Default for WindowSettings {
    fn default() -> Self {
        let w = FitWindows::default();
        WindowSettings { short_start: w.short.0, short_end: w.short.1, long_start: w.long_start }
    }
}

impl WindowSettings {
    pub fn fit_windows(&self) -> FitWindows {
        FitWindows { short: (self.short_start, self.short_end), long_start: self.long_start }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaVSettings {
    #[serde(default = "default_v_points")]
    pub points: usize,
}

fn default_v_points() -> usize {
    512
}

impl Default for LambdaVSettings {
    fn default() -> Self {
        LambdaVSettings { points: default_v_points() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverSettings {
    /// Values of `Im t1L` for a crossover-time sweep (chain presets only).
    #[serde(default)]
    pub sweep_t1l: Vec<f64>,
}

/// Complex energy as `[re, im]`.
pub type Energy = [f64; 2];

/// A straight line of `count` energies at fixed `Re E0`, centred on the
/// healing threshold unless `im_center` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanLine {
    pub re: f64,
    pub count: usize,
    pub step: f64,
    #[serde(default)]
    pub im_center: Option<f64>,
}

impl ScanLine {
    pub fn energies(&self, threshold: f64) -> Vec<Energy> {
        let c = self.im_center.unwrap_or(threshold);
        let mid = (self.count as f64 - 1.0) / 2.0;
        (0..self.count).map(|j| [self.re, c + self.step * (j as f64 - mid)]).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealingSettings {
    #[serde(default)]
    pub params: HealingParams,
    /// Edge-state energies (semi-infinite boundary condition construction).
    #[serde(default)]
    pub energies: Vec<Energy>,
    /// Targets for true OBC eigenstates; the nearest eigenvalue is used.
    #[serde(default)]
    pub obc_targets: Vec<Energy>,
    #[serde(default)]
    pub scan: Option<ScanLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelFile>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(default)]
    pub time: TimeSettings,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub lambda_v: LambdaVSettings,
    #[serde(default)]
    pub crossover: CrossoverSettings,
    #[serde(default)]
    pub healing: HealingSettings,
    /// Overrides of check tolerances, by check name.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

/// Config with the symbol and lattice size settled.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub name: String,
    pub symbol: BlochSymbol,
    pub sites: usize,
    pub preset: Option<Preset>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("config: invalid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config: read {}", path.display()))?;
        Self::from_json(&text).with_context(|| path.display().to_string())
    }

    /// Defaults attached to a built-in preset.
    pub fn for_preset(name: &str) -> Result<Self> {
        model::preset(name).with_context(|| format!("model::preset(name = {name})"))?;
        let mut cfg = ExperimentConfig {
            preset: Some(name.to_string()),
            model: None,
            tasks: Vec::new(),
            sites: None,
            time: TimeSettings::default(),
            initial: InitialState::default(),
            lambda_v: LambdaVSettings::default(),
            crossover: CrossoverSettings::default(),
            healing: HealingSettings::default(),
            tolerances: BTreeMap::new(),
        };
        match name {
            "fig6a" => {
                cfg.healing.energies = vec![[-1.0, 0.05], [-1.2, -0.05]];
                cfg.healing.scan = Some(ScanLine { re: -1.0, count: 12, step: 0.02, im_center: None });
            }
            "fig6e" => {
                cfg.healing.obc_targets = vec![[-1.667, 0.2]];
                cfg.healing.scan = Some(ScanLine { re: -1.667, count: 12, step: 0.02, im_center: None });
            }
            "fig7" => cfg.crossover.sweep_t1l = (0..=6).map(|i| 1.0 + 0.1 * i as f64).collect(),
            _ => {}
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_some() == self.model.is_some() {
            bail!("config: exactly one of 'preset' and 'model' is required");
        }
        let t = &self.time;
        if !(t.span > 0.0 && t.record_every > 0.0 && t.snapshot_every > 0.0) {
            bail!("config: time.span, time.record_every and time.snapshot_every must be positive");
        }
        let w = &t.windows;
        if !(0.0 <= w.short_start && w.short_start < w.short_end && w.long_start < t.span) {
            bail!(
                "config: fit windows need 0 ≤ short_start < short_end and long_start < span (got {}, {}, {}, span {})",
                w.short_start,
                w.short_end,
                w.long_start,
                t.span
            );
        }
        if self.lambda_v.points < 3 {
            bail!("config: lambda_v.points must be ≥ 3");
        }
        let h = &self.healing.params;
        if !(h.t1 < h.t2 && h.t2 < h.t_end && h.dt > 0.0) {
            bail!("config: healing needs t1 < t2 < t_end and dt > 0 (got {}, {}, {}, dt {})", h.t1, h.t2, h.t_end, h.dt);
        }
        if let Some(s) = &self.healing.scan {
            if s.count < 2 || !(s.step > 0.0) {
                bail!("config: healing.scan needs count ≥ 2 and step > 0");
            }
        }
        for (k, v) in &self.tolerances {
            if !(v.is_finite() && *v >= 0.0) {
                bail!("config: tolerance '{k}' must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn resolve(self) -> Result<Resolved> {
        self.validate()?;
        let (name, symbol, default_sites, preset) = match (&self.preset, &self.model) {
            (Some(name), None) => {
                let p = model::preset(name).with_context(|| format!("model::preset(name = {name})"))?;
                (name.clone(), p.symbol.clone(), p.size, Some(p))
            }
            (None, Some(m)) => {
                let s = m.to_symbol().context("model::to_symbol(inline model)")?;
                ("model".to_string(), s, 140, None)
            }
            _ => unreachable!("checked by validate"),
        };
        let sites = self.sites.unwrap_or(default_sites);
        Ok(Resolved { config: self, name, symbol, sites, preset })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"preset": "fig2a", "colour": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"preset": "fig2a", "time": {"spam": 2}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"preset": "fig2a", "healing": {"params": {"gamma": 1, "l": 2, "t1": 1, "t2": 2, "t_end": 9, "x": 0}}}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"preset": "fig2a", "tasks": ["evolve", "lambda_v"]}"#).unwrap();
        assert_eq!(c.tasks, vec![Task::Evolve, Task::LambdaV]);
    }

    #[test]
    fn preset_xor_model() {
        let c = ExperimentConfig::from_json(r#"{"tasks": []}"#).unwrap();
        assert!(c.resolve().is_err());
        let c = ExperimentConfig::from_json(
            r#"{"preset": "fig2a", "model": {"bands": 1, "coeffs": [{"power": 1, "re": 1}]}}"#,
        )
        .unwrap();
        assert!(c.resolve().is_err());
    }

    #[test]
    fn task_names_roundtrip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert!("lambda".parse::<Task>().is_err());
    }

    #[test]
    fn scan_line_is_centred() {
        let s = ScanLine { re: -1.0, count: 12, step: 0.02, im_center: None };
        let e = s.energies(0.1);
        assert_eq!(e.len(), 12);
        assert!((e[5][1] - 0.09).abs() < 1e-12 && (e[6][1] - 0.11).abs() < 1e-12);
    }
}
