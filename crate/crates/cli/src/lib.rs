//! Configuration-driven experiment runner for `nonbloch-core`: runs task
//! pipelines, writes CSV/JSON artifacts plus a manifest, and renders SVG
//! panels from the CSV files.

pub mod checks;
pub mod config;
pub mod output;
pub mod plot;
pub mod tasks;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nonbloch_core::healing;
use nonbloch_core::{BlochSymbol, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::Check;
use crate::config::{ExperimentConfig, Resolved, Task};
use crate::output::{num, write_csv, write_json};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const MODULES: [&str; 6] = ["symbol", "lattice", "saddle", "thimble", "dynamics", "healing"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub model: String,
    pub sites: usize,
    pub versions: BTreeMap<String, String>,
    pub tasks: Vec<Task>,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    /// All gating checks passed.
    pub passed: bool,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.gate && !c.pass).collect()
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg).context("config: serialize")?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn versions() -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("nonbloch-core".to_string(), nonbloch_core::VERSION.to_string());
    v.insert("nonbloch-cli".to_string(), VERSION.to_string());
    for m in MODULES {
        v.insert(m.to_string(), nonbloch_core::VERSION.to_string());
    }
    v.insert("cli".to_string(), VERSION.to_string());
    v
}

/// Configure the global worker pool: `threads`, else `NONBLOCH_THREADS`,
/// else the rayon default. Only the first call has an effect.
pub fn init_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("NONBLOCH_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().with_context(|| format!("NONBLOCH_THREADS: '{s}' is not a thread count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    Ok(())
}

fn dedup(tasks: &[Task]) -> Vec<Task> {
    let mut out = Vec::new();
    for t in tasks {
        if !out.contains(t) {
            out.push(*t);
        }
    }
    out
}

/// Run every task of `cfg` into `out`. An empty task list does nothing and
/// returns `None`.
pub fn run(cfg: ExperimentConfig, out: &Path) -> Result<Option<Manifest>> {
    let hash = config_hash(&cfg)?;
    let resolved = cfg.resolve()?;
    let tasks = dedup(&resolved.config.tasks);
    if tasks.is_empty() {
        log::info!("no tasks requested");
        return Ok(None);
    }
    fs::create_dir_all(out).with_context(|| format!("output: create {}", out.display()))?;
    let mut runner = tasks::Runner::new(&resolved, out);
    for &t in &tasks {
        runner.run(t)?;
    }
    let checks = runner.checks.list().to_vec();
    let mut outputs = runner.outputs.clone();
    outputs.sort();
    outputs.dedup();
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        config_hash: hash,
        model: resolved.name.clone(),
        sites: resolved.sites,
        versions: versions(),
        tasks,
        outputs,
        passed: checks.iter().all(|c| c.pass || !c.gate),
        checks,
        config: resolved.config.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(Some(manifest))
}

/// Rectangular grid of `E0` values for a verdict map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub re: (f64, f64, usize),
    pub im: (f64, f64, usize),
}

impl EnergyGrid {
    pub fn points(&self) -> Vec<C64> {
        let axis = |(a, b, n): (f64, f64, usize)| -> Vec<f64> {
            if n <= 1 {
                return vec![a];
            }
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        let (xs, ys) = (axis(self.re), axis(self.im));
        ys.iter().flat_map(|&y| xs.iter().map(move |&x| C64::new(x, y))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub e0: C64,
    /// `heals`, `not_healing`, or `error: …` when the edge state cannot be
    /// built at this energy.
    pub verdict: String,
    pub slope: Option<f64>,
}

/// Healing verdict map over an `E0` grid: `scan_map.csv` and `scan_map.json`.
pub fn scan_map(cfg: ExperimentConfig, grid: EnergyGrid, out: &Path) -> Result<Vec<ScanPoint>> {
    let hash = config_hash(&cfg)?;
    let r: Resolved = cfg.resolve()?;
    let sym = match &r.symbol {
        BlochSymbol::Single(s) => s,
        BlochSymbol::Multi(_) => anyhow::bail!("scan: needs a single-band model ({})", r.name),
    };
    let params = r.config.healing.params;
    let threshold = healing::healing_threshold(sym).with_context(|| format!("healing::healing_threshold(model = {})", r.name))?;
    let energies = grid.points();
    let reports = healing::scan(sym, &energies, r.sites, &params, threshold);
    let points: Vec<ScanPoint> = energies
        .iter()
        .zip(reports)
        .map(|(&e0, rep)| match rep {
            Ok(rep) => ScanPoint {
                e0,
                verdict: serde_json::to_value(rep.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                slope: Some(rep.slope),
            },
            Err(e) => ScanPoint { e0, verdict: format!("error: {e}"), slope: None },
        })
        .collect();
    fs::create_dir_all(out).with_context(|| format!("output: create {}", out.display()))?;
    let rows = points.iter().map(|p| vec![num(p.e0.re), num(p.e0.im), p.verdict.clone(), p.slope.map_or(String::new(), num)]);
    write_csv(&out.join("scan_map.csv"), &["re", "im", "verdict", "slope"], rows)?;
    let doc = serde_json::json!({
        "config_hash": hash,
        "model": r.name,
        "sites": r.sites,
        "threshold": threshold,
        "grid": grid,
        "params": params,
        "versions": versions(),
        "points": points,
    });
    write_json(&out.join("scan_map.json"), &doc)?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_row_major() {
        let g = EnergyGrid { re: (-1.0, 1.0, 3), im: (0.0, 0.5, 2) };
        let p = g.points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[1], C64::new(0.0, 0.0));
        assert_eq!(p[3], C64::new(-1.0, 0.5));
    }

    #[test]
    fn hash_changes_with_config() {
        let a = ExperimentConfig::for_preset("fig2a").unwrap();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.sites = Some(120);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
