//! Task pipelines: each writes its files into the output directory and
//! appends prediction/measurement pairs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use nonbloch_core::dynamics::{
    self, Backend, CrossoverEstimate, EvolutionTrace, EvolveOptions, LambdaPoint, LyapunovReport, TimeGrid, VPeak,
};
use nonbloch_core::healing::{self, HealingReport, HealingSeries};
use nonbloch_core::lattice::{self, Boundary, LatticeHamiltonian, SpectrumSet};
use nonbloch_core::model::ChainParams;
use nonbloch_core::saddle::{self, SaddlePoint};
use nonbloch_core::thimble::{self, Contour, FlowConfig, Phase, ThimbleClassification};
use nonbloch_core::{BlochSymbol, LaurentSymbol, MultibandSymbol, C64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checks::Checks;
use crate::config::{Energy, InitialState, Resolved, Task};
use crate::output::{num, write_csv, write_json};

const PBC_SAMPLES: usize = 512;
/// Keep every n-th point of a traced flow in `thimbles.csv`.
const FLOW_STRIDE: usize = 10;

pub struct Runner<'a> {
    r: &'a Resolved,
    out: PathBuf,
    pub checks: Checks,
    pub outputs: Vec<String>,
    lattice: Option<LatticeHamiltonian>,
    spectrum: Option<SpectrumSet>,
    classification: Option<ThimbleClassification>,
    evolution: Option<(EvolutionTrace, LyapunovReport)>,
    lambda: Option<(Vec<LambdaPoint>, VPeak)>,
}

fn c(z: Energy) -> C64 {
    C64::new(z[0], z[1])
}

impl<'a> Runner<'a> {
    pub fn new(r: &'a Resolved, out: &Path) -> Self {
        Runner {
            r,
            out: out.to_path_buf(),
            checks: Checks::new(r.config.tolerances.clone()),
            outputs: Vec::new(),
            lattice: None,
            spectrum: None,
            classification: None,
            evolution: None,
            lambda: None,
        }
    }

    fn preset(&self) -> Option<&str> {
        self.r.preset.as_ref().map(|p| p.name)
    }

    fn single(&self, op: &str) -> Result<&'a LaurentSymbol> {
        match &self.r.symbol {
            BlochSymbol::Single(s) => Ok(s),
            BlochSymbol::Multi(_) => bail!("{op}: needs a single-band model ({} has {} bands)", self.r.name, self.r.symbol.bands()),
        }
    }

    fn file(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn ctx(&self, op: &str) -> String {
        format!("{op}(model = {}, L = {})", self.r.name, self.r.sites)
    }

    pub fn run(&mut self, task: Task) -> Result<()> {
        info!("{}: task {task}", self.r.name);
        match task {
            Task::Spectra => self.spectra(),
            Task::Saddles => self.saddles(),
            Task::Thimbles => self.thimbles(),
            Task::Evolve => self.evolve(),
            Task::LambdaV => self.lambda_v(),
            Task::Crossover => self.crossover(),
            Task::Healing => self.healing(),
            Task::Multiband => self.multiband(),
        }
        .with_context(|| format!("task {task} on {}", self.r.name))
    }

    fn ensure_spectrum(&mut self) -> Result<()> {
        if self.spectrum.is_none() {
            let h = lattice::assemble(&self.r.symbol, self.r.sites, Boundary::Open).with_context(|| self.ctx("lattice::assemble"))?;
            let sp = lattice::spectrum(&h).with_context(|| self.ctx("lattice::spectrum"))?;
            self.lattice = Some(h);
            self.spectrum = Some(sp);
        }
        Ok(())
    }

    fn ensure_classification(&mut self) -> Result<()> {
        if self.classification.is_none() {
            let cls = match &self.r.symbol {
                BlochSymbol::Single(s) => thimble::classify(s, 0.0, &Contour::Bz),
                BlochSymbol::Multi(m) => thimble::classify_multiband(m, 0.0),
            }
            .with_context(|| format!("thimble::classify(model = {}, v = 0, contour = BZ)", self.r.name))?;
            report_non_generic(&self.r.name, &cls);
            self.classification = Some(cls);
        }
        Ok(())
    }

    fn spectra(&mut self) -> Result<()> {
        self.ensure_spectrum()?;
        let sp = self.spectrum.as_ref().unwrap();
        let pbc = lattice::pbc_curve(&self.r.symbol, PBC_SAMPLES).with_context(|| self.ctx("lattice::pbc_curve"))?;
        let mut rows = Vec::new();
        for e in sp.values() {
            rows.push(vec![num(e.re), num(e.im), "obc".into()]);
        }
        for s in &pbc {
            for e in &s.energies {
                rows.push(vec![num(e.re), num(e.im), "pbc".into()]);
            }
        }
        rows.push(vec![num(sp.point_o.re), num(sp.point_o.im), "point_o".into()]);
        let path = self.file("spectrum.csv");
        write_csv(&path, &["re", "im", "kind"], rows)?;

        if let BlochSymbol::Single(s) = &self.r.symbol {
            let gbz = lattice::gbz_from_obc(s, self.spectrum.as_ref().unwrap()).with_context(|| self.ctx("lattice::gbz_from_obc"))?;
            let rows = gbz.iter().map(|g| {
                vec![num(g.energy.re), num(g.energy.im), num(g.inner.re), num(g.inner.im), num(g.outer.re), num(g.outer.im)]
            });
            let path = self.file("gbz.csv");
            write_csv(&path, &["energy_re", "energy_im", "inner_re", "inner_im", "outer_re", "outer_im"], rows)?;
        }
        let sp = self.spectrum.as_ref().unwrap();
        let summary = json!({
            "sites": self.r.sites,
            "bands": self.r.symbol.bands(),
            "point_o": sp.point_o,
            "similarity_ratio": sp.similarity_ratio,
            "biorthogonality_defect": sp.biorthogonality_defect(),
            "completeness_defect": sp.completeness_defect(),
            "near_defective_pairs": sp.near_defective.len(),
        });
        let path = self.file("spectrum.json");
        write_json(&path, &summary)
    }

    fn saddle_list(&self, v: f64) -> Result<Vec<SaddlePoint>> {
        match &self.r.symbol {
            BlochSymbol::Single(s) => saddle::find_saddles(s, v),
            BlochSymbol::Multi(m) => saddle::find_saddles_multiband(m, v),
        }
        .with_context(|| format!("saddle::find_saddles(model = {}, v = {v})", self.r.name))
    }

    fn saddles(&mut self) -> Result<()> {
        let list = self.saddle_list(0.0)?;
        let rows = list.iter().enumerate().map(|(i, s)| {
            vec![
                (i + 1).to_string(),
                s.band.to_string(),
                num(s.k.re),
                num(s.k.im),
                num(s.s.re),
                num(s.s.im),
                num(s.energy.re),
                num(s.energy.im),
                num(s.h2.re),
                num(s.h2.im),
                s.degenerate.to_string(),
            ]
        });
        let path = self.file("saddles.csv");
        write_csv(&path, &["saddle", "band", "k_re", "k_im", "s_re", "s_im", "energy_re", "energy_im", "h2_re", "h2_im", "degenerate"], rows)
    }

    fn thimbles(&mut self) -> Result<()> {
        let list = self.saddle_list(0.0)?;
        let (bz, gbz) = match &self.r.symbol {
            BlochSymbol::Single(s) => {
                let bz = thimble::classify_saddles(&Phase::single(s, 0.0), &list, &Contour::Bz, &FlowConfig::default(), true)
                    .with_context(|| format!("thimble::classify_saddles(model = {}, v = 0, contour = BZ)", self.r.name))?;
                self.ensure_spectrum()?;
                let contour = thimble::gbz_contour(s, self.spectrum.as_ref().unwrap()).with_context(|| self.ctx("thimble::gbz_contour"))?;
                let gbz = thimble::classify_saddles(&Phase::single(s, 0.0), &list, &contour, &FlowConfig::default(), false)
                    .with_context(|| format!("thimble::classify_saddles(model = {}, v = 0, contour = GBZ)", self.r.name))?;
                (bz, Some(gbz))
            }
            BlochSymbol::Multi(m) => {
                let phase = Phase::multi(m, 0.0).with_context(|| format!("thimble::Phase::multi(model = {})", self.r.name))?;
                let bz = thimble::classify_saddles(&phase, &list, &Contour::Bz, &FlowConfig::default(), false)
                    .with_context(|| format!("thimble::classify_saddles(model = {}, v = 0, contour = BZ)", self.r.name))?;
                (bz, None)
            }
        };
        report_non_generic(&self.r.name, &bz);
        let identical = gbz.as_ref().map(|g| g.n_sigma() == bz.n_sigma() && g.dominant == bz.dominant);

        let mut rows = Vec::new();
        for (i, f) in bz.flows.iter().enumerate() {
            let descent = f.descent.iter().flatten();
            for p in f.ascent.iter().chain(descent) {
                let kind = serde_json::to_value(p.kind)?.as_str().unwrap_or("").to_string();
                let branch = serde_json::to_value(p.branch)?.as_str().unwrap_or("").to_string();
                let n = p.points.len();
                for (j, k) in p.points.iter().enumerate() {
                    if j % FLOW_STRIDE == 0 || j + 1 == n {
                        rows.push(vec![(i + 1).to_string(), kind.clone(), branch.clone(), num(k.re), num(k.im)]);
                    }
                }
            }
        }
        let path = self.file("thimbles.csv");
        write_csv(&path, &["saddle", "kind", "branch", "k_re", "k_im"], rows)?;
        let doc = json!({ "bz": bz, "gbz": gbz, "bz_gbz_identical": identical, "non_generic": bz.non_generic });
        let path = self.file("classification.json");
        write_json(&path, &doc)?;

        let n = bz.n_sigma();
        match self.preset() {
            Some("fig2b" | "fig3a") => {
                self.checks.flag("thimbles.dominant_is_s1", bz.dominant == 0);
                self.checks.flag("thimbles.all_contribute", n.len() == 4 && n.iter().all(|&x| x != 0));
            }
            Some("fig3e" | "fig3f") => {
                self.checks.flag("thimbles.n1_zero", n.first() == Some(&0));
                self.checks.flag("thimbles.dominant_is_s2_or_s3", bz.dominant == 1 || bz.dominant == 2);
                self.checks.flag("thimbles.bz_gbz_identical", identical == Some(true));
            }
            _ => {}
        }
        if self.classification.is_none() {
            self.classification = Some(bz);
        }
        Ok(())
    }

    fn initial_state(&self, dim: usize, bands: usize) -> Result<(Vec<C64>, usize)> {
        let sites = dim / bands;
        Ok(match self.r.config.initial {
            InitialState::Delta { site, band } => {
                if site >= sites || band >= bands {
                    bail!("initial state: delta at site {site} band {band} outside {sites} sites × {bands} bands");
                }
                (dynamics::delta_state(dim, bands, site, band), site * bands + band)
            }
            InitialState::Flat { width, band } => {
                if width == 0 || width > sites || band >= bands {
                    bail!("initial state: flat width {width} band {band} outside {sites} sites × {bands} bands");
                }
                (dynamics::flat_state(dim, bands, width, band), band)
            }
        })
    }

    fn ensure_evolution(&mut self) -> Result<()> {
        if self.evolution.is_some() {
            return Ok(());
        }
        self.ensure_spectrum()?;
        self.ensure_classification()?;
        let cfg = &self.r.config;
        let windows = cfg.time.windows.fit_windows();
        let est = dynamics::crossover_theo(&self.r.symbol, self.r.sites).with_context(|| self.ctx("dynamics::crossover_theo"))?;
        let tc = est.t_c_theo;
        let h = self.lattice.as_ref().unwrap();
        let (psi0, x0) = self.initial_state(h.dim(), h.bands())?;
        let grid = TimeGrid::for_crossover(tc, cfg.time.span * tc);
        let opts = EvolveOptions {
            backend: Backend::Hybrid,
            snapshot_stride: ((cfg.time.snapshot_every / grid.dt).round() as usize).max(1),
            bands: h.bands(),
            switch_time: windows.long_start * tc,
            switch_until: 6.0 * tc,
            snapshot_until: 2.0 * tc,
        };
        let sp = self.spectrum.as_ref().unwrap();
        let trace = dynamics::evolve(h, Some(sp), &psi0, x0, grid, &opts)
            .with_context(|| format!("dynamics::evolve(model = {}, L = {}, t_end = {}, dt = {})", self.r.name, self.r.sites, grid.t_end(), grid.dt))?;
        let mut report = dynamics::fit_exponents(&trace, sp, self.classification.as_ref().unwrap(), &self.r.symbol, self.r.sites, windows)
            .with_context(|| self.ctx("dynamics::fit_exponents"))?;
        report.v_peak = self.lambda.as_ref().map(|l| l.1.v_peak);
        self.evolution = Some((trace, report));
        Ok(())
    }

    fn write_evolution(&mut self) -> Result<()> {
        let (trace, report) = self.evolution.as_ref().unwrap();
        let stride = ((self.r.config.time.record_every / (trace.times[1] - trace.times[0])).round() as usize).max(1);
        let n = trace.times.len();
        let rows: Vec<Vec<String>> = (0..n)
            .filter(|i| i % stride == 0 || i + 1 == n)
            .map(|i| {
                let (a, b) = (trace.ln_amp_x0[i], trace.ln_norm[i]);
                vec![num(trace.times[i]), num(a.exp()), num(b.exp()), num(a), num(b)]
            })
            .collect();
        let mut heat = Vec::new();
        for (t, prof) in trace.snapshot_times.iter().zip(&trace.snapshots) {
            for (x, a) in prof.iter().enumerate() {
                heat.push(vec![num(*t), x.to_string(), num(*a)]);
            }
        }
        let doc = json!({
            "model": self.r.name,
            "sites": self.r.sites,
            "initial": self.r.config.initial,
            "x0": trace.x0,
            "switch_time": trace.switch_time,
            "backend_mismatch": trace.backend_mismatch,
            "report": report,
        });
        let path = self.file("trace.csv");
        write_csv(&path, &["t", "amp_x0", "norm", "ln_amp_x0", "ln_norm"], rows)?;
        let path = self.file("heatmap.csv");
        write_csv(&path, &["t", "x", "amp"], heat)?;
        let path = self.file("report.json");
        write_json(&path, &doc)
    }

    fn evolve(&mut self) -> Result<()> {
        self.ensure_evolution()?;
        self.write_evolution()?;
        let (trace, rep) = self.evolution.as_ref().unwrap();
        let sp = self.spectrum.as_ref().unwrap();
        let obc_max = sp.values().iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max);
        let tc = rep.t_c_theo;
        let peaks_increasing = peaks_increase(trace, 0.2 * tc, 0.5 * tc, self.r.config.time.snapshot_every);
        let default_initial = self.r.config.initial.is_default();
        let ck = &mut self.checks;

        ck.within("evolve.mu_vs_point_o", rep.mu_pred, rep.mu_fit.slope, 0.005);
        ck.info("evolve.lambda_edge_vs_saddle", rep.lambda_pred, rep.lambda_edge, 0.02);
        if !default_initial {
            if matches!(self.r.preset.as_ref().map(|p| p.name), Some("fig4a" | "fig4e")) {
                ck.within("evolve.lambda_tot_other_initial_state", rep.lambda_tot_pred, rep.lambda_tot_fit.slope, 0.03);
            }
        } else {
            match self.r.preset.as_ref().map(|p| p.name) {
                Some("fig2a") => {
                    ck.within("evolve.lambda_vs_reference", -0.6745, rep.lambda_fit.slope, 0.02);
                    ck.within("evolve.lambda_vs_saddle", rep.lambda_pred, rep.lambda_fit.slope, 0.02);
                    ck.within("evolve.mu_vs_reference", -0.0449, rep.mu_fit.slope, 0.005);
                    ck.within("evolve.mu_pred_vs_obc_max", obc_max, rep.mu_pred, 1e-6);
                    ck.within("evolve.mu_fit_vs_obc_max", obc_max, rep.mu_fit.slope, 1e-6);
                }
                Some("fig2b") => {
                    ck.within("evolve.lambda_vs_reference", -0.6107, rep.lambda_fit.slope, 0.02);
                    ck.within("evolve.mu_vs_reference", -0.1569, rep.mu_fit.slope, 0.005);
                }
                Some("fig4a") => {
                    let p = rep.p.map_or(f64::NAN, |p| p.energy.im);
                    ck.within("evolve.lambda_tot_vs_p", p, rep.lambda_tot_fit.slope, 0.02);
                    ck.within("evolve.mu_tot_vs_point_o", rep.mu_pred, rep.mu_tot_fit.slope, 0.005);
                    ck.flag("evolve.peak_moves_right", peaks_increasing);
                }
                Some("fig4e") => {
                    ck.within("evolve.lambda_tot_vs_saddle", rep.lambda_pred, rep.lambda_tot_fit.slope, 0.02);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn ensure_lambda(&mut self) -> Result<()> {
        if self.lambda.is_some() {
            return Ok(());
        }
        let n = self.r.config.lambda_v.points;
        let sym = &self.r.symbol;
        let grid = dynamics::default_v_grid(sym, n).with_context(|| self.ctx("dynamics::default_v_grid"))?;
        let curve = dynamics::lambda_of_v(sym, &grid).with_context(|| format!("dynamics::lambda_of_v(model = {}, points = {n})", self.r.name))?;
        let peak = dynamics::v_peak(sym, &curve).with_context(|| format!("dynamics::v_peak(model = {})", self.r.name))?;
        if let Some((_, rep)) = self.evolution.as_mut() {
            rep.v_peak = Some(peak.v_peak);
        }
        self.lambda = Some((curve, peak));
        Ok(())
    }

    fn lambda_v(&mut self) -> Result<()> {
        self.ensure_lambda()?;
        let p = dynamics::find_p(&self.r.symbol).with_context(|| format!("dynamics::find_p(model = {})", self.r.name))?;
        let (curve, peak) = self.lambda.as_ref().unwrap();
        let rows: Vec<Vec<String>> = curve
            .iter()
            .map(|l| vec![num(l.v), num(l.lambda), num(l.dominant.k.re), num(l.dominant.k.im), l.dominant.band.to_string(), l.local_max.to_string()])
            .collect();
        let doc = json!({ "v_peak": peak.v_peak, "lambda_peak": peak.lambda, "dominant": peak.dominant, "p": p });
        let (v_peak, lambda_peak) = (peak.v_peak, peak.lambda);
        let path = self.file("lambda_v.csv");
        write_csv(&path, &["v", "lambda", "k_re", "k_im", "band", "local_max"], rows)?;
        let path = self.file("lambda_v.json");
        write_json(&path, &doc)?;
        match self.preset() {
            Some("fig4a") => {
                let (vp, ep) = p.map_or((f64::NAN, f64::NAN), |p| (p.v, p.energy.im));
                self.checks.within("lambda_v.v_peak_vs_v_p", vp, v_peak, 0.02);
                self.checks.info("lambda_v.lambda_peak_vs_p", ep, lambda_peak, 1e-4);
            }
            Some("fig4e") => self.checks.within("lambda_v.v_peak_zero", 0.0, v_peak, 1e-6),
            _ => {}
        }
        Ok(())
    }

    fn crossover(&mut self) -> Result<()> {
        let (est, t_c_num) = if self.r.config.initial.is_default() {
            self.ensure_evolution()?;
            let rep = &self.evolution.as_ref().unwrap().1;
            (rep.crossover, rep.t_c_num)
        } else {
            dynamics::measure_crossover(&self.r.symbol, self.r.sites).with_context(|| self.ctx("dynamics::measure_crossover"))?
        };
        let doc = crossover_doc(&est, t_c_num);
        let path = self.file("crossover.json");
        write_json(&path, &doc)?;

        let sweep = &self.r.config.crossover.sweep_t1l;
        let mut worst: f64 = 0.0;
        if !sweep.is_empty() {
            let chain: ChainParams = match self.r.preset.as_ref().and_then(|p| p.chain) {
                Some(c) => c,
                None => bail!("crossover sweep: needs a chain preset"),
            };
            let mut rows = Vec::new();
            for &t1l in sweep {
                let sym: BlochSymbol = ChainParams { t1l: C64::new(0.0, t1l), ..chain }.symbol().into();
                let (e, n) = dynamics::measure_crossover(&sym, self.r.sites)
                    .with_context(|| format!("dynamics::measure_crossover(t1L = {t1l}i, L = {})", self.r.sites))?;
                let ratio = n.map_or(f64::NAN, |n| n / e.t_c_theo);
                worst = worst.max((ratio - 1.0).abs());
                if ratio.is_nan() {
                    worst = f64::INFINITY;
                }
                rows.push(vec![
                    num(t1l),
                    num(e.velocities.v_plus),
                    num(e.velocities.v_minus),
                    num(e.t_c_theo),
                    n.map_or(String::new(), num),
                    num(ratio),
                ]);
            }
            let path = self.file("crossover_sweep.csv");
            write_csv(&path, &["t1l_im", "v_plus", "v_minus", "t_c_theo", "t_c_num", "ratio"], rows)?;
        }
        if self.preset() == Some("fig7") {
            let ck = &mut self.checks;
            ck.within("crossover.v_plus_vs_reference", 1.4998, est.velocities.v_plus, 1e-3);
            ck.within("crossover.v_minus_vs_reference", -3.0, est.velocities.v_minus, 1e-3);
            ck.within("crossover.t_c_theo_vs_reference", 50.0044, est.t_c_theo, 0.1);
            ck.relative("crossover.t_c_num_vs_theo", est.t_c_theo, t_c_num.unwrap_or(f64::NAN), 0.2);
            if !sweep.is_empty() {
                ck.within("crossover.sweep_worst_relative_gap", 0.0, worst, 0.2);
            }
        }
        Ok(())
    }

    fn healing(&mut self) -> Result<()> {
        let sym = self.single("healing")?;
        let settings = self.r.config.healing.clone();
        let params = settings.params;
        let sites = self.r.sites;
        let threshold = healing::healing_threshold(sym).with_context(|| format!("healing::healing_threshold(model = {})", self.r.name))?;
        info!("{}: healing threshold {threshold}", self.r.name);

        let mut runs: Vec<(Value, HealingReport)> = Vec::new();
        for &e in &settings.energies {
            let e0 = c(e);
            let rep = healing::run_healing(sym, e0, sites, &params, threshold)
                .with_context(|| format!("healing::run_healing(model = {}, E0 = {e0}, L = {sites}, gamma = {}, l = {})", self.r.name, params.gamma, params.l))?;
            runs.push((json!({ "source": "edge_state", "e0": e0 }), rep));
        }
        if !settings.obc_targets.is_empty() {
            let h = lattice::assemble(&self.r.symbol, sites, Boundary::Open).with_context(|| self.ctx("lattice::assemble"))?;
            for &t in &settings.obc_targets {
                let target = c(t);
                let (e0, psi) = healing::obc_eigenstate(&h, target).with_context(|| format!("healing::obc_eigenstate(target = {target}, L = {sites})"))?;
                let rep = healing::run_healing_from(&h, &psi, e0, &params, threshold)
                    .with_context(|| format!("healing::run_healing_from(model = {}, E0 = {e0}, L = {sites})", self.r.name))?;
                runs.push((json!({ "source": "obc_eigenstate", "target": target, "e0": e0 }), rep));
            }
        }

        let mut rows = Vec::new();
        for (i, (_, rep)) in runs.iter().enumerate() {
            push_series(&mut rows, i, &rep.series);
        }
        let path = self.file("healing.csv");
        write_csv(&path, &["run", "t", "epsilon", "norm_phi", "norm_xi"], rows)?;

        let mut scan_doc = Value::Null;
        if let Some(line) = settings.scan {
            let energies: Vec<C64> = line.energies(threshold).into_iter().map(c).collect();
            let results = healing::scan(sym, &energies, sites, &params, threshold);
            let mut reports = Vec::new();
            let mut rows = Vec::new();
            for (e0, r) in energies.iter().zip(results) {
                let r = r.with_context(|| format!("healing::scan(model = {}, E0 = {e0}, L = {sites})", self.r.name))?;
                rows.push(vec![num(e0.re), num(e0.im), verdict_name(&r).into(), num(r.slope)]);
                reports.push(r);
            }
            let bracket = healing::flip_bracket(&reports);
            let path = self.file("healing_scan.csv");
            write_csv(&path, &["re", "im", "verdict", "slope"], rows)?;
            scan_doc = json!({ "line": line, "reports": reports, "bracket": bracket });
            if let Some((lo, hi)) = bracket {
                self.checks.within("healing.scan_flip_vs_threshold", threshold, 0.5 * (lo + hi), 0.5 * line.step);
            } else {
                self.checks.flag("healing.scan_flips_once", false);
            }
        }

        let docs: Vec<Value> = runs.iter().map(|(src, rep)| json!({ "input": src, "report": rep })).collect();
        let doc = json!({ "threshold": threshold, "params": params, "sites": sites, "runs": docs, "scan": scan_doc });
        let path = self.file("healing_report.json");
        write_json(&path, &doc)?;

        for (i, (_, rep)) in runs.iter().enumerate() {
            let expect_heal = rep.e0.im > threshold;
            let heals = rep.verdict == nonbloch_core::Verdict::Heals;
            self.checks.within(&format!("healing.run{i}.verdict"), if expect_heal { 1.0 } else { 0.0 }, if heals { 1.0 } else { 0.0 }, 0.0);
            if rep.fit.is_some() {
                self.checks.info(&format!("healing.run{i}.slope_vs_law"), 2.0 * (threshold - rep.e0.im), rep.slope, 0.05);
            }
            if rep.horizon_reached {
                warn!("healing run {i}: finite-size horizon reached at t = {}", rep.t_stop);
            }
        }
        Ok(())
    }

    fn multiband(&mut self) -> Result<()> {
        let m: &MultibandSymbol = match &self.r.symbol {
            BlochSymbol::Multi(m) => m,
            BlochSymbol::Single(_) => bail!("multiband: needs a model with at least two bands"),
        };
        let det = saddle::det_saddles(m).with_context(|| format!("saddle::det_saddles(model = {})", self.r.name))?;
        self.ensure_evolution()?;
        self.write_evolution()?;
        let rep = self.evolution.as_ref().unwrap().1.clone();
        let cls = self.classification.as_ref().unwrap();
        let sp = self.spectrum.as_ref().unwrap();
        let obc_max = sp.values().iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max);
        let lambda = rep.lambda_fit.slope;
        let nearest_det = det
            .iter()
            .flat_map(|(_, es)| es.iter().map(|e| e.im))
            .min_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
            .unwrap_or(f64::NAN);
        let det_doc: Vec<Value> = det.iter().map(|(k, es)| json!({ "k": k, "energies": es })).collect();
        let doc = json!({
            "branch_classification": cls,
            "det_saddles": det_doc,
            "lambda_fit": rep.lambda_fit,
            "mu_fit": rep.mu_fit,
            "lambda_branch": rep.lambda_pred,
            "nearest_det_prediction": nearest_det,
            "obc_max_imag": obc_max,
        });
        let path = self.file("multiband.json");
        write_json(&path, &doc)?;
        let ck = &mut self.checks;
        match self.r.preset.as_ref().map(|p| p.name) {
            Some("figS3a") => ck.within("multiband.lambda_vs_q_saddle", rep.lambda_pred, lambda, 0.03),
            Some("figS3b") => {
                ck.separated("multiband.lambda_vs_det_saddles", nearest_det, lambda, 0.05);
                ck.info("multiband.lambda_vs_branch", rep.lambda_pred, lambda, 0.05);
            }
            Some("figS3c") => {
                ck.within("multiband.mu_vs_obc_max", obc_max, rep.mu_fit.slope, 0.01);
                ck.separated("multiband.lambda_mu_crossover", rep.mu_fit.slope, lambda, 0.05);
            }
            _ => {}
        }
        Ok(())
    }
}

fn report_non_generic(name: &str, cls: &ThimbleClassification) {
    if cls.non_generic {
        warn!("{name}: a flow ran into another saddle (Stokes line); the classification is non-generic, perturb a parameter slightly to resolve it");
    }
}

fn verdict_name(r: &HealingReport) -> &'static str {
    match r.verdict {
        nonbloch_core::Verdict::Heals => "heals",
        nonbloch_core::Verdict::NotHealing => "not_healing",
    }
}

fn push_series(rows: &mut Vec<Vec<String>>, run: usize, s: &HealingSeries) {
    for i in 0..s.times.len() {
        rows.push(vec![
            run.to_string(),
            num(s.times[i]),
            num(s.ln_epsilon[i].exp()),
            num(s.ln_norm_phi[i].exp()),
            num(s.ln_norm_xi[i].exp()),
        ]);
    }
}

#[derive(Serialize)]
struct CrossoverDoc<'a> {
    estimate: &'a CrossoverEstimate,
    t_c_num: Option<f64>,
    ratio: Option<f64>,
}

fn crossover_doc(est: &CrossoverEstimate, t_c_num: Option<f64>) -> Value {
    let doc = CrossoverDoc { estimate: est, t_c_num, ratio: t_c_num.map(|n| n / est.t_c_theo) };
    serde_json::to_value(doc).unwrap_or(Value::Null)
}

/// Peak site strictly increasing over snapshots in `[a, b]`, sampled every
/// five time units.
fn peaks_increase(trace: &EvolutionTrace, a: f64, b: f64, snapshot_every: f64) -> bool {
    let stride = ((5.0 / snapshot_every).round() as usize).max(1);
    let peaks = dynamics::peak_sites(trace);
    let sel: Vec<usize> = trace
        .snapshot_times
        .iter()
        .zip(peaks)
        .filter(|(t, _)| **t >= a && **t <= b)
        .step_by(stride)
        .map(|(_, p)| p)
        .collect();
    sel.len() >= 2 && sel.windows(2).all(|w| w[1] > w[0])
}
