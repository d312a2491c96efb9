//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Run with `cargo test --release -p nonbloch-cli --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nonbloch_cli::config::{ExperimentConfig, InitialState, Task};
use nonbloch_cli::Manifest;
use nonbloch_core::dynamics::{self, delta_state, Backend, EvolveOptions, TimeGrid};
use nonbloch_core::lattice::{self, assemble, Boundary};
use nonbloch_core::model::{preset, CHAIN_A, CHAIN_B};
use nonbloch_core::saddle::{continuum_top, find_saddles};
use nonbloch_core::thimble::{self, Contour, FlowConfig, Phase};
use nonbloch_core::{BlochSymbol, Error, LaurentSymbol, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, detail: String::new() }
    }

    fn require(&mut self, ok: bool, what: impl AsRef<str>) {
        if !ok {
            self.pass = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(what.as_ref());
        }
    }

    fn merge(&mut self, other: Outcome) {
        self.require(other.pass, other.detail);
    }
}

fn run_config(cfg: ExperimentConfig) -> Result<(Manifest, Duration), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let manifest = nonbloch_cli::run(cfg, dir.path()).map_err(|e| format!("{e:#}"))?.ok_or("no tasks ran")?;
    Ok((manifest, start.elapsed()))
}

fn run_preset(name: &str, tasks: &[Task], initial: Option<InitialState>) -> Result<(Manifest, Duration), String> {
    let mut cfg = ExperimentConfig::for_preset(name).map_err(|e| format!("{e:#}"))?;
    cfg.tasks = tasks.to_vec();
    if let Some(i) = initial {
        cfg.initial = i;
    }
    run_config(cfg)
}

/// Every named check must exist and pass.
fn expect(out: &mut Outcome, tag: &str, m: &Manifest, names: &[&str]) {
    for name in names {
        match m.checks.iter().find(|c| c.name == *name) {
            Some(c) => out.require(c.pass, format!("{tag} {name}: {:?} vs {:?} (tol {:?})", c.measured, c.prediction, c.tolerance)),
            None => out.require(false, format!("{tag} {name}: missing")),
        }
    }
}

fn preset_checks(out: &mut Outcome, name: &str, tasks: &[Task], initial: Option<InitialState>, names: &[&str], limit: Option<u64>) {
    match run_preset(name, tasks, initial) {
        Ok((m, took)) => {
            expect(out, name, &m, names);
            if let Some(s) = limit {
                out.require(took <= Duration::from_secs(s), format!("{name} runtime {:.1}s > {s}s", took.as_secs_f64()));
            }
        }
        Err(e) => out.require(false, format!("{name}: {e}")),
    }
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let names = ["evolve.lambda_vs_reference", "evolve.lambda_vs_saddle", "evolve.mu_vs_reference", "evolve.mu_fit_vs_obc_max"];
    preset_checks(&mut o, "fig2a", &[Task::Thimbles, Task::Evolve], None, &names, Some(120));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let names = ["evolve.lambda_vs_reference", "evolve.mu_vs_reference", "thimbles.dominant_is_s1", "thimbles.all_contribute"];
    preset_checks(&mut o, "fig2b", &[Task::Thimbles, Task::Evolve], None, &names, None);
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let names = ["thimbles.n1_zero", "thimbles.dominant_is_s2_or_s3", "thimbles.bz_gbz_identical"];
    preset_checks(&mut o, "fig3e", &[Task::Thimbles], None, &names, None);
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let tasks = [Task::Evolve, Task::LambdaV];
    let non_sticky = ["evolve.lambda_tot_vs_p", "lambda_v.v_peak_vs_v_p", "evolve.mu_tot_vs_point_o", "evolve.peak_moves_right"];
    preset_checks(&mut o, "fig4a", &tasks, None, &non_sticky, None);
    preset_checks(&mut o, "fig4e", &tasks, None, &["lambda_v.v_peak_zero", "evolve.lambda_tot_vs_saddle"], None);
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let names = [
        "crossover.v_plus_vs_reference",
        "crossover.v_minus_vs_reference",
        "crossover.t_c_theo_vs_reference",
        "crossover.t_c_num_vs_theo",
        "crossover.sweep_worst_relative_gap",
    ];
    preset_checks(&mut o, "fig7", &[Task::Crossover], None, &names, None);
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let a = ["healing.run0.verdict", "healing.run1.verdict", "healing.scan_flip_vs_threshold"];
    preset_checks(&mut o, "fig6a", &[Task::Healing], None, &a, Some(600));
    let e = ["healing.run0.verdict", "healing.scan_flip_vs_threshold"];
    preset_checks(&mut o, "fig6e", &[Task::Healing], None, &e, Some(600));
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    for (name, sym) in [("fig2a", CHAIN_A.symbol()), ("fig2b", CHAIN_B.symbol())] {
        let saddles = match find_saddles(&sym, 0.0) {
            Ok(s) => s,
            Err(e) => {
                o.require(false, format!("{name} saddles: {e}"));
                continue;
            }
        };
        match thimble::classify_saddles(&Phase::single(&sym, 0.0), &saddles, &Contour::Bz, &FlowConfig::default(), true) {
            Ok(c) => {
                for t in [1.0, 2.0, 5.0] {
                    match thimble::decomposition_residual(&sym, &c, t) {
                        Ok(r) => o.require(r <= 1e-6, format!("{name} t={t}: decomposition residual {r:e}")),
                        Err(e) => o.require(false, format!("{name} t={t}: {e}")),
                    }
                }
            }
            Err(e) => o.require(false, format!("{name} classify: {e}")),
        }
        let size = preset(name).map(|p| p.size).unwrap_or(140);
        let contour = assemble(&sym.clone().into(), size, Boundary::Open)
            .and_then(|h| lattice::spectrum(&h))
            .and_then(|sp| thimble::gbz_contour(&sym, &sp));
        match contour {
            Ok(gbz) => {
                for t in [1.0, 2.0, 5.0] {
                    let a = thimble::contour_integral(&sym, &Contour::Bz, t, 4096);
                    let b = thimble::contour_integral(&sym, &gbz, t, 4096);
                    let rel = (a - b).norm() / a.norm();
                    o.require(rel <= 1e-8, format!("{name} t={t}: BZ vs GBZ relative {rel:e}"));
                }
            }
            Err(e) => o.require(false, format!("{name} GBZ contour: {e}")),
        }
    }
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let tasks = [Task::Multiband];
    preset_checks(&mut o, "figS3a", &tasks, None, &["multiband.lambda_vs_q_saddle"], None);
    preset_checks(&mut o, "figS3b", &tasks, None, &["multiband.lambda_vs_det_saddles"], None);
    preset_checks(&mut o, "figS3c", &tasks, None, &["multiband.mu_vs_obc_max", "multiband.lambda_mu_crossover"], None);
    o
}

fn polar(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(rng.random_range(0.3..1.5), rng.random_range(0.0..std::f64::consts::TAU))
}

fn cartesian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))
}

/// Range-1 or range-2 hopping on each side, outermost terms bounded away from zero.
fn random_symbol(rng: &mut ChaCha8Rng) -> LaurentSymbol {
    let p = rng.random_range(1..=2);
    let q = rng.random_range(1..=2);
    let kappa = rng.random_range(-0.5..0.5);
    let mut terms = vec![(p, polar(rng)), (-q, polar(rng)), (0, cartesian(rng) - C64::new(0.0, kappa))];
    if p == 2 {
        terms.push((1, cartesian(rng)));
    }
    if q == 2 {
        terms.push((-1, cartesian(rng)));
    }
    LaurentSymbol::new(terms).expect("nonzero symbol")
}

fn random_hermitian(rng: &mut ChaCha8Rng) -> LaurentSymbol {
    let c1 = polar(rng);
    let c2 = cartesian(rng) * 0.5;
    let c0 = rng.random_range(-1.0..1.0);
    LaurentSymbol::new([(1, c1), (-1, c1.conj()), (2, c2), (-2, c2.conj()), (0, C64::new(c0, 0.0))]).expect("nonzero symbol")
}

fn hessian_eigs(f: impl Fn(C64) -> f64, k: C64) -> (f64, f64) {
    let d = 1e-4;
    let e = [C64::new(d, 0.0), C64::new(0.0, d)];
    let mut h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            h[i][j] = (f(k + e[i] + e[j]) - f(k + e[i] - e[j]) - f(k - e[i] + e[j]) + f(k - e[i] - e[j])) / (4.0 * d * d);
        }
    }
    let tr = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 - disc, tr / 2.0 + disc)
}

fn signature_and_orthogonality(sym: &LaurentSymbol, v: f64) -> Result<(), String> {
    let saddles = find_saddles(sym, v).map_err(|e| e.to_string())?;
    if saddles.len() as i32 != sym.p() + sym.q() {
        return Err(format!("{} saddles, expected {}", saddles.len(), sym.p() + sym.q()));
    }
    let dh = sym.derivative_k();
    for s in saddles.iter().filter(|s| s.h2.norm() > 1e-3) {
        let m = s.h2.norm();
        for part in [0, 1] {
            let f = |k: C64| {
                let z = sym.eval(k) - k * v;
                if part == 0 { z.re } else { z.im }
            };
            let (lo, hi) = hessian_eigs(f, s.k);
            if !(lo < 0.0 && hi > 0.0) || (hi - m).abs() > 1e-4 * m.max(1.0) || (lo + m).abs() > 1e-4 * m.max(1.0) {
                return Err(format!("saddle {} has Hessian eigenvalues {lo}, {hi}, expected ±{m}", s.k));
            }
        }
    }
    if saddles.iter().any(|s| s.degenerate) {
        return Ok(());
    }
    let c = match thimble::classify_saddles(&Phase::single(sym, v), &saddles, &Contour::Bz, &FlowConfig::default(), false) {
        Ok(c) => c,
        Err(Error::NonTransversal { .. }) | Err(Error::NoContributingSaddle { .. }) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    for f in &c.flows {
        for p in &f.ascent {
            for (k, t) in p.points.iter().zip(&p.tangents) {
                let g = dh.eval(*k) - v;
                if (t * g).re.abs() > 1e-6 * g.norm().max(1e-12) {
                    return Err(format!("ascent tangent {t} not orthogonal to gradient at {k}"));
                }
            }
        }
    }
    Ok(())
}

fn saddles_below_o(sym: &LaurentSymbol) -> Result<(), String> {
    let c = match thimble::classify(sym, 0.0, &Contour::Bz) {
        Ok(c) => c,
        Err(Error::NonTransversal { .. }) | Err(Error::DegenerateSaddle { .. }) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let o = continuum_top(sym, 4096).map_err(|e| e.to_string())?;
    for i in c.contributing() {
        let s = c.saddles[i].saddle.s;
        if s.im > o + 1e-9 {
            return Err(format!("contributing Im S = {} above Im O = {o}", s.im));
        }
    }
    Ok(())
}

fn hermitian_neutral(sym: &LaurentSymbol) -> Result<(), String> {
    let l = 60;
    let h = assemble(&sym.clone().into(), l, Boundary::Open).map_err(|e| e.to_string())?;
    let sp = lattice::spectrum(&h).map_err(|e| e.to_string())?;
    if sp.point_o.im.abs() > 1e-9 {
        return Err(format!("mu = Im O = {}", sp.point_o.im));
    }
    for g in lattice::gbz_from_obc(sym, &sp).map_err(|e| e.to_string())? {
        if (g.inner.norm() - 1.0).abs() > 1e-6 || (g.outer.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("GBZ off the unit circle: |β| = {}, {}", g.inner.norm(), g.outer.norm()));
        }
    }
    if let Ok(c) = thimble::classify(sym, 0.0, &Contour::Bz) {
        let s = c.dominant_saddle().s.im;
        if s.abs() > 1e-9 {
            return Err(format!("lambda = Im S_d = {s}"));
        }
    }
    let opts = EvolveOptions { backend: Backend::Spectral, ..Default::default() };
    let tr = dynamics::evolve(&h, Some(&sp), &delta_state(l, 1, 0, 0), 0, TimeGrid::new(0.05, 40.0), &opts).map_err(|e| e.to_string())?;
    let drift = tr.ln_norm.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if drift > 1e-8 {
        return Err(format!("norm drifts by {drift:e}"));
    }
    Ok(())
}

fn unidirectional_errors() -> Result<(), String> {
    let right = LaurentSymbol::new([(1, C64::new(1.0, 0.0)), (2, C64::new(0.3, 0.1)), (0, C64::new(0.0, -0.2))]).unwrap();
    let left = LaurentSymbol::new([(-1, C64::new(0.7, 0.0)), (0, C64::new(0.1, 0.0))]).unwrap();
    for sym in [right, left] {
        match find_saddles(&sym, 0.0) {
            Err(Error::SaddleInapplicable) => {}
            other => return Err(format!("saddles on unidirectional input: {other:?}")),
        }
        let h = assemble(&BlochSymbol::from(sym.clone()), 30, Boundary::Periodic).map_err(|e| e.to_string())?;
        let sp = lattice::spectrum(&h).map_err(|e| e.to_string())?;
        match lattice::gbz_from_obc(&sym, &sp) {
            Err(Error::GbzDegenerate) => {}
            other => return Err(format!("GBZ on unidirectional input: {other:?}")),
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..100 {
        let sym = random_symbol(&mut rng);
        let v = rng.random_range(0.0..1.0);
        if let Err(e) = signature_and_orthogonality(&sym, v) {
            o.require(false, format!("symbol {i} (v = {v}): {e}"));
        }
    }
    for i in 0..50 {
        let sym = random_symbol(&mut rng);
        if let Err(e) = saddles_below_o(&sym) {
            o.require(false, format!("symbol {i}: {e}"));
        }
    }
    if let Err(e) = unidirectional_errors() {
        o.require(false, e);
    }
    for i in 0..20 {
        let sym = random_hermitian(&mut rng);
        if let Err(e) = hermitian_neutral(&sym) {
            o.require(false, format!("hermitian {i}: {e}"));
        }
    }
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    let states = [InitialState::Delta { site: 39, band: 0 }, InitialState::Flat { width: 40, band: 0 }];
    for name in ["fig4a", "fig4e"] {
        for state in &states {
            let mut sub = Outcome::new();
            preset_checks(&mut sub, name, &[Task::Evolve], Some(*state), &["evolve.lambda_tot_other_initial_state"], None);
            if !sub.pass {
                o.merge(Outcome { pass: false, detail: format!("{state:?}: {}", sub.detail) });
            }
        }
    }
    o
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "fig2a exponents and runtime", criterion_1),
        (2, "fig2b exponents and saddle contributions", criterion_2),
        (3, "fig3e classification on BZ and GBZ", criterion_3),
        (4, "non-sticky and sticky peaks", criterion_4),
        (5, "crossover time", criterion_5),
        (6, "self-healing verdicts and threshold scan", criterion_6),
        (7, "thimble decomposition and contour deformation", criterion_7),
        (8, "multiband models", criterion_8),
        (9, "random-symbol properties", criterion_9),
        (10, "initial-state robustness", criterion_10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, title, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        let status = if out.pass { "PASS" } else { "FAIL" };
        if out.pass {
            println!("{status} criterion {id:2} ({title}) [{secs:.1}s]");
        } else {
            failed += 1;
            println!("{status} criterion {id:2} ({title}) [{secs:.1}s]: {}", out.detail);
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
