//! Edge eigenstates of the semi-infinite chain on a long open lattice,
//! the three-phase lossy disruption, and the self-healing verdict.

use std::f64::consts::TAU;

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fit_line, fit_with_log, find_p, DdState, LineFit, TaylorPropagator};
use crate::error::{Error, Result};
use crate::lattice::{self, Boundary, LatticeHamiltonian};
use crate::linalg;
use crate::symbol::{BlochSymbol, LaurentSymbol, C64};
use crate::thimble;

const WINDING_SAMPLES: usize = 4096;

/// Winding of `h(β) − E0` around `|β| = 1`.
pub fn winding(sym: &LaurentSymbol, e0: C64) -> Result<i64> {
    let curve: Vec<C64> = (0..WINDING_SAMPLES)
        .map(|j| sym.eval(C64::new(TAU * j as f64 / WINDING_SAMPLES as f64, 0.0)) - e0)
        .collect();
    let distance = curve.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if distance <= 1e-6 {
        return Err(Error::EnergyOnSpectrum { distance });
    }
    let w = lattice::winding_of_curve(&curve, C64::new(0.0, 0.0));
    if (w - w.round()).abs() > 1e-3 {
        return Err(Error::InvalidArgument(format!("winding {w} not integral; refine the sampling")));
    }
    Ok(w.round() as i64)
}

/// `ψ0(x) = Σ_j c_j β_j^x` built from the three roots of `h(β) = E0` inside
/// the unit circle, vanishing on the two missing sites left of the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SibcState {
    pub e0: C64,
    pub betas: Vec<C64>,
    pub coeffs: Vec<C64>,
    pub psi0: Vec<C64>,
    /// `max |(Hψ0 − E0ψ0)_x|` over sites `1..=L−8`.
    pub residual: f64,
}

pub fn build_sibc(sym: &LaurentSymbol, e0: C64, sites: usize) -> Result<SibcState> {
    if sym.p() != 2 || sym.q() != 2 {
        return Err(Error::InvalidModel("edge-state construction needs hoppings of range exactly 2 on both sides".into()));
    }
    if sites < 200 {
        return Err(Error::LatticeTooShort { size: sites, min: 200 });
    }
    let w = winding(sym, e0)?;
    if w != 1 {
        return Err(Error::WrongWinding { winding: w });
    }
    let roots = lattice::roots_at_energy(sym, e0)?;
    let (r3, r4) = (roots[2].norm(), roots[3].norm());
    if (r4 - r3).abs() <= 1e-8 * r4.max(1.0) {
        return Err(Error::EnergyAtGbz);
    }
    let betas = roots[..3].to_vec();
    // rows: ψ(0) = 0, ψ(−1) = 0; columns scaled by |β| to keep β^{-1} of order one
    let col_scale: Vec<f64> = betas.iter().map(|b| b.norm()).collect();
    let a = DMatrix::from_fn(2, 3, |r, c| betas[c].powi(-(r as i32)) * col_scale[c]);
    let ns = linalg::null_space(&a, 1e-10);
    if ns.ncols() != 1 {
        return Err(Error::BoundaryDegenerate { dimension: ns.ncols() });
    }
    let coeffs: Vec<C64> = (0..3).map(|c| ns[(c, 0)] * col_scale[c]).collect();
    let mut psi0: Vec<C64> = (1..=sites)
        .map(|x| betas.iter().zip(&coeffs).map(|(b, c)| c * b.powi(x as i32)).sum())
        .collect();
    let n = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi0.iter_mut().for_each(|z| *z /= n);
    let coeffs: Vec<C64> = coeffs.iter().map(|c| c / n).collect();

    let h = lattice::assemble(&BlochSymbol::Single(sym.clone()), sites, Boundary::Open)?;
    let mut hpsi = vec![C64::new(0.0, 0.0); sites];
    h.sparse().apply(&psi0, &mut hpsi);
    let residual = (0..sites - 8).map(|x| (hpsi[x] - e0 * psi0[x]).norm()).fold(0.0, f64::max);
    if residual > 1e-8 * e0.norm().max(1.0) {
        warn!("edge state residual {residual:.2e} at E0 = {e0}");
    }
    Ok(SibcState { e0, betas, coeffs, psi0, residual })
}

/// Lossy disruption `V = −iγ` on sites `offset..offset + l` during `[t1, t2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HealingParams {
    pub gamma: f64,
    pub l: usize,
    pub offset: usize,
    pub t1: f64,
    pub t2: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Record every this many time units.
    pub record_every: f64,
}

impl Default for HealingParams {
    fn default() -> Self {
        HealingParams { gamma: 10.0, l: 10, offset: 0, t1: 2.0, t2: 4.0, t_end: 150.0, dt: 0.02, record_every: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Heals,
    NotHealing,
}

/// `ε(t) = ‖ξ‖² / ‖φ‖²` with `φ = e^{−iE0 t}ψ0` and `ξ = ψ − φ`, in logs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HealingSeries {
    pub times: Vec<f64>,
    pub ln_epsilon: Vec<f64>,
    pub ln_norm_phi: Vec<f64>,
    pub ln_norm_xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealingReport {
    pub e0: C64,
    /// `max[Im S_d, Im P]`.
    pub threshold: f64,
    pub verdict: Verdict,
    /// Slope of `ln ε` on `[t2 + 2, t_stop]`.
    pub slope: f64,
    /// `(s, p)` of `ln ε ≈ s·t − ½p ln t + c` on the same window.
    pub slope_log: Option<(f64, f64)>,
    /// `None` when `ξ ≡ 0` (then `slope = −∞`).
    pub fit: Option<LineFit>,
    /// `|ξ_{L−5}| > 1e-8 ‖ψ‖` before `t_end`: the deviation reached the far
    /// edge and the run stops there.
    pub horizon_reached: bool,
    pub t_stop: f64,
    #[serde(skip)]
    pub series: HealingSeries,
}

/// Healing threshold `λ_tot = max[Im S_d, Im P]` of a single-band symbol.
pub fn healing_threshold(sym: &LaurentSymbol) -> Result<f64> {
    let c = thimble::classify(sym, 0.0, &thimble::Contour::Bz)?;
    let sd = c.dominant_saddle().s.im;
    let p = find_p(&BlochSymbol::Single(sym.clone()))?;
    Ok(p.map_or(sd, |p| sd.max(p.energy.im)))
}

/// Build the edge state at `E0` and run the disruption on `sites` sites.
pub fn run_healing(sym: &LaurentSymbol, e0: C64, sites: usize, params: &HealingParams, threshold: f64) -> Result<HealingReport> {
    let state = build_sibc(sym, e0, sites)?;
    let h = lattice::assemble(&BlochSymbol::Single(sym.clone()), sites, Boundary::Open)?;
    run_healing_from(&h, &state.psi0, e0, params, threshold)
}

/// Disruption run for an arbitrary normalized `ψ0` that evolves as `e^{−iE0 t}ψ0` under `H`.
pub fn run_healing_from(h: &LatticeHamiltonian, psi0: &[C64], e0: C64, params: &HealingParams, threshold: f64) -> Result<HealingReport> {
    let p = params;
    if !(0.0 <= p.t1 && p.t1 < p.t2 && p.t2 < p.t_end) {
        return Err(Error::InvalidArgument(format!("need 0 ≤ t1 < t2 < t_end, got {} {} {}", p.t1, p.t2, p.t_end)));
    }
    let n = h.dim();
    if psi0.len() != n || p.offset + p.l > n {
        return Err(Error::InvalidArgument("state length or disruption range does not fit the lattice".into()));
    }
    if n < 6 {
        return Err(Error::LatticeTooShort { size: n, min: 6 });
    }
    let base = h.sparse();
    let disrupted = base.with_diagonal_shift(p.offset..p.offset + p.l, C64::new(0.0, -p.gamma));
    let free = TaylorPropagator::new(base, p.dt);
    let lossy = TaylorPropagator::new(disrupted, p.dt);
    let steps = (p.t_end / p.dt).round() as usize;
    let stride = ((p.record_every / p.dt).round() as usize).max(1);
    let watch = n - 5;

    // ψ and the undisturbed φ coincide before t1; their difference ξ obeys
    // the free equation after t2, so only [t1, t2) needs two states
    let mut psi = DdState::new(psi0);
    let mut phi: Option<DdState> = None;
    let mut xi: Option<DdState> = None;
    let mut series = HealingSeries::default();
    let mut horizon_reached = false;
    let mut t_stop = p.t_end;
    let in_v = |t: f64| t >= p.t1 - 1e-9 && t < p.t2 - 1e-9;
    for j in 0..=steps {
        let t = p.dt * j as f64;
        if j > 0 {
            let t_prev = p.dt * (j - 1) as f64;
            if let Some(x) = xi.as_mut() {
                free.step(x);
            } else if in_v(t_prev) {
                let f = phi.get_or_insert_with(|| psi.clone());
                free.step(f);
                lossy.step(&mut psi);
            } else {
                free.step(&mut psi);
            }
            if let Some(f) = phi.as_ref().filter(|_| !in_v(t)) {
                xi = Some(difference(&psi, f));
                phi = None;
            }
        }
        if j % stride != 0 && j != steps {
            continue;
        }
        // rescaled by ‖φ(t)‖ = e^{Im E0 t} of the edge state
        let ln_phi = e0.im * t;
        let dev: Vec<C64> = match (&xi, &phi) {
            (Some(x), _) => x.to_c64(ln_phi),
            (None, Some(f)) => difference(&psi, f).to_c64(ln_phi),
            (None, None) => vec![C64::new(0.0, 0.0); n],
        };
        let xi2: f64 = dev.iter().map(|z| z.norm_sqr()).sum();
        series.times.push(t);
        series.ln_epsilon.push(xi2.ln());
        series.ln_norm_phi.push(ln_phi);
        series.ln_norm_xi.push(0.5 * xi2.ln() + ln_phi);
        // ‖ψ‖ ≥ ‖φ‖ − ‖ξ‖ with ‖φ‖ = 1 here
        let scale = (1.0 + xi2.sqrt()).max(1.0);
        if dev[watch].norm() > 1e-8 * scale {
            horizon_reached = true;
            t_stop = t;
            warn!("finite-size horizon reached at t = {t}");
            break;
        }
    }
    let window = |t: &f64| *t >= p.t2 + 2.0 && *t <= t_stop;
    let untouched = series.times.iter().zip(&series.ln_epsilon).filter(|(t, _)| window(t)).all(|(_, e)| *e == f64::NEG_INFINITY);
    let (fit, slope, slope_log) = if untouched {
        // ξ ≡ 0: nothing was disturbed
        (None, f64::NEG_INFINITY, None)
    } else {
        let f = fit_line(&series.times, &series.ln_epsilon, p.t2 + 2.0, t_stop)?;
        let g = fit_with_log(&series.times, &series.ln_epsilon, p.t2 + 2.0, t_stop).ok();
        (Some(f), f.slope, g)
    };
    let verdict = if slope < 0.0 { Verdict::Heals } else { Verdict::NotHealing };
    debug!("E0 = {e0}: slope {slope:.4} → {verdict:?}");
    Ok(HealingReport { e0, threshold, verdict, slope, slope_log, fit, horizon_reached, t_stop, series })
}

/// `a − b` on a common scale.
fn difference(a: &DdState, b: &DdState) -> DdState {
    let m = a.log_scale.max(b.log_scale);
    let (fa, fb) = ((a.log_scale - m).exp(), (b.log_scale - m).exp());
    let psi = a.psi.iter().zip(&b.psi).map(|(x, y)| x.scale(fa) - y.scale(fb)).collect();
    let mut d = DdState { psi, log_scale: m };
    d.renormalize();
    d
}

/// Verdicts over a list of energies, each run independent.
pub fn scan(sym: &LaurentSymbol, energies: &[C64], sites: usize, params: &HealingParams, threshold: f64) -> Vec<Result<HealingReport>> {
    use rayon::prelude::*;
    energies.par_iter().map(|&e0| run_healing(sym, e0, sites, params, threshold)).collect()
}

/// Largest `Im E0` judged not healing and smallest judged healing, for a
/// scan ordered by `Im E0`. `None` when the verdicts do not flip exactly once.
pub fn flip_bracket(reports: &[HealingReport]) -> Option<(f64, f64)> {
    let mut v: Vec<(f64, Verdict)> = reports.iter().map(|r| (r.e0.im, r.verdict)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let flips: Vec<usize> = (1..v.len()).filter(|&i| v[i].1 != v[i - 1].1).collect();
    match flips.as_slice() {
        [i] if v[*i - 1].1 == Verdict::NotHealing => Some((v[*i - 1].0, v[*i].0)),
        _ => None,
    }
}

/// OBC eigenvector of `h` nearest to `target`, normalized, with its eigenvalue.
pub fn obc_eigenstate(h: &LatticeHamiltonian, target: C64) -> Result<(C64, Vec<C64>)> {
    let sp = lattice::spectrum(h)?;
    let i = (0..sp.values().len())
        .min_by(|&a, &b| (sp.values()[a] - target).norm().total_cmp(&(sp.values()[b] - target).norm()))
        .ok_or(Error::InvalidArgument("empty spectrum".into()))?;
    let v: Vec<C64> = sp.eigen.right.column(i).iter().cloned().collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok((sp.values()[i], v.iter().map(|z| z / n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CHAIN_A;

    fn fig6a() -> LaurentSymbol {
        CHAIN_A.with_kappa(0.0).symbol()
    }

    #[test]
    fn winding_examples() {
        assert_eq!(winding(&fig6a(), C64::new(-1.0, 0.05)).unwrap(), 1);
        assert_eq!(winding(&fig6a(), C64::new(100.0, 0.0)).unwrap(), 0);
    }

    #[test]
    fn edge_state_residual() {
        let s = build_sibc(&fig6a(), C64::new(-1.0, 0.05), 600).unwrap();
        assert!(s.residual <= 1e-8, "{}", s.residual);
        assert!(s.psi0[0].norm() > s.psi0[300].norm());
    }

    #[test]
    fn no_disruption_no_deviation() {
        let sym = fig6a();
        let params = HealingParams { gamma: 0.0, t_end: 10.0, ..Default::default() };
        let r = run_healing(&sym, C64::new(-1.0, 0.05), 200, &params, 0.0).unwrap();
        assert!(r.series.ln_epsilon.iter().all(|e| *e < (1e-20f64).ln()));
    }
}
