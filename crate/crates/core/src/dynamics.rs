//! Wavefunction evolution under the OBC Hamiltonian, Lyapunov-exponent fits,
//! `λ(v)`, the point `P` and the crossover time.

use std::f64::consts::TAU;

use log::{debug, warn};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::Cdd;
use crate::error::{Error, Result};
use crate::lattice::{self, LatticeHamiltonian, SparseOperator, SpectrumSet};
use crate::saddle::SaddlePoint;
use crate::symbol::{BlochSymbol, C64, I};
use crate::thimble::{self, ThimbleClassification};

/// Uniform time grid `t_j = j·dt`, `j = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_end: f64) -> Self {
        TimeGrid { dt, steps: (t_end / dt).round() as usize }
    }

    /// Step `min(0.02, t_c/2000)` up to `t_end`.
    pub fn for_crossover(t_c: f64, t_end: f64) -> Self {
        Self::new(0.02_f64.min(t_c / 2000.0), t_end)
    }

    pub fn t_end(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.dt * j as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// `Σ_n e^{−iE_n t} |ψ_n^R⟩⟨ψ_n^L|ψ0⟩` in double precision.
    Spectral,
    /// Taylor propagation of `dψ/dt = −iHψ` in double-double precision.
    Taylor,
    /// Taylor up to `switch_time`, spectral afterwards. The spectral sum
    /// loses relative accuracy only while `|ψ|` sits far below its largest
    /// eigen-components, i.e. at short times.
    Hybrid,
}

/// Amplitudes are stored as logarithms so that neither growth nor decay
/// over hundreds of e-folds can overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// Index (in the `x·m + band` basis) of the monitored component.
    pub x0: usize,
    pub ln_amp_x0: Vec<f64>,
    pub ln_norm: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    /// Per-site amplitude profiles rescaled to a maximum of 1.
    pub snapshots: Vec<Vec<f64>>,
    /// Hybrid runs: `max_x |ψ_x^T − ψ_x^S| / ‖ψ‖` between the Taylor and the
    /// spectral state at the hand-over.
    pub backend_mismatch: Option<f64>,
    /// Time of the hand-over from Taylor to spectral, if any. A hybrid run
    /// whose backends never agree stays with Taylor throughout.
    pub switch_time: Option<f64>,
}

impl EvolutionTrace {
    pub fn amp_x0(&self) -> Vec<f64> {
        self.ln_amp_x0.iter().map(|x| x.exp()).collect()
    }

    pub fn norm(&self) -> Vec<f64> {
        self.ln_norm.iter().map(|x| x.exp()).collect()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub backend: Backend,
    /// Record a site profile every `snapshot_stride` steps (0: never).
    pub snapshot_stride: usize,
    /// Number of bands per site, to aggregate site profiles.
    pub bands: usize,
    /// Hybrid backend: earliest hand-over time. The hand-over happens at the
    /// first check (every `SWITCH_CHECK` steps) where the backends agree to
    /// `SWITCH_TOL`, and at `switch_until` at the latest.
    pub switch_time: f64,
    pub switch_until: f64,
    /// No snapshots after this time.
    pub snapshot_until: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { backend: Backend::Taylor, snapshot_stride: 0, bands: 1, switch_time: f64::INFINITY, switch_until: f64::INFINITY, snapshot_until: f64::INFINITY }
    }
}

/// Double-double state `e^{log_scale} · ψ`.
#[derive(Debug, Clone)]
pub struct DdState {
    pub psi: Vec<Cdd>,
    pub log_scale: f64,
}

impl DdState {
    pub fn new(psi0: &[C64]) -> Self {
        DdState { psi: psi0.iter().map(|&z| Cdd::from_c64(z)).collect(), log_scale: 0.0 }
    }

    pub fn ln_norm(&self) -> f64 {
        0.5 * self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().ln() + self.log_scale
    }

    pub fn ln_abs(&self, i: usize) -> f64 {
        0.5 * self.psi[i].norm_sqr().ln() + self.log_scale
    }

    /// Keep the stored vector near unit size.
    pub fn renormalize(&mut self) {
        let n2: f64 = self.psi.iter().map(|z| z.norm_sqr()).sum();
        if !(1e-200..=1e200).contains(&n2) && n2 > 0.0 {
            let n = n2.sqrt();
            let s = 1.0 / n;
            for z in &mut self.psi {
                *z = z.scale(s);
            }
            self.log_scale += n.ln();
        }
    }

    /// Components times `e^{log_scale − shift}`, in `f64`.
    pub fn to_c64(&self, shift: f64) -> Vec<C64> {
        let f = (self.log_scale - shift).exp();
        self.psi.iter().map(|z| z.to_c64() * f).collect()
    }
}

/// Fixed-step `e^{−iH dt}` by a truncated Taylor series in double-double.
#[derive(Debug, Clone)]
pub struct TaylorPropagator {
    op: SparseOperator,
    dt: f64,
    terms: usize,
}

impl TaylorPropagator {
    pub fn new(op: SparseOperator, dt: f64) -> Self {
        // (dt‖H‖)^J / J! below double-double resolution
        let x = dt * op.norm_inf();
        let mut term = 1.0_f64;
        let mut terms = 0;
        while terms < 200 {
            terms += 1;
            term *= x / terms as f64;
            if term < 1e-34 {
                break;
            }
        }
        TaylorPropagator { op, dt, terms }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut DdState) {
        let n = state.psi.len();
        let mut term = state.psi.clone();
        let mut next = vec![Cdd::default(); n];
        for j in 1..=self.terms {
            let c = -I * (self.dt / j as f64);
            for (o, row) in next.iter_mut().zip(&self.op.rows) {
                let mut acc = Cdd::default();
                for &(col, h) in row {
                    acc += term[col].mul_c64(h);
                }
                *o = acc.mul_c64(c);
            }
            std::mem::swap(&mut term, &mut next);
            for (p, t) in state.psi.iter_mut().zip(&term) {
                *p += *t;
            }
        }
        state.renormalize();
    }
}

fn site_profile(v: &[C64], bands: usize) -> Vec<f64> {
    let prof: Vec<f64> = v.chunks(bands).map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    let m = prof.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        prof.iter().map(|p| p / m).collect()
    } else {
        prof
    }
}

const SWITCH_CHECK: usize = 25;
const SWITCH_TOL: f64 = 1e-9;

/// Spectral propagator in the balanced frame of a [`SpectrumSet`].
struct SpectralPropagator {
    coef: DVector<C64>,
    values: Vec<C64>,
    right: DMatrix<C64>,
    scale: Vec<f64>,
    gmax: f64,
}

impl SpectralPropagator {
    fn new(sp: &SpectrumSet, psi0: &[C64], bands: usize) -> Self {
        let dim = psi0.len();
        let r = sp.similarity_ratio;
        let scale: Vec<f64> = (0..dim).map(|i| r.powi((i / bands) as i32)).collect();
        let b = &sp.balanced;
        let psi0b = DVector::from_iterator(dim, psi0.iter().zip(&scale).map(|(z, s)| z / s));
        let coef = &b.left * psi0b;
        let gmax = b.values.iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max);
        SpectralPropagator { coef, values: b.values.clone(), right: b.right.clone(), scale, gmax }
    }

    /// `(ψ(t)·e^{−g t}, g t)`, with `g` the largest `Im E_n`.
    fn state(&self, t: f64) -> (Vec<C64>, f64) {
        let g = C64::new(0.0, self.gmax);
        let w = DVector::from_iterator(
            self.values.len(),
            self.values.iter().zip(self.coef.iter()).map(|(e, c)| c * (-I * (e - g) * t).exp()),
        );
        let psi = &self.right * w;
        (psi.iter().zip(&self.scale).map(|(z, s)| z * s).collect(), self.gmax * t)
    }
}

/// Evolve `psi0` (unit norm) under `H` on `grid`, monitoring component `x0`.
pub fn evolve(
    h: &LatticeHamiltonian,
    spectrum: Option<&SpectrumSet>,
    psi0: &[C64],
    x0: usize,
    grid: TimeGrid,
    opts: &EvolveOptions,
) -> Result<EvolutionTrace> {
    let dim = h.dim();
    if psi0.len() != dim || x0 >= dim {
        return Err(Error::InvalidArgument(format!(
            "initial state has {} entries, lattice needs {dim} (x0 = {x0})",
            psi0.len()
        )));
    }
    let n0: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("initial state must be normalized (‖ψ0‖ = {n0})")));
    }
    let mut trace = EvolutionTrace {
        times: Vec::with_capacity(grid.steps + 1),
        x0,
        ln_amp_x0: Vec::with_capacity(grid.steps + 1),
        ln_norm: Vec::with_capacity(grid.steps + 1),
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        backend_mismatch: None,
        switch_time: None,
    };
    let bands = h.bands();
    let (mut switch, until) = match opts.backend {
        Backend::Taylor => (f64::INFINITY, f64::INFINITY),
        Backend::Spectral => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        Backend::Hybrid => (opts.switch_time, opts.switch_until.max(opts.switch_time)),
    };
    let needs_spectral = grid.t_end() > switch;
    let owned;
    let spectral = if needs_spectral {
        let sp = match spectrum {
            Some(s) => s,
            None => {
                owned = crate::lattice::spectrum(h)?;
                &owned
            }
        };
        Some(SpectralPropagator::new(sp, psi0, bands))
    } else {
        None
    };
    let prop = (switch > 0.0).then(|| TaylorPropagator::new(h.sparse(), grid.dt));
    let mut state = DdState::new(psi0);
    let snap = |j: usize| opts.snapshot_stride > 0 && j.is_multiple_of(opts.snapshot_stride) && grid.time(j) <= opts.snapshot_until;
    let mut taylor = switch > 0.0;
    for j in 0..=grid.steps {
        let t = grid.time(j);
        if taylor {
            if j > 0 {
                prop.as_ref().expect("taylor propagator").step(&mut state);
            }
            let ln_n = state.ln_norm();
            let ln_x = state.ln_abs(x0);
            trace.times.push(t);
            trace.ln_amp_x0.push(ln_x);
            trace.ln_norm.push(ln_n);
            if snap(j) {
                trace.snapshot_times.push(t);
                trace.snapshots.push(site_profile(&state.to_c64(ln_n), bands));
            }
            if let Some(sp) = &spectral {
                let last = grid.time(j + 1) > until;
                if t >= switch && t <= until && (j % SWITCH_CHECK == 0 || last) {
                    let (psi_s, off) = sp.state(t);
                    let psi_t = state.to_c64(off);
                    let n_s: f64 = psi_s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    let d = psi_s.iter().zip(&psi_t).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / n_s;
                    trace.backend_mismatch = Some(d);
                    if d < SWITCH_TOL {
                        taylor = false;
                        switch = t;
                        debug!("spectral hand-over at t = {t} (mismatch {d:.2e})");
                    } else if last {
                        // ill-conditioned eigenbasis: stay with Taylor
                        warn!("backends disagree by {d:.2e} at t = {t}; continuing with Taylor");
                        switch = f64::INFINITY;
                    }
                }
            }
        } else {
            let sp = spectral.as_ref().expect("spectral propagator");
            let (psi, off) = sp.state(t);
            let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            trace.times.push(t);
            trace.ln_amp_x0.push(psi[x0].norm().ln() + off);
            trace.ln_norm.push(0.5 * n2.ln() + off);
            if snap(j) {
                trace.snapshot_times.push(t);
                trace.snapshots.push(site_profile(&psi, bands));
            }
        }
    }
    trace.switch_time = (spectral.is_some() && switch.is_finite()).then_some(switch);
    Ok(trace)
}

/// `δ_{x, site}` on band `band` (0-based site).
pub fn delta_state(dim: usize, bands: usize, site: usize, band: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[site * bands + band] = C64::new(1.0, 0.0);
    v
}

/// Uniform profile over sites `0..width` on band `band`, normalized.
pub fn flat_state(dim: usize, bands: usize, width: usize, band: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    let a = 1.0 / (width as f64).sqrt();
    for x in 0..width {
        v[x * bands + band] = C64::new(a, 0.0);
    }
    v
}

/// Least-squares line over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    /// `r2 < 0.99`.
    pub poor_fit: bool,
}

/// Fit `y ≈ slope·t + intercept` for `t ∈ [a, b]`.
pub fn fit_line(t: &[f64], y: &[f64], a: f64, b: f64) -> Result<LineFit> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(t, y)| **t >= a && **t <= b && y.is_finite()).map(|(t, y)| (*t, *y)).collect();
    let n = pts.len();
    if n < 10 {
        return Err(Error::InsufficientTrace { start: a, end: b, samples: n });
    }
    let nf = n as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LineFit { slope, intercept, r2, t_start: a, t_end: b, samples: n, poor_fit: r2 < 0.99 })
}

/// Fit `y ≈ λ t − ½·p·ln t + c`, returning `(λ, p)`: the saddle-point
/// prefactor `t^{−1/2}` (`p = 1`) or its edge-modified `t^{−3/2}` (`p = 3`).
pub fn fit_with_log(t: &[f64], y: &[f64], a: f64, b: f64) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(t, y)| **t >= a && **t <= b && **t > 0.0 && y.is_finite()).map(|(t, y)| (*t, *y)).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientTrace { start: a, end: b, samples: pts.len() });
    }
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (t, y) in pts {
        let row = nalgebra::Vector3::new(t, t.ln(), 1.0);
        ata += row * row.transpose();
        aty += row * y;
    }
    let x = ata.lu().solve(&aty).ok_or_else(|| Error::InvalidArgument("singular log-fit".into()))?;
    Ok((x[0], -2.0 * x[1]))
}


const K_GRID: usize = 4096;

/// Extremal bulk group velocities `v_± = max/min dRe E/dk` over real `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupVelocities {
    pub v_plus: f64,
    pub k_plus: f64,
    pub v_minus: f64,
    pub k_minus: f64,
}

/// Per-band samples of `E(k)` on the uniform real grid.
fn band_table(sym: &BlochSymbol) -> Result<Vec<Vec<C64>>> {
    band_table_n(sym, K_GRID)
}

fn band_table_n(sym: &BlochSymbol, samples: usize) -> Result<Vec<Vec<C64>>> {
    let curve = lattice::pbc_curve(sym, samples)?;
    let m = sym.bands();
    Ok((0..m).map(|b| curve.iter().map(|s| s.energies[b]).collect()).collect())
}

/// Central differences along a tracked band, skipping the wrap-around
/// point when band tracking permutes the bands over one period.
fn band_derivative(e: &[C64]) -> Vec<Option<C64>> {
    let n = e.len();
    let dk = TAU / n as f64;
    (0..n)
        .map(|j| {
            if j == 0 || j == n - 1 {
                let (a, b) = (e[(j + n - 1) % n], e[(j + 1) % n]);
                if (a - e[j]).norm() + (b - e[j]).norm() > 0.5 * (e[1] - e[0]).norm().max(1e-3) * 8.0 {
                    return None;
                }
                Some((b - a) / (2.0 * dk))
            } else {
                Some((e[j + 1] - e[j - 1]) / (2.0 * dk))
            }
        })
        .collect()
}

/// Newton polish of a real stationary point of `f` (given `f'`, `f''`).
fn polish_real(k0: f64, d1: impl Fn(f64) -> f64, d2: impl Fn(f64) -> f64) -> f64 {
    let mut k = k0;
    for _ in 0..50 {
        let h = d2(k);
        if h == 0.0 {
            break;
        }
        let step = d1(k) / h;
        k -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    if (k - k0).abs() > 0.01 {
        k0
    } else {
        k.rem_euclid(TAU)
    }
}

pub fn group_velocities(sym: &BlochSymbol) -> Result<GroupVelocities> {
    if let Some(h) = sym.as_single() {
        let d1 = h.derivative_k();
        let d2 = d1.derivative_k();
        let d3 = d2.derivative_k();
        let v = |k: f64| d1.eval(C64::new(k, 0.0)).re;
        let ks: Vec<f64> = (0..K_GRID).map(|j| TAU * j as f64 / K_GRID as f64).collect();
        let imax = (0..K_GRID).max_by(|&a, &b| v(ks[a]).total_cmp(&v(ks[b]))).expect("grid");
        let imin = (0..K_GRID).min_by(|&a, &b| v(ks[a]).total_cmp(&v(ks[b]))).expect("grid");
        let pol = |k0| polish_real(k0, |k| d2.eval(C64::new(k, 0.0)).re, |k| d3.eval(C64::new(k, 0.0)).re);
        let (kp, km) = (pol(ks[imax]), pol(ks[imin]));
        let (kp, km) = (
            if v(kp) >= v(ks[imax]) { kp } else { ks[imax] },
            if v(km) <= v(ks[imin]) { km } else { ks[imin] },
        );
        return Ok(GroupVelocities { v_plus: v(kp), k_plus: kp, v_minus: v(km), k_minus: km });
    }
    let table = band_table(sym)?;
    let mut g = GroupVelocities { v_plus: f64::NEG_INFINITY, k_plus: 0.0, v_minus: f64::INFINITY, k_minus: 0.0 };
    for band in &table {
        for (j, d) in band_derivative(band).into_iter().enumerate() {
            let Some(d) = d else { continue };
            let k = TAU * j as f64 / K_GRID as f64;
            if d.re > g.v_plus {
                g.v_plus = d.re;
                g.k_plus = k;
            }
            if d.re < g.v_minus {
                g.v_minus = d.re;
                g.k_minus = k;
            }
        }
    }
    Ok(g)
}

/// Admissible maximum of `Im E(k)` on the real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointP {
    pub k: f64,
    pub energy: C64,
    /// Group velocity `dRe E/dk` at `k`.
    pub v: f64,
    pub band: usize,
}

/// Real-`k` local maxima of `Im E(k)` with positive group velocity; the one
/// with the largest `Im E`, or `None` (flat `Im E`, or no admissible maximum).
pub fn find_p(sym: &BlochSymbol) -> Result<Option<PointP>> {
    find_p_on_grid(sym, K_GRID)
}

pub fn find_p_on_grid(sym: &BlochSymbol, samples: usize) -> Result<Option<PointP>> {
    let scale = sym.to_multiband().scale().max(f64::MIN_POSITIVE);
    let table = band_table_n(sym, samples)?;
    let mut best: Option<PointP> = None;
    for (band, e) in table.iter().enumerate() {
        let n = e.len();
        let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z.im), b.max(z.im)));
        if hi - lo < 1e-12 * scale {
            continue;
        }
        let deriv = band_derivative(e);
        for j in 0..n {
            let (a, b) = (e[(j + n - 1) % n].im, e[(j + 1) % n].im);
            let c = e[j].im;
            if !(c > a && c >= b) {
                continue;
            }
            let Some(d) = deriv[j] else { continue };
            let k0 = TAU * j as f64 / n as f64;
            let cand = match sym.as_single() {
                Some(h) => {
                    let d1 = h.derivative_k();
                    let d2 = d1.derivative_k();
                    let k = polish_real(k0, |k| d1.eval(C64::new(k, 0.0)).im, |k| d2.eval(C64::new(k, 0.0)).im);
                    PointP { k, energy: h.eval(C64::new(k, 0.0)), v: d1.eval(C64::new(k, 0.0)).re, band }
                }
                None => {
                    // parabolic vertex through the three grid samples
                    let den = a - 2.0 * c + b;
                    let off = if den != 0.0 { 0.5 * (a - b) / den } else { 0.0 };
                    let dk = TAU / n as f64;
                    let em = e[j] + (e[(j + 1) % n] - e[(j + n - 1) % n]) * (0.5 * off) + (e[(j + 1) % n] - 2.0 * e[j] + e[(j + n - 1) % n]) * (0.5 * off * off);
                    PointP { k: (k0 + off * dk).rem_euclid(TAU), energy: em, v: d.re, band }
                }
            };
            if cand.v > 0.0 && best.is_none_or(|p| cand.energy.im > p.energy.im) {
                best = Some(cand);
            }
        }
    }
    Ok(best)
}

/// Crossover estimate `t_c = 2(L−1)/v_c`, `v_c = 2|v_+v_−|/(|v_+|+|v_−|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverEstimate {
    pub velocities: GroupVelocities,
    pub v_c: f64,
    pub t_c_theo: f64,
}

pub fn crossover_theo(sym: &BlochSymbol, sites: usize) -> Result<CrossoverEstimate> {
    let g = group_velocities(sym)?;
    let (a, b) = (g.v_plus.abs(), g.v_minus.abs());
    if a == 0.0 || b == 0.0 {
        return Err(Error::InvalidArgument("crossover time needs group velocities of both signs".into()));
    }
    let v_c = 2.0 * a * b / (a + b);
    Ok(CrossoverEstimate { velocities: g, v_c, t_c_theo: 2.0 * (sites as f64 - 1.0) / v_c })
}

/// First time after the short-regime minimum of `ln|ψ_x0|` (searched on
/// `[0, search_end]`) at which the trace reaches `mu·t + c2`.
pub fn crossover_num(trace: &EvolutionTrace, mu: f64, c2: f64, search_end: f64) -> Option<f64> {
    let y = &trace.ln_amp_x0;
    let t = &trace.times;
    let imin = (0..t.len()).filter(|&i| t[i] <= search_end && y[i].is_finite()).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    let line = |i: usize| mu * t[i] + c2;
    for i in imin + 1..t.len() {
        if y[i] >= line(i) {
            let (d0, d1) = (y[i - 1] - line(i - 1), y[i] - line(i));
            let u = if d1 != d0 { -d0 / (d1 - d0) } else { 1.0 };
            return Some(t[i - 1] + u.clamp(0.0, 1.0) * (t[i] - t[i - 1]));
        }
    }
    None
}

/// One point of `λ(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub v: f64,
    pub lambda: f64,
    pub dominant: SaddlePoint,
    pub local_max: bool,
}

fn classify_at(sym: &BlochSymbol, v: f64) -> Result<ThimbleClassification> {
    let run = |v: f64| match sym {
        BlochSymbol::Single(h) => thimble::classify(h, v, &thimble::Contour::Bz),
        BlochSymbol::Multi(m) => thimble::classify_multiband(m, v),
    };
    // step off exactly degenerate saddles
    let mut vv = v;
    for _ in 0..4 {
        match run(vv) {
            Ok(c) if !c.saddles.iter().any(|s| s.saddle.degenerate) => return Ok(c),
            Err(Error::DegenerateSaddle { .. }) | Ok(_) => vv += 1e-7 * (1.0 + v.abs()),
            Err(e) => return Err(e),
        }
    }
    run(vv)
}

/// `λ(v) = Im S_d(v)` from the dominant contributing saddle at `v`.
pub fn lambda_at(sym: &BlochSymbol, v: f64) -> Result<(f64, SaddlePoint)> {
    let c = classify_at(sym, v)?;
    if c.contributing().is_empty() {
        return Err(Error::NoContributingSaddle { v });
    }
    let d = *c.dominant_saddle();
    Ok((d.s.im, d))
}

/// `λ(v)` over a sorted, non-negative grid, with interior local maxima marked.
pub fn lambda_of_v(sym: &BlochSymbol, grid: &[f64]) -> Result<Vec<LambdaPoint>> {
    if grid.iter().any(|v| *v < 0.0) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("v grid must be non-negative and sorted".into()));
    }
    let vals: Vec<(f64, SaddlePoint)> = grid.par_iter().map(|&v| lambda_at(sym, v)).collect::<Result<_>>()?;
    let n = vals.len();
    Ok((0..n)
        .map(|i| {
            let l = vals[i].0;
            let left = i == 0 || vals[i - 1].0 < l;
            let right = i + 1 == n || vals[i + 1].0 <= l;
            LambdaPoint { v: grid[i], lambda: l, dominant: vals[i].1, local_max: left && right && n > 1 }
        })
        .collect())
}

/// `n` points over `[0, 1.5 v_+]`.
pub fn default_v_grid(sym: &BlochSymbol, n: usize) -> Result<Vec<f64>> {
    let g = group_velocities(sym)?;
    let top = 1.5 * g.v_plus.max(0.0);
    Ok((0..n).map(|i| top * i as f64 / (n.max(2) - 1) as f64).collect())
}

/// Peak of `λ(v)`: grid argmax refined by golden section to `1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VPeak {
    pub v_peak: f64,
    pub lambda: f64,
    pub dominant: SaddlePoint,
}

pub fn v_peak(sym: &BlochSymbol, curve: &[LambdaPoint]) -> Result<VPeak> {
    let i = (0..curve.len())
        .max_by(|&a, &b| curve[a].lambda.total_cmp(&curve[b].lambda))
        .ok_or_else(|| Error::InvalidArgument("empty λ(v) curve".into()))?;
    let mut a = curve[i.saturating_sub(1)].v;
    let mut b = curve[(i + 1).min(curve.len() - 1)].v;
    let f = |v: f64| lambda_at(sym, v).map(|x| -x.0);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d)?;
        }
    }
    let mut v = 0.5 * (a + b);
    // pinned to the edge of the admissible range
    if v < 2e-6 {
        v = 0.0;
    }
    let (lambda, dominant) = lambda_at(sym, v)?;
    if lambda < curve[i].lambda {
        return Ok(VPeak { v_peak: curve[i].v, lambda: curve[i].lambda, dominant: curve[i].dominant });
    }
    Ok(VPeak { v_peak: v, lambda, dominant })
}

/// Fit windows as fractions of `t_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindows {
    pub short: (f64, f64),
    pub long_start: f64,
}

impl Default for FitWindows {
    fn default() -> Self {
        FitWindows { short: (0.2, 0.5), long_start: 1.5 }
    }
}

/// Default trace length in units of `t_c`.
pub const TRACE_SPAN: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub lambda_fit: LineFit,
    pub mu_fit: LineFit,
    pub lambda_tot_fit: LineFit,
    pub mu_tot_fit: LineFit,
    /// Short-window slope of `ln|ψ_x0| + (3/2) ln t`: the edge prefactor
    /// `t^{−3/2}` removed.
    pub lambda_edge: f64,
    /// `(λ, p)` from `ln|ψ_x0| ≈ λt − ½p ln t + c` on the short window.
    pub lambda_log: (f64, f64),
    /// The same for `ln‖ψ‖`.
    pub lambda_tot_log: (f64, f64),
    pub lambda_pred: f64,
    pub mu_pred: f64,
    pub lambda_tot_pred: f64,
    pub dominant: SaddlePoint,
    pub point_o: C64,
    pub p: Option<PointP>,
    pub v_peak: Option<f64>,
    pub t_c_num: Option<f64>,
    pub t_c_theo: f64,
    pub crossover: CrossoverEstimate,
    pub windows: FitWindows,
    pub poor_fit: bool,
}

/// Fit the four exponents and attach the predictions.
pub fn fit_exponents(
    trace: &EvolutionTrace,
    spectrum: &SpectrumSet,
    classification: &ThimbleClassification,
    sym: &BlochSymbol,
    sites: usize,
    windows: FitWindows,
) -> Result<LyapunovReport> {
    let crossover = crossover_theo(sym, sites)?;
    let tc = crossover.t_c_theo;
    let end = trace.t_end();
    if end < 3.0 * tc {
        return Err(Error::InsufficientTrace { start: 0.0, end, samples: trace.times.len() });
    }
    let (a, b) = (windows.short.0 * tc, windows.short.1 * tc);
    let c = windows.long_start * tc;
    let t = &trace.times;
    let lambda_fit = fit_line(t, &trace.ln_amp_x0, a, b)?;
    let mu_fit = fit_line(t, &trace.ln_amp_x0, c, end)?;
    let lambda_tot_fit = fit_line(t, &trace.ln_norm, a, b)?;
    let mu_tot_fit = fit_line(t, &trace.ln_norm, c, end)?;
    let edge: Vec<f64> = t.iter().zip(&trace.ln_amp_x0).map(|(t, y)| y + 1.5 * t.max(1e-300).ln()).collect();
    let lambda_edge = fit_line(t, &edge, a, b)?.slope;
    let lambda_log = fit_with_log(t, &trace.ln_amp_x0, a, b)?;
    let lambda_tot_log = fit_with_log(t, &trace.ln_norm, a, b)?;

    let dominant = *classification.dominant_saddle();
    let p = find_p(sym)?;
    let lambda_pred = dominant.s.im;
    let lambda_tot_pred = p.map_or(lambda_pred, |p| lambda_pred.max(p.energy.im));
    let mu_pred = spectrum.point_o.im;

    let c2 = long_intercept(trace, mu_pred, c);
    let t_c_num = crossover_num(trace, mu_pred, c2, c);
    debug!("fit windows short [{a:.3}, {b:.3}] long [{c:.3}, {end:.3}]");
    let poor_fit = [&lambda_fit, &mu_fit, &lambda_tot_fit, &mu_tot_fit].iter().any(|f| f.poor_fit);
    if poor_fit {
        warn!("poor fit (R² < 0.99) in at least one window");
    }
    Ok(LyapunovReport {
        lambda_fit,
        mu_fit,
        lambda_tot_fit,
        mu_tot_fit,
        lambda_edge,
        lambda_log,
        lambda_tot_log,
        lambda_pred,
        mu_pred,
        lambda_tot_pred,
        dominant,
        point_o: spectrum.point_o,
        p,
        v_peak: None,
        t_c_num,
        t_c_theo: tc,
        crossover,
        windows,
        poor_fit,
    })
}

/// Evolve `psi0` over `TRACE_SPAN · t_c` with the hybrid backend, switching
/// at the start of the long window.
pub fn standard_trace(
    h: &LatticeHamiltonian,
    spectrum: &SpectrumSet,
    psi0: &[C64],
    x0: usize,
    t_c: f64,
    windows: FitWindows,
    snapshot_dt: Option<f64>,
) -> Result<EvolutionTrace> {
    let grid = TimeGrid::for_crossover(t_c, TRACE_SPAN * t_c);
    let stride = snapshot_dt.map_or(0, |s| ((s / grid.dt).round() as usize).max(1));
    let opts = EvolveOptions {
        backend: Backend::Hybrid,
        snapshot_stride: stride,
        bands: h.bands(),
        switch_time: windows.long_start * t_c,
        switch_until: 6.0 * t_c,
        snapshot_until: 2.0 * t_c,
    };
    evolve(h, Some(spectrum), psi0, x0, grid, &opts)
}

/// Measured crossover of `ψ0 = δ_{x,1}` on an `sites`-site open chain:
/// theory estimate plus `t_c_num` from a hybrid trace over `TRACE_SPAN · t_c`.
pub fn measure_crossover(sym: &BlochSymbol, sites: usize) -> Result<(CrossoverEstimate, Option<f64>)> {
    let est = crossover_theo(sym, sites)?;
    let h = lattice::assemble(sym, sites, lattice::Boundary::Open)?;
    let sp = lattice::spectrum(&h)?;
    let psi0 = delta_state(h.dim(), h.bands(), 0, 0);
    let w = FitWindows::default();
    let tr = standard_trace(&h, &sp, &psi0, 0, est.t_c_theo, w, None)?;
    let c = w.long_start * est.t_c_theo;
    let mu = sp.point_o.im;
    Ok((est, crossover_num(&tr, mu, long_intercept(&tr, mu, c), c)))
}

/// Least-squares intercept of `ln|ψ_x0| − mu·t` over `t ≥ start`.
pub fn long_intercept(trace: &EvolutionTrace, mu: f64, start: f64) -> f64 {
    let (sum, n) = trace
        .times
        .iter()
        .zip(&trace.ln_amp_x0)
        .filter(|(t, y)| **t >= start && y.is_finite())
        .fold((0.0, 0usize), |(s, n), (t, y)| (s + y - mu * t, n + 1));
    sum / n.max(1) as f64
}

/// Argmax site of each snapshot.
pub fn peak_sites(trace: &EvolutionTrace) -> Vec<usize> {
    trace
        .snapshots
        .iter()
        .map(|p| (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0))
        .collect()
}
