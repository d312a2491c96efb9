//! Steepest-ascent/descent flows of `Im[E(k) − kv]` from each saddle, their
//! signed intersections with the BZ or GBZ, and dominant-saddle selection.

use std::f64::consts::{FRAC_PI_2, TAU};

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice;
use crate::saddle::{self, cyl_dist, EnergyPolynomial, SaddlePoint};
use crate::symbol::{LaurentSymbol, MultibandSymbol, C64, I};

/// The analytic phase `φ(k) = E(k) − k v` whose flows are traced.
#[derive(Debug, Clone)]
pub enum Phase {
    Single { h: LaurentSymbol, d1: LaurentSymbol, v: f64 },
    Multi { sym: MultibandSymbol, poly: EnergyPolynomial, v: f64 },
}

impl Phase {
    pub fn single(h: &LaurentSymbol, v: f64) -> Self {
        Phase::Single { h: h.clone(), d1: h.derivative_k(), v }
    }

    pub fn multi(sym: &MultibandSymbol, v: f64) -> Result<Self> {
        Ok(Phase::Multi { sym: sym.clone(), poly: EnergyPolynomial::new(sym)?, v })
    }

    pub fn v(&self) -> f64 {
        match self {
            Phase::Single { v, .. } | Phase::Multi { v, .. } => *v,
        }
    }

    /// `(φ, φ')` at `k`. For multiband symbols `energy` carries the branch
    /// being followed and is updated in place.
    pub fn eval(&self, k: C64, energy: &mut C64) -> Option<(C64, C64)> {
        match self {
            Phase::Single { h, d1, v } => Some((h.eval(k) - k * *v, d1.eval(k) - *v)),
            Phase::Multi { poly, v, .. } => {
                let e = poly.energy_at(k, *energy)?;
                let (e1, _) = poly.branch_derivatives(k, e);
                if !(e1.re.is_finite() && e1.im.is_finite()) {
                    return None;
                }
                *energy = e;
                Some((e - k * *v, e1 - *v))
            }
        }
    }

    /// Largest `Im φ` on the real axis (all bands).
    pub fn bz_sup_imag(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|j| {
                let k = C64::new(TAU * j as f64 / n as f64, 0.0);
                match self {
                    Phase::Single { h, .. } => h.eval(k).im,
                    Phase::Multi { sym, .. } => lattice::band_energies(sym, k)
                        .map(|e| e.iter().map(|x| x.im).fold(f64::NEG_INFINITY, f64::max))
                        .unwrap_or(f64::NEG_INFINITY),
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Ascent,
    Descent,
}

/// Which of the two half-paths leaving the saddle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    WindowExit,
    Divergence,
    StepLimit,
    NearSaddle,
}

/// A traced half-path. Points keep an unwrapped `k_r`; `tangents` are the
/// unit-speed derivatives `dk/ds` at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPath {
    pub kind: FlowKind,
    pub branch: Branch,
    pub points: Vec<C64>,
    pub tangents: Vec<C64>,
    pub arc: Vec<f64>,
    pub termination: Termination,
    pub near_saddle: Option<usize>,
}

impl FlowPath {
    pub fn end(&self) -> C64 {
        *self.points.last().expect("paths hold their seed")
    }

    /// Cubic Hermite interpolant on segment `i` at fraction `u ∈ [0, 1]`,
    /// with its derivative in `u`.
    pub fn hermite(&self, i: usize, u: f64) -> (C64, C64) {
        let h = self.arc[i + 1] - self.arc[i];
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let (m0, m1) = (self.tangents[i] * h, self.tangents[i + 1] * h);
        let (u2, u3) = (u * u, u * u * u);
        let pos = p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m0 * (u3 - 2.0 * u2 + u)
            + p1 * (-2.0 * u3 + 3.0 * u2)
            + m1 * (u3 - u2);
        let der = p0 * (6.0 * u2 - 6.0 * u) + m0 * (3.0 * u2 - 4.0 * u + 1.0) + p1 * (-6.0 * u2 + 6.0 * u) + m1 * (3.0 * u2 - 2.0 * u);
        (pos, der)
    }
}

/// Window and integrator settings for flow tracing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub k_max: f64,
    pub arc_max: f64,
    pub delta_max: f64,
    pub eps: f64,
    pub tol: f64,
    pub h_max: f64,
    pub near_saddle: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { k_max: 6.0, arc_max: 200.0, delta_max: 50.0, eps: 1e-5, tol: 1e-10, h_max: 0.01, near_saddle: 1e-4 }
    }
}

/// Ascent and (optionally) descent paths of one saddle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleFlows {
    pub saddle: SaddlePoint,
    pub eps: f64,
    /// Ascent direction angle `φ_a = (π/2 − arg h2)/2`.
    pub phi_a: f64,
    pub ascent: [FlowPath; 2],
    pub descent: Option<[FlowPath; 2]>,
}

impl SaddleFlows {
    pub fn ascent_seed(&self, b: Branch) -> C64 {
        let d = C64::from_polar(self.eps, self.phi_a);
        match b {
            Branch::Plus => self.saddle.k + d,
            Branch::Minus => self.saddle.k - d,
        }
    }

    /// Descent seeds; `Plus` is along `e^{i(φ_a − π/2)}`, which orients the
    /// thimble so that its local intersection with the ascent path is +1.
    pub fn descent_seed(&self, b: Branch) -> C64 {
        let d = C64::from_polar(self.eps, self.phi_a - FRAC_PI_2);
        match b {
            Branch::Plus => self.saddle.k + d,
            Branch::Minus => self.saddle.k - d,
        }
    }

    pub fn non_generic(&self) -> bool {
        self.ascent.iter().chain(self.descent.iter().flatten()).any(|p| p.termination == Termination::NearSaddle)
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct Tracer<'a> {
    phase: &'a Phase,
    cfg: FlowConfig,
    /// `+1` for ascent, `−1` for descent.
    dir: f64,
    others: Vec<(usize, C64, C64)>,
}

impl Tracer<'_> {
    fn field(&self, k: C64, energy: &mut C64) -> Option<C64> {
        let (_, d) = self.phase.eval(k, energy)?;
        let n = d.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return None;
        }
        Some(I * d.conj() / n * self.dir)
    }

    fn trace(&self, seed: C64, mut energy: C64, s_im: f64, bound: f64, kind: FlowKind, branch: Branch) -> FlowPath {
        let mut path = FlowPath {
            kind,
            branch,
            points: vec![seed],
            tangents: Vec::new(),
            arc: vec![0.0],
            termination: Termination::StepLimit,
            near_saddle: None,
        };
        let Some(t0) = self.field(seed, &mut energy) else {
            path.tangents.push(C64::new(0.0, 0.0));
            path.termination = Termination::Divergence;
            return path;
        };
        path.tangents.push(t0);
        let (mut k, mut f0, mut s) = (seed, t0, 0.0);
        let mut h = 1e-3_f64.min(self.cfg.h_max);
        let mut stages = [C64::new(0.0, 0.0); 7];
        loop {
            if s >= self.cfg.arc_max {
                path.termination = Termination::StepLimit;
                break;
            }
            h = h.min(self.cfg.arc_max - s).min(self.cfg.h_max);
            stages[0] = f0;
            let mut e_stage = energy;
            let mut failed = false;
            for st in 1..7 {
                let mut y = k;
                for (j, &a) in DP_A[st][..st].iter().enumerate() {
                    y += stages[j] * (a * h);
                }
                match self.field(y, &mut e_stage) {
                    Some(f) => stages[st] = f,
                    None => {
                        failed = true;
                        break;
                    }
                }
            }
            let _ = DP_C;
            if failed {
                if h < 1e-12 {
                    path.termination = Termination::Divergence;
                    break;
                }
                h *= 0.25;
                continue;
            }
            let mut next = k;
            let mut err = C64::new(0.0, 0.0);
            for j in 0..7 {
                next += stages[j] * (DP_B[j] * h);
                err += stages[j] * ((DP_B[j] - DP_B4[j]) * h);
            }
            let err = err.norm();
            let allowed = self.cfg.tol * h;
            if err > allowed && h > 1e-10 {
                h *= (0.9 * (allowed / err).powf(0.2)).max(0.1);
                continue;
            }
            // accept; the last stage is the field at `next` (FSAL)
            k = next;
            s += h;
            f0 = stages[6];
            energy = e_stage;
            path.points.push(k);
            path.tangents.push(f0);
            path.arc.push(s);
            let grow = if err > 0.0 { 0.9 * (allowed / err).powf(0.2) } else { 5.0 };
            h *= grow.clamp(0.2, 5.0);

            let Some((val, _)) = self.phase.eval(k, &mut energy.clone()) else {
                path.termination = Termination::Divergence;
                break;
            };
            if !(k.re.is_finite() && k.im.is_finite()) {
                path.termination = Termination::Divergence;
                break;
            }
            if let Some(&(idx, _, _)) =
                self.others.iter().find(|(_, ko, eo)| cyl_dist(k, *ko) < self.cfg.near_saddle && same_sheet(self.phase, energy, *eo))
            {
                path.termination = Termination::NearSaddle;
                path.near_saddle = Some(idx);
                break;
            }
            let im = val.im;
            let done = match kind {
                FlowKind::Ascent => {
                    im > (s_im + self.cfg.delta_max).max(bound + 1.0) || (k.im.abs() > self.cfg.k_max && im > bound + 1.0)
                }
                FlowKind::Descent => im < s_im - self.cfg.delta_max || k.im.abs() > self.cfg.k_max,
            };
            if done {
                path.termination = Termination::WindowExit;
                break;
            }
        }
        path
    }
}

fn same_sheet(phase: &Phase, e: C64, other: C64) -> bool {
    match phase {
        Phase::Single { .. } => true,
        Phase::Multi { .. } => (e - other).norm() < 1e-2,
    }
}

/// Trace the two ascent and (if `descent`) two descent half-paths of `s`.
///
/// `bound` is an upper bound of `Im φ` on every contour the ascent paths will
/// be tested against; ascent stops only once it is exceeded.
pub fn trace_flows(
    s: &SaddlePoint,
    phase: &Phase,
    others: &[SaddlePoint],
    bound: f64,
    cfg: &FlowConfig,
    descent: bool,
) -> Result<SaddleFlows> {
    if s.degenerate {
        return Err(Error::DegenerateSaddle { k_re: s.k.re, k_im: s.k.im });
    }
    let phi_a = (FRAC_PI_2 - s.h2.arg()) / 2.0;
    let others: Vec<(usize, C64, C64)> = others
        .iter()
        .enumerate()
        .filter(|(_, o)| cyl_dist(o.k, s.k) > 1e-9 || (o.energy - s.energy).norm() > 1e-9)
        .map(|(i, o)| (i, o.k, o.energy))
        .collect();
    let mut flows = SaddleFlows {
        saddle: *s,
        eps: cfg.eps,
        phi_a,
        ascent: [empty(FlowKind::Ascent, Branch::Plus), empty(FlowKind::Ascent, Branch::Minus)],
        descent: None,
    };
    let up = Tracer { phase, cfg: *cfg, dir: 1.0, others: others.clone() };
    let s_im = s.s.im;
    flows.ascent = [Branch::Plus, Branch::Minus]
        .map(|b| up.trace(flows.ascent_seed(b), s.energy, s_im, bound, FlowKind::Ascent, b));
    if descent {
        let down = Tracer { phase, cfg: *cfg, dir: -1.0, others };
        flows.descent = Some(
            [Branch::Plus, Branch::Minus]
                .map(|b| down.trace(flows.descent_seed(b), s.energy, s_im, bound, FlowKind::Descent, b)),
        );
    }
    Ok(flows)
}

fn empty(kind: FlowKind, branch: Branch) -> FlowPath {
    FlowPath {
        kind,
        branch,
        points: Vec::new(),
        tangents: Vec::new(),
        arc: Vec::new(),
        termination: Termination::StepLimit,
        near_saddle: None,
    }
}

/// Smooth closed contour on the cylinder, the graph `k_i = g(k_r)` of a
/// trigonometric polynomial. `g ≡ 0` is the BZ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbzCurve {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    /// RMS deviation of the fitted points from the curve.
    pub fit_rms: f64,
}

impl GbzCurve {
    /// Least-squares trigonometric fit to points `β` (at most 24 harmonics).
    pub fn fit(betas: &[C64]) -> Result<Self> {
        let n = betas.len();
        if n < 8 {
            return Err(Error::InvalidArgument(format!("GBZ fit needs ≥ 8 points, got {n}")));
        }
        let harmonics = (n / 6).clamp(1, 24);
        let cols = 2 * harmonics + 1;
        let mut a = DMatrix::<f64>::zeros(n, cols);
        let mut b = DVector::<f64>::zeros(n);
        for (r, beta) in betas.iter().enumerate() {
            let th = beta.arg();
            a[(r, 0)] = 1.0;
            for m in 1..=harmonics {
                a[(r, 2 * m - 1)] = (m as f64 * th).cos();
                a[(r, 2 * m)] = (m as f64 * th).sin();
            }
            b[r] = -beta.norm().ln();
        }
        let svd = a.clone().svd(true, true);
        let x = svd.solve(&b, 1e-10).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let resid = &a * &x - &b;
        let curve = GbzCurve {
            mean: x[0],
            cos: (1..=harmonics).map(|m| x[2 * m - 1]).collect(),
            sin: (1..=harmonics).map(|m| x[2 * m]).collect(),
            fit_rms: (resid.norm_squared() / n as f64).sqrt(),
        };
        Ok(curve)
    }

    /// `(g, g')` at `k_r`.
    pub fn eval(&self, kr: f64) -> (f64, f64) {
        let mut g = self.mean;
        let mut d = 0.0;
        for (m, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let m = (m + 1) as f64;
            let (sn, cs) = (m * kr).sin_cos();
            g += c * cs + s * sn;
            d += m * (s * cs - c * sn);
        }
        (g, d)
    }

    pub fn point(&self, kr: f64) -> C64 {
        C64::new(kr, self.eval(kr).0)
    }
}

/// Integration contour for intersection counting.
#[derive(Debug, Clone, PartialEq)]
pub enum Contour {
    Bz,
    Gbz(GbzCurve),
}

impl Contour {
    pub fn name(&self) -> &'static str {
        match self {
            Contour::Bz => "bz",
            Contour::Gbz(_) => "gbz",
        }
    }

    /// Signed vertical distance `k_i − g(k_r)` and the contour slope.
    pub fn signed_distance(&self, k: C64) -> (f64, f64) {
        match self {
            Contour::Bz => (k.im, 0.0),
            Contour::Gbz(c) => {
                let (g, d) = c.eval(k.re);
                (k.im - g, d)
            }
        }
    }

    /// Upper bound of `Im φ` on the contour (4096 samples plus margin).
    pub fn sup_imag(&self, phase: &Phase) -> f64 {
        match self {
            Contour::Bz => phase.bz_sup_imag(),
            Contour::Gbz(c) => {
                let n = 4096;
                let mut e = C64::new(0.0, 0.0);
                (0..n)
                    .filter_map(|j| {
                        let k = c.point(TAU * j as f64 / n as f64);
                        match phase {
                            Phase::Single { .. } => phase.eval(k, &mut e).map(|(x, _)| x.im),
                            Phase::Multi { sym, .. } => lattice::band_energies(sym, k)
                                .ok()
                                .map(|es| es.iter().map(|x| (x - k * phase.v()).im).fold(f64::NEG_INFINITY, f64::max)),
                        }
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// One transversal crossing of a flow path with a contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub point: C64,
    pub sign: i32,
    pub arc: f64,
}

/// Crossings of a traced path with `contour`, in the path's traced
/// direction. Errors with `NonTransversal { retries: 0 }` if a sample lies
/// on the contour.
pub fn count_intersections(path: &FlowPath, contour: &Contour) -> Result<Vec<Crossing>> {
    let mut out = Vec::new();
    let n = path.points.len();
    if n < 2 {
        return Ok(out);
    }
    let dist = |k: C64| contour.signed_distance(k).0;
    let mut d0 = dist(path.points[0]);
    for i in 0..n - 1 {
        let d1 = dist(path.points[i + 1]);
        if d0.abs() < 1e-12 || d1.abs() < 1e-12 {
            return Err(Error::NonTransversal { retries: 0 });
        }
        if d0.signum() != d1.signum() {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let dm = dist(path.hermite(i, mid).0);
                if dm.signum() == d0.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (hi - lo) * (path.arc[i + 1] - path.arc[i]) < 1e-12 {
                    break;
                }
            }
            let u = 0.5 * (lo + hi);
            let (p, t) = path.hermite(i, u);
            let (_, slope) = contour.signed_distance(p);
            // z-component of (contour tangent × path tangent), contour (1, g')
            let z = t.im - slope * t.re;
            let sign = if z != 0.0 { z.signum() as i32 } else { (d1 - d0).signum() as i32 };
            out.push(Crossing { point: p, sign, arc: path.arc[i] + u * (path.arc[i + 1] - path.arc[i]) });
        }
        d0 = d1;
    }
    Ok(out)
}

/// Signed intersection number of the full ascent curve (oriented from the
/// `Minus` end through the saddle to the `Plus` end) with `contour`.
pub fn ascent_intersection(flows: &SaddleFlows, contour: &Contour) -> Result<(i32, Vec<Crossing>)> {
    let mut crossings = Vec::new();
    for c in count_intersections(&flows.ascent[1], contour)? {
        crossings.push(Crossing { sign: -c.sign, ..c });
    }
    // the short straight piece through the saddle
    let (a, b) = (flows.ascent_seed(Branch::Minus), flows.ascent_seed(Branch::Plus));
    let (da, db) = (contour.signed_distance(a).0, contour.signed_distance(b).0);
    if da.signum() != db.signum() {
        let (_, slope) = contour.signed_distance(flows.saddle.k);
        let t = b - a;
        let z = t.im - slope * t.re;
        crossings.push(Crossing { point: flows.saddle.k, sign: z.signum() as i32, arc: 0.0 });
    }
    crossings.extend(count_intersections(&flows.ascent[0], contour)?);
    let n = crossings.iter().map(|c| c.sign).sum();
    Ok((n, crossings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleClass {
    pub saddle: SaddlePoint,
    pub n_sigma: i32,
    pub crossings: Vec<Crossing>,
    pub non_generic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThimbleClassification {
    pub contour: String,
    pub v: f64,
    pub saddles: Vec<SaddleClass>,
    pub dominant: usize,
    /// Some flow ran into another saddle (Stokes line); a tiny parameter
    /// perturbation resolves it.
    pub non_generic: bool,
    #[serde(skip)]
    pub flows: Vec<SaddleFlows>,
}

impl ThimbleClassification {
    pub fn dominant_saddle(&self) -> &SaddlePoint {
        &self.saddles[self.dominant].saddle
    }

    pub fn n_sigma(&self) -> Vec<i32> {
        self.saddles.iter().map(|s| s.n_sigma).collect()
    }

    /// Indices of saddles with `n_σ ≠ 0`.
    pub fn contributing(&self) -> Vec<usize> {
        (0..self.saddles.len()).filter(|&i| self.saddles[i].n_sigma != 0).collect()
    }
}

/// Classify the given saddles against `contour`.
pub fn classify_saddles(
    phase: &Phase,
    saddles: &[SaddlePoint],
    contour: &Contour,
    cfg: &FlowConfig,
    descent: bool,
) -> Result<ThimbleClassification> {
    let bound = contour.sup_imag(phase).max(Contour::Bz.sup_imag(phase));
    let mut classes = Vec::with_capacity(saddles.len());
    let mut all_flows = Vec::with_capacity(saddles.len());
    for s in saddles {
        let mut c = *cfg;
        let mut retries = 0;
        let (flows, n, crossings) = loop {
            let flows = trace_flows(s, phase, saddles, bound, &c, descent)?;
            match ascent_intersection(&flows, contour) {
                Ok((n, cr)) => break (flows, n, cr),
                Err(Error::NonTransversal { .. }) if retries < 3 => {
                    retries += 1;
                    c.eps *= 3.0;
                }
                Err(Error::NonTransversal { .. }) => return Err(Error::NonTransversal { retries }),
                Err(e) => return Err(e),
            }
        };
        let non_generic = flows.non_generic();
        classes.push(SaddleClass { saddle: *s, n_sigma: n, crossings, non_generic });
        all_flows.push(flows);
    }
    let non_generic = classes.iter().any(|c| c.non_generic);
    if non_generic {
        debug!("flow ran into another saddle (Stokes line)");
    }
    let dominant = classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.n_sigma != 0)
        .max_by(|a, b| a.1.saddle.s.im.total_cmp(&b.1.saddle.s.im).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or(Error::NoContributingSaddle { v: phase.v() })?;
    Ok(ThimbleClassification {
        contour: contour.name().to_string(),
        v: phase.v(),
        saddles: classes,
        dominant,
        non_generic,
        flows: all_flows,
    })
}

/// Find saddles of a single-band symbol at `v` and classify them.
pub fn classify(sym: &LaurentSymbol, v: f64, contour: &Contour) -> Result<ThimbleClassification> {
    let saddles = saddle::find_saddles(sym, v)?;
    classify_saddles(&Phase::single(sym, v), &saddles, contour, &FlowConfig::default(), false)
}

/// Multiband counterpart of [`classify`] (BZ contour).
pub fn classify_multiband(sym: &MultibandSymbol, v: f64) -> Result<ThimbleClassification> {
    if let Some(single) = sym.as_single() {
        return classify(single, v, &Contour::Bz);
    }
    let saddles = saddle::find_saddles_multiband(sym, v)?;
    classify_saddles(&Phase::multi(sym, v)?, &saddles, &Contour::Bz, &FlowConfig::default(), false)
}

/// Smooth GBZ contour of a single-band symbol from its OBC spectrum.
pub fn gbz_contour(sym: &LaurentSymbol, spectrum: &lattice::SpectrumSet) -> Result<Contour> {
    let pts = lattice::gbz_from_obc(sym, spectrum)?;
    let betas: Vec<C64> = pts.iter().flat_map(|p| [p.inner, p.outer]).collect();
    Ok(Contour::Gbz(GbzCurve::fit(&betas)?))
}

const GL_X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// `∫ e^{−i h(k) t} dk` along a traced path (Hermite interpolant, 5-point
/// Gauss–Legendre per segment), in the traced direction.
pub fn path_integral(h: &LaurentSymbol, path: &FlowPath, t: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..path.points.len().saturating_sub(1) {
        for (x, w) in GL_X.iter().zip(GL_W) {
            let u = 0.5 * (x + 1.0);
            let (k, dk) = path.hermite(i, u);
            acc += (-I * h.eval(k) * t).exp() * dk * (0.5 * w);
        }
    }
    acc
}

/// `(1/2π) ∫_{D_σ} e^{−i h(k) t} dk` along the oriented thimble.
pub fn thimble_integral(h: &LaurentSymbol, flows: &SaddleFlows, t: f64) -> Result<C64> {
    let d = flows
        .descent
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("descent paths were not traced".into()))?;
    let (a, b) = (flows.descent_seed(Branch::Minus), flows.descent_seed(Branch::Plus));
    let mut mid = C64::new(0.0, 0.0);
    for (x, w) in GL_X.iter().zip(GL_W) {
        let k = a + (b - a) * (0.5 * (x + 1.0));
        mid += (-I * h.eval(k) * t).exp() * (b - a) * (0.5 * w);
    }
    let total = path_integral(h, &d[0], t) + mid - path_integral(h, &d[1], t);
    Ok(total / TAU)
}

/// `(1/2π) ∫ e^{−i h(k) t} dk` over the closed contour (trapezoid rule,
/// spectrally accurate for the periodic analytic integrand).
pub fn contour_integral(h: &LaurentSymbol, contour: &Contour, t: f64, samples: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..samples {
        let kr = TAU * j as f64 / samples as f64;
        let (k, dk) = match contour {
            Contour::Bz => (C64::new(kr, 0.0), C64::new(1.0, 0.0)),
            Contour::Gbz(c) => {
                let (g, d) = c.eval(kr);
                (C64::new(kr, g), C64::new(1.0, d))
            }
        };
        acc += (-I * h.eval(k) * t).exp() * dk;
    }
    acc / samples as f64
}

/// `|∫_BZ − Σ n_σ ∫_{D_σ}| / |∫_BZ|` at time `t` (requires descent paths).
pub fn decomposition_residual(h: &LaurentSymbol, class: &ThimbleClassification, t: f64) -> Result<f64> {
    let bz = contour_integral(h, &Contour::Bz, t, 4096);
    let mut sum = C64::new(0.0, 0.0);
    for (c, f) in class.saddles.iter().zip(&class.flows) {
        if c.n_sigma != 0 {
            sum += thimble_integral(h, f, t)? * c.n_sigma as f64;
        }
    }
    Ok((bz - sum).norm() / bz.norm())
}
