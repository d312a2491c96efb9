//! Saddle points of `h(k) − k v` for single-band and multiband symbols.

use std::f64::consts::TAU;

use log::warn;
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice;
use crate::linalg;
use crate::symbol::{wrap_angle, LaurentSymbol, Momentum, MultibandSymbol, C64, I};

const MERGE_TOL: f64 = 1e-8;
const DEGENERATE_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    /// Saddle momentum, real part in `[0, 2π)`.
    pub k: C64,
    /// `S = E(k_s) − k_s v`.
    pub s: C64,
    /// Band energy `E(k_s)`.
    pub energy: C64,
    pub v: f64,
    /// `d²E/dk²` at the saddle.
    pub h2: C64,
    pub band: usize,
    pub degenerate: bool,
}

impl SaddlePoint {
    pub fn beta(&self) -> C64 {
        (I * self.k).exp()
    }
}

/// `dλ/dv` at a dominant saddle: `−Im k_s`.
pub fn dlambda_dv_check(s: &SaddlePoint) -> f64 {
    -s.k.im
}

/// All `p + q` roots of `dh/dk = v` on the cylinder, Newton-refined.
pub fn find_saddles(sym: &LaurentSymbol, v: f64) -> Result<Vec<SaddlePoint>> {
    let (p, q) = (sym.p(), sym.q());
    if p == 0 || q == 0 || sym.min_power() == sym.max_power() {
        return Err(Error::SaddleInapplicable);
    }
    let d1 = sym.derivative_k();
    let d2 = d1.derivative_k();
    let g = d1.sub(&LaurentSymbol::constant(C64::new(v, 0.0)));
    let poly = g.cleared_poly(q);
    let roots = linalg::poly_roots(&poly)?;
    let scale = sym.scale().max(f64::MIN_POSITIVE);

    let mut ks: Vec<C64> = Vec::with_capacity(roots.len());
    for beta in roots {
        if beta.norm() < 1e-12 {
            return Err(Error::SpuriousRoot { modulus: beta.norm() });
        }
        let mut k = Momentum::from_beta(beta).value();
        for _ in 0..30 {
            let r = d1.eval(k) - v;
            if r.norm() <= 1e-14 * scale {
                break;
            }
            let step = r / d2.eval(k);
            k -= step;
            if step.norm() < 1e-16 {
                break;
            }
        }
        ks.push(Momentum::new(k).value());
    }

    let mut merged = vec![false; ks.len()];
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            if cyl_dist(ks[i], ks[j]) < MERGE_TOL {
                merged[i] = true;
                merged[j] = true;
            }
        }
    }
    let mut out: Vec<SaddlePoint> = ks
        .iter()
        .zip(merged)
        .map(|(&k, m)| {
            let energy = sym.eval(k);
            let h2 = d2.eval(k);
            SaddlePoint {
                k,
                s: energy - k * v,
                energy,
                v,
                h2,
                band: 0,
                degenerate: m || h2.norm() < DEGENERATE_REL * scale,
            }
        })
        .collect();
    sort_saddles(&mut out);
    Ok(out)
}

/// Order by decreasing `Im S`, then by `Re k`, so indices are reproducible.
pub fn sort_saddles(s: &mut [SaddlePoint]) {
    s.sort_by(|a, b| b.s.im.total_cmp(&a.s.im).then(a.k.re.total_cmp(&b.k.re)).then(a.k.im.total_cmp(&b.k.im)));
}

/// The saddle energy lies on the continuum OBC spectrum as an arc endpoint:
/// its double root `β_s` is the q-th and (q+1)-th root of `h(β) = E_s` by
/// modulus, so the GBZ condition `|β_q| = |β_{q+1}|` holds there.
pub fn on_gbz(sym: &LaurentSymbol, s: &SaddlePoint) -> Result<bool> {
    let q = sym.q() as usize;
    let roots = lattice::roots_at_energy(sym, s.energy)?;
    if q == 0 || q >= roots.len() {
        return Err(Error::GbzDegenerate);
    }
    let b = s.beta().norm();
    let tol = 1e-6 * b.max(1.0);
    Ok((roots[q - 1].norm() - b).abs() <= tol && (roots[q].norm() - b).abs() <= tol)
}

/// `Im O` of the infinite chain: the highest continuum GBZ energy, joined
/// with arc endpoints at saddle energies that phase sampling can miss.
pub fn continuum_top(sym: &LaurentSymbol, samples: usize) -> Result<f64> {
    let mut top = lattice::gbz_continuum(sym, samples)?.iter().map(|g| g.energy.im).fold(f64::NEG_INFINITY, f64::max);
    for s in find_saddles(sym, 0.0)? {
        if on_gbz(sym, &s)? {
            top = top.max(s.energy.im);
        }
    }
    Ok(top)
}

/// Distance on the cylinder `k_r ~ k_r + 2π`.
pub fn cyl_dist(a: C64, b: C64) -> f64 {
    let dr = wrap_angle(a.re - b.re);
    let dr = dr.min(TAU - dr);
    dr.hypot(a.im - b.im)
}

/// `f(k, E) = det[h(k) − E] = Σ_j a_j(k) E^j` with its derivatives.
#[derive(Debug, Clone)]
pub struct EnergyPolynomial {
    a: Vec<LaurentSymbol>,
    da: Vec<LaurentSymbol>,
    dda: Vec<LaurentSymbol>,
}

/// Values of `f` and its partials at one point.
#[derive(Debug, Clone, Copy)]
pub struct Partials {
    pub f: C64,
    pub fk: C64,
    pub fe: C64,
    pub fkk: C64,
    pub fke: C64,
    pub fee: C64,
}

impl EnergyPolynomial {
    pub fn new(sym: &MultibandSymbol) -> Result<Self> {
        let a = sym.char_poly_in_energy()?;
        let da: Vec<_> = a.iter().map(LaurentSymbol::derivative_k).collect();
        let dda = da.iter().map(LaurentSymbol::derivative_k).collect();
        Ok(EnergyPolynomial { a, da, dda })
    }

    pub fn partials(&self, k: C64, e: C64) -> Partials {
        let zero = C64::new(0.0, 0.0);
        let mut p = Partials { f: zero, fk: zero, fe: zero, fkk: zero, fke: zero, fee: zero };
        let mut ej = C64::new(1.0, 0.0); // E^j
        let mut ej1 = zero; // j E^{j-1}
        let mut ej2 = zero; // j(j-1) E^{j-2}
        let mut prev = zero; // E^{j-1}
        let mut prev2 = zero; // E^{j-2}
        for j in 0..self.a.len() {
            if j >= 1 {
                ej1 = prev * j as f64;
            }
            if j >= 2 {
                ej2 = prev2 * (j * (j - 1)) as f64;
            }
            let (a, da, dda) = (self.a[j].eval(k), self.da[j].eval(k), self.dda[j].eval(k));
            p.f += a * ej;
            p.fk += da * ej;
            p.fkk += dda * ej;
            p.fe += a * ej1;
            p.fke += da * ej1;
            p.fee += a * ej2;
            prev2 = prev;
            prev = ej;
            ej *= e;
        }
        p
    }

    /// Newton-correct an energy guess onto `f(k, ·) = 0`.
    pub fn energy_at(&self, k: C64, guess: C64) -> Option<C64> {
        let mut e = guess;
        for _ in 0..40 {
            let p = self.partials(k, e);
            if p.fe.norm() == 0.0 {
                return None;
            }
            let step = p.f / p.fe;
            e -= step;
            if step.norm() <= 1e-15 * e.norm().max(1.0) {
                return Some(e);
            }
        }
        let p = self.partials(k, e);
        (p.f.norm() < 1e-10).then_some(e)
    }

    /// `dE/dk` and `d²E/dk²` on the branch through `(k, E)`.
    pub fn branch_derivatives(&self, k: C64, e: C64) -> (C64, C64) {
        let p = self.partials(k, e);
        let e1 = -p.fk / p.fe;
        let e2 = -(p.fkk + 2.0 * p.fke * e1 + p.fee * e1 * e1) / p.fe;
        (e1, e2)
    }
}

/// Saddles of every energy branch of a multiband symbol.
///
/// Diagonal symbols are split into independent single-band problems; the
/// general case runs a multi-start Newton on
/// `f(k,E) = 0`, `∂_k f + v ∂_E f = 0` from a 40×40 grid of seeds.
pub fn find_saddles_multiband(sym: &MultibandSymbol, v: f64) -> Result<Vec<SaddlePoint>> {
    let m = sym.bands();
    if m > 4 {
        return Err(Error::InvalidModel(format!("multiband saddles limited to 4 bands, got {m}")));
    }
    if sym.is_diagonal() {
        let mut out = Vec::new();
        for b in 0..m {
            for mut s in find_saddles(sym.entry(b, b), v)? {
                s.band = b;
                out.push(s);
            }
        }
        sort_saddles(&mut out);
        return Ok(out);
    }
    let poly = EnergyPolynomial::new(sym)?;
    let scale = sym.scale().max(f64::MIN_POSITIVE);
    let mut found: Vec<(C64, C64)> = Vec::new();
    const GRID: usize = 40;
    for ir in 0..GRID {
        for ii in 0..GRID {
            let k0 = C64::new(TAU * ir as f64 / GRID as f64, -2.0 + 4.0 * ii as f64 / (GRID - 1) as f64);
            let Ok(seeds) = lattice::band_energies(sym, k0) else { continue };
            for e0 in seeds {
                if let Some((k, e)) = newton_2d(sym, &poly, v, k0, e0, scale) {
                    let k = Momentum::new(k).value();
                    if !found.iter().any(|&(k2, e2)| cyl_dist(k, k2) < 1e-6 && (e - e2).norm() < 1e-6) {
                        found.push((k, e));
                    }
                }
            }
        }
    }
    if found.is_empty() {
        warn!("no convergent multiband saddle seeds at v = {v}");
    }
    let mut out: Vec<SaddlePoint> = found
        .into_iter()
        .map(|(k, e)| {
            let (_, h2) = poly.branch_derivatives(k, e);
            SaddlePoint {
                k,
                s: e - k * v,
                energy: e,
                v,
                h2,
                band: assign_band(sym, k, e),
                degenerate: h2.norm() < DEGENERATE_REL * scale,
            }
        })
        .collect();
    sort_saddles(&mut out);
    Ok(out)
}

/// Saddle momenta of `Q(k) = det h(k)` with the band energies of `h` there.
/// For chiral spectra `E = ±√Q` these are the branch saddles; otherwise they
/// are not, and serve as the contrasting prediction.
pub fn det_saddles(sym: &MultibandSymbol) -> Result<Vec<(C64, Vec<C64>)>> {
    let q = sym.determinant()?;
    find_saddles(&q, 0.0)?
        .into_iter()
        .map(|s| Ok((s.k, lattice::band_energies(sym, s.k)?)))
        .collect()
}

fn newton_2d(sym: &MultibandSymbol, poly: &EnergyPolynomial, v: f64, k0: C64, e0: C64, scale: f64) -> Option<(C64, C64)> {
    let (mut k, mut e) = (k0, e0);
    for _ in 0..60 {
        let p = poly.partials(k, e);
        let f2 = p.fk + v * p.fe;
        if p.f.norm() <= 1e-13 && f2.norm() <= 1e-13 {
            break;
        }
        let jac = Matrix2::new(p.fk, p.fe, p.fkk + v * p.fke, p.fke + v * p.fee);
        let step = jac.lu().solve(&Vector2::new(p.f, f2))?;
        k -= step[0];
        e -= step[1];
        if !(k.re.is_finite() && k.im.is_finite() && e.re.is_finite() && e.im.is_finite()) || k.im.abs() > 20.0 {
            return None;
        }
    }
    let p = poly.partials(k, e);
    let ok = p.f.norm() <= 1e-10 && (p.fk + v * p.fe).norm() <= 1e-10;
    (ok && !is_branch_point(sym, k, e, scale)).then_some((k, e))
}

/// Branch points (two band energies coalescing) satisfy both saddle
/// equations with `∂_E f = 0`; they are not saddles of any branch.
fn is_branch_point(sym: &MultibandSymbol, k: C64, e: C64, scale: f64) -> bool {
    let Ok(bands) = lattice::band_energies(sym, k) else { return true };
    let mut d: Vec<f64> = bands.iter().map(|b| (b - e).norm()).collect();
    d.sort_by(f64::total_cmp);
    d.len() > 1 && d[1] < 1e-4 * scale.max(1.0)
}

/// Band index by continuation from the tracked real-axis bands: along the
/// real axis from 0 to `k_r`, then vertically to `k_r + i k_i`.
pub fn assign_band(sym: &MultibandSymbol, k: C64, e: C64) -> usize {
    let Ok(mut bands) = lattice::band_energies(sym, C64::new(0.0, 0.0)) else { return 0 };
    bands.sort_by(|a, b| a.re.total_cmp(&b.re));
    let steps = 256;
    let follow = |target: C64, from: C64, bands: &mut Vec<C64>| {
        for s in 1..=steps {
            let kk = from + (target - from) * (s as f64 / steps as f64);
            if let Ok(next) = lattice::band_energies(sym, kk) {
                *bands = lattice::match_bands(bands, &next);
            }
        }
    };
    let kr = C64::new(k.re, 0.0);
    follow(kr, C64::new(0.0, 0.0), &mut bands);
    follow(k, kr, &mut bands);
    bands
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - e).norm().total_cmp(&(b.1 - e).norm()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, CHAIN_A, CHAIN_B, CHAIN_E};
    use std::f64::consts::PI;

    fn cos_band() -> LaurentSymbol {
        LaurentSymbol::new([(1, C64::new(1.0, 0.0)), (-1, C64::new(1.0, 0.0))]).unwrap()
    }

    #[test]
    fn cosine_band_saddles() {
        let s = find_saddles(&cos_band(), 0.0).unwrap();
        assert_eq!(s.len(), 2);
        let mut ks: Vec<f64> = s.iter().map(|x| x.k.re).collect();
        ks.sort_by(f64::total_cmp);
        assert!(ks[0].abs() < 1e-12 || (ks[0] - TAU).abs() < 1e-12);
        assert!((ks[1] - PI).abs() < 1e-12);
        assert!(s.iter().any(|x| (x.s - 2.0).norm() < 1e-12));
        assert!(s.iter().any(|x| (x.s + 2.0).norm() < 1e-12));
    }

    #[test]
    fn chain_saddle_count_and_residual() {
        for params in [CHAIN_A, CHAIN_B, CHAIN_E] {
            let sym = params.symbol();
            for v in [0.0, 0.7] {
                let s = find_saddles(&sym, v).unwrap();
                assert_eq!(s.len(), 4);
                let d1 = sym.derivative_k();
                for x in &s {
                    assert!((d1.eval(x.k) - v).norm() <= 1e-10);
                    assert!((0.0..TAU).contains(&x.k.re));
                }
            }
        }
    }

    #[test]
    fn fig2b_top_saddle() {
        let s = find_saddles(&CHAIN_B.symbol(), 0.0).unwrap();
        assert!((s[0].s.im - (-0.5816)).abs() < 1e-3, "{:?}", s[0]);
        assert!((s[0].k.re - PI).abs() < 1e-9);
    }

    #[test]
    fn unidirectional_rejected() {
        let sym = LaurentSymbol::new([(1, C64::new(1.0, 0.0)), (2, C64::new(0.3, 0.0))]).unwrap();
        assert_eq!(find_saddles(&sym, 0.0).unwrap_err(), Error::SaddleInapplicable);
    }

    #[test]
    fn diagonal_multiband_duplicates_single() {
        let sym = CHAIN_A.symbol();
        let m = MultibandSymbol::diagonal(vec![sym.clone(), sym.clone()]).unwrap();
        let multi = find_saddles_multiband(&m, 0.0).unwrap();
        let single = find_saddles(&sym, 0.0).unwrap();
        assert_eq!(multi.len(), 2 * single.len());
        for s in &single {
            assert_eq!(multi.iter().filter(|x| cyl_dist(x.k, s.k) < 1e-10).count(), 2);
        }
    }

    #[test]
    fn sigma_y_saddles_are_branch_saddles() {
        let p = preset("figS3b").unwrap();
        let m = p.symbol.to_multiband();
        let got = find_saddles_multiband(&m, 0.0).unwrap();
        let a = LaurentSymbol::new([(1, C64::new(0.2, 0.0)), (-1, C64::new(0.6, 0.0)), (0, C64::new(0.0, -1.0))]).unwrap();
        let b = LaurentSymbol::new([(1, C64::new(0.2, 0.8)), (-1, C64::new(0.3, 0.0)), (0, C64::new(0.0, -1.0))]).unwrap();
        let mut want = find_saddles(&a, 0.0).unwrap();
        want.extend(find_saddles(&b, 0.0).unwrap());
        assert_eq!(got.len(), want.len(), "{got:?}");
        for w in &want {
            assert!(got.iter().any(|g| cyl_dist(g.k, w.k) < 1e-8 && (g.s - w.s).norm() < 1e-8));
        }
    }

    #[test]
    fn chiral_saddles_match_product_saddles() {
        // E = ±√(R+R−) − iκ: saddles of E are saddles of Q = R+R−
        let p = preset("figS3a").unwrap();
        let m = p.symbol.to_multiband();
        let q = m.entry(0, 1).mul(m.entry(1, 0));
        let qs = find_saddles(&q, 0.0).unwrap();
        let got = find_saddles_multiband(&m, 0.0).unwrap();
        for g in &got {
            assert!(qs.iter().any(|s| cyl_dist(s.k, g.k) < 1e-8));
            let e = (q.eval(g.k)).sqrt();
            let kappa = C64::new(0.0, -0.3);
            assert!((g.energy - (e + kappa)).norm() < 1e-8 || (g.energy - (-e + kappa)).norm() < 1e-8);
        }
        assert_eq!(got.len(), 2 * qs.len());
    }
}
