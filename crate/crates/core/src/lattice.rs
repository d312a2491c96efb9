//! Finite real-space Hamiltonians under open/periodic boundaries, their
//! spectra, and generalized-Brillouin-zone points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, EigenDecomposition};
use crate::symbol::{BlochSymbol, LaurentSymbol, MultibandSymbol, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Dense lattice Hamiltonian, site-major: index `x·m + band`.
///
/// A coefficient `c_n` of the symbol sits on `|x⟩⟨x+n|`, so a plane wave
/// `e^{ikx}` is an eigenvector of the periodic chain with eigenvalue `h(k)`.
#[derive(Debug, Clone)]
pub struct LatticeHamiltonian {
    sites: usize,
    bands: usize,
    boundary: Boundary,
    symbol: MultibandSymbol,
    matrix: DMatrix<C64>,
}

impl LatticeHamiltonian {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn dim(&self) -> usize {
        self.sites * self.bands
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn symbol(&self) -> &MultibandSymbol {
        &self.symbol
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Row-compressed nonzeros, for propagation.
    pub fn sparse(&self) -> SparseOperator {
        SparseOperator::from_dense(&self.matrix)
    }
}

/// Row-compressed complex operator.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, C64)>>,
}

impl SparseOperator {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        let rows = (0..dim)
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != C64::new(0.0, 0.0)).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        SparseOperator { dim, rows }
    }

    /// Add `value` to the diagonal entries listed in `indices`.
    pub fn with_diagonal_shift(&self, indices: impl IntoIterator<Item = usize>, value: C64) -> Self {
        let mut out = self.clone();
        for i in indices {
            if let Some(e) = out.rows[i].iter_mut().find(|(j, _)| *j == i) {
                e.1 += value;
            } else {
                out.rows[i].push((i, value));
                out.rows[i].sort_by_key(|(j, _)| *j);
            }
        }
        out
    }

    /// Max absolute row sum (`∞`-norm).
    pub fn norm_inf(&self) -> f64 {
        self.rows.iter().map(|r| r.iter().map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }
}

pub fn assemble(sym: &BlochSymbol, sites: usize, boundary: Boundary) -> Result<LatticeHamiltonian> {
    let symbol = sym.to_multiband();
    let range = symbol.range();
    if sites <= 2 * range {
        return Err(Error::LatticeTooShort { size: sites, min: 2 * range });
    }
    let m = symbol.bands();
    let dim = sites * m;
    let mut matrix = DMatrix::<C64>::zeros(dim, dim);
    let (lo, hi) = (symbol.min_power(), symbol.max_power());
    for n in lo..=hi {
        let block = symbol.block(n);
        if block.iter().all(|c| *c == C64::new(0.0, 0.0)) {
            continue;
        }
        for x in 0..sites as i64 {
            let y = x + n as i64;
            let y = match boundary {
                Boundary::Open if !(0..sites as i64).contains(&y) => continue,
                Boundary::Open => y,
                Boundary::Periodic => y.rem_euclid(sites as i64),
            } as usize;
            let x = x as usize;
            for a in 0..m {
                for b in 0..m {
                    matrix[(x * m + a, y * m + b)] += block[(a, b)];
                }
            }
        }
    }
    Ok(LatticeHamiltonian { sites, bands: m, boundary, symbol, matrix })
}

/// OBC eigen-data plus the distinguished point `O`.
#[derive(Debug, Clone)]
pub struct SpectrumSet {
    /// Eigen-triples in the site basis.
    pub eigen: EigenDecomposition,
    /// The same triples for the balanced matrix `D⁻¹ H D`, `D = diag(r^x)`.
    /// Skin-effect eigenbases are exponentially ill-conditioned in the site
    /// basis, so identities among the vectors are checked here.
    pub balanced: EigenDecomposition,
    pub point_o: C64,
    pub o_index: usize,
    /// Geometric ratio `r` of the diagonal similarity used for the solve.
    pub similarity_ratio: f64,
    /// Eigenvalue pairs closer than `1e-10` (flagged, not repaired).
    pub near_defective: Vec<(usize, usize)>,
    pub pbc: Vec<PbcSample>,
    pub gbz: Vec<GbzPoint>,
}

impl SpectrumSet {
    pub fn values(&self) -> &[C64] {
        &self.eigen.values
    }

    pub fn max_imag(&self) -> f64 {
        self.point_o.im
    }

    /// `max |⟨ψ_m^L|ψ_n^R⟩ − δ_mn|` (balanced frame).
    pub fn biorthogonality_defect(&self) -> f64 {
        let g = &self.balanced.left * &self.balanced.right;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// `max |Σ_n |ψ_n^R⟩⟨ψ_n^L| − I|` (balanced frame).
    pub fn completeness_defect(&self) -> f64 {
        let p = &self.balanced.right * &self.balanced.left;
        let mut worst: f64 = 0.0;
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// Ratio `r` minimizing the Frobenius norm of `D⁻¹ H D`, `D = diag(r^x)`.
///
/// This is the geometric special case of diagonal balancing: it removes
/// most of the exponential non-normality of skin-effect matrices, so the
/// eigensolver sees a well-conditioned problem with the same spectrum.
pub fn balancing_ratio(sym: &MultibandSymbol) -> f64 {
    let weights: Vec<(i32, f64)> = (sym.min_power()..=sym.max_power())
        .map(|n| (n, sym.block(n).iter().map(|c| c.norm_sqr()).sum::<f64>()))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    if weights.iter().all(|(n, _)| *n == 0) {
        return 1.0;
    }
    let cost = |ln_r: f64| -> f64 { weights.iter().map(|(n, w)| w * (2.0 * *n as f64 * ln_r).exp()).sum() };
    let (mut a, mut b) = (-7.0_f64, 7.0_f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    ((a + b) / 2.0).exp()
}

pub fn spectrum(h: &LatticeHamiltonian) -> Result<SpectrumSet> {
    let r = match h.boundary {
        Boundary::Open => balancing_ratio(&h.symbol),
        Boundary::Periodic => 1.0,
    };
    let m = h.bands;
    let dim = h.dim();
    let scale = |idx: usize| r.powi((idx / m) as i32);
    let scaled = DMatrix::from_fn(dim, dim, |i, j| h.matrix[(i, j)] * (scale(j) / scale(i)));
    let balanced = linalg::eigen_decompose(&scaled)?;
    let mut eigen = balanced.clone();

    if r != 1.0 {
        // back to the original frame: R = D R', L = L' D⁻¹
        for i in 0..dim {
            let s = scale(i);
            for n in 0..dim {
                eigen.right[(i, n)] *= s;
                eigen.left[(n, i)] /= s;
            }
        }
        for n in 0..dim {
            let nrm = eigen.right.column(n).norm();
            for i in 0..dim {
                eigen.right[(i, n)] /= nrm;
                eigen.left[(n, i)] *= nrm;
            }
        }
    }

    let (o_index, point_o) = eigen
        .values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.im.total_cmp(&b.1.im))
        .expect("nonempty spectrum");
    let near_defective = linalg::near_defective_pairs(&eigen.values, 1e-10);
    Ok(SpectrumSet {
        eigen,
        balanced,
        point_o,
        o_index,
        similarity_ratio: r,
        near_defective,
        pbc: Vec::new(),
        gbz: Vec::new(),
    })
}

/// Eigenvalues only (cheaper; same balancing).
pub fn eigenvalues(h: &LatticeHamiltonian) -> Result<Vec<C64>> {
    let r = match h.boundary {
        Boundary::Open => balancing_ratio(&h.symbol),
        Boundary::Periodic => 1.0,
    };
    let m = h.bands;
    let dim = h.dim();
    let scale = |idx: usize| r.powi((idx / m) as i32);
    let scaled = DMatrix::from_fn(dim, dim, |i, j| h.matrix[(i, j)] * (scale(j) / scale(i)));
    linalg::eigenvalues(scaled)
}

/// One OBC eigenvalue with the two middle-modulus roots of `h(β) = E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbzPoint {
    pub energy: C64,
    pub inner: C64,
    pub outer: C64,
}

/// Roots of `h(β) = energy`, sorted by modulus.
pub fn roots_at_energy(sym: &LaurentSymbol, energy: C64) -> Result<Vec<C64>> {
    let shifted = sym.sub(&LaurentSymbol::constant(energy));
    let q = sym.q();
    let mut roots = linalg::poly_roots(&shifted.cleared_poly(q))?;
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(roots)
}

/// GBZ points from the finite-size OBC spectrum: for every eigenvalue, the
/// roots `β_q`, `β_{q+1}` of `h(β) = E_n` (ordered by modulus).
pub fn gbz_from_obc(sym: &LaurentSymbol, spectrum: &SpectrumSet) -> Result<Vec<GbzPoint>> {
    let (p, q) = (sym.p(), sym.q());
    if p == 0 || q == 0 {
        return Err(Error::GbzDegenerate);
    }
    spectrum
        .values()
        .iter()
        .map(|&e| {
            let roots = roots_at_energy(sym, e)?;
            let q = q as usize;
            Ok(GbzPoint { energy: e, inner: roots[q - 1], outer: roots[q] })
        })
        .collect()
}

/// Continuum GBZ sampled by the relative phase `θ` of root pairs: for each
/// `θ_j = 2πj/samples`, solve `h(β) = h(β e^{iθ})` and keep the `β` whose
/// energy has `|β_q| = |β_{q+1}| = |β|`. Independent of any lattice size.
pub fn gbz_continuum(sym: &LaurentSymbol, samples: usize) -> Result<Vec<GbzPoint>> {
    let (p, q) = (sym.p(), sym.q());
    if p == 0 || q == 0 {
        return Err(Error::GbzDegenerate);
    }
    let q = q as usize;
    let one = C64::new(1.0, 0.0);
    let mut out = Vec::new();
    for j in 1..samples {
        let rot = C64::from_polar(1.0, std::f64::consts::TAU * j as f64 / samples as f64);
        let diff = LaurentSymbol::from_terms(sym.terms().map(|(m, c)| (m, c * (one - rot.powi(m)))));
        if diff.is_zero() {
            continue;
        }
        for b in linalg::poly_roots(&diff.cleared_poly(diff.q()))? {
            let r = b.norm();
            if !r.is_finite() || r < 1e-12 {
                continue;
            }
            let energy = sym.eval_beta(b);
            let roots = roots_at_energy(sym, energy)?;
            let tol = 1e-6 * r;
            if (roots[q - 1].norm() - r).abs() <= tol && (roots[q].norm() - r).abs() <= tol {
                out.push(GbzPoint { energy, inner: roots[q - 1], outer: roots[q] });
            }
        }
    }
    Ok(out)
}

/// Per-band energies of `h(k)` at one real momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbcSample {
    pub k: f64,
    pub energies: Vec<C64>,
}

/// Band energies of a small matrix symbol at complex `k`, unordered.
pub fn band_energies(sym: &MultibandSymbol, k: C64) -> Result<Vec<C64>> {
    if let Some(s) = sym.as_single() {
        return Ok(vec![s.eval(k)]);
    }
    linalg::eigenvalues(sym.eval(k))
}

/// Reorder `next` to best continue `prev` (minimal total distance).
pub fn match_bands(prev: &[C64], next: &[C64]) -> Vec<C64> {
    let m = prev.len();
    if m <= 1 {
        return next.to_vec();
    }
    if m <= 4 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..m).collect();
        permute(&mut perm, 0, &mut |p| {
            let cost: f64 = p.iter().enumerate().map(|(i, &j)| (prev[i] - next[j]).norm()).sum();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, p.to_vec()));
            }
        });
        let (_, p) = best.expect("at least one permutation");
        return p.iter().map(|&j| next[j]).collect();
    }
    let mut used = vec![false; m];
    prev.iter()
        .map(|&e| {
            let (j, _) = next
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .min_by(|a, b| (a.1 - e).norm().total_cmp(&(b.1 - e).norm()))
                .expect("free band");
            used[j] = true;
            next[j]
        })
        .collect()
}

fn permute(p: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}

/// PBC spectrum on a uniform grid of `samples` real momenta in `[0, 2π)`,
/// band-tracked by continuity.
pub fn pbc_curve(sym: &BlochSymbol, samples: usize) -> Result<Vec<PbcSample>> {
    if samples < 64 {
        return Err(Error::InvalidArgument(format!("pbc_curve needs ≥ 64 samples, got {samples}")));
    }
    let multi = sym.to_multiband();
    let mut out: Vec<PbcSample> = Vec::with_capacity(samples);
    for j in 0..samples {
        let k = std::f64::consts::TAU * j as f64 / samples as f64;
        let mut e = band_energies(&multi, C64::new(k, 0.0))?;
        if let Some(prev) = out.last() {
            e = match_bands(&prev.energies, &e);
        } else {
            e.sort_by(|a, b| a.re.total_cmp(&b.re));
        }
        out.push(PbcSample { k, energies: e });
    }
    Ok(out)
}

/// Winding of a closed sampled curve around `point`.
pub fn winding_of_curve(curve: &[C64], point: C64) -> f64 {
    let mut total = 0.0;
    for i in 0..curve.len() {
        let a = curve[i] - point;
        let b = curve[(i + 1) % curve.len()] - point;
        total += (b / a).arg();
    }
    total / std::f64::consts::TAU
}
