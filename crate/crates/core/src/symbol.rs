//! Bloch symbols: Laurent polynomials in `β = e^{ik}` and small matrices of them.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Complex momentum with the real part reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Momentum(C64);

impl Momentum {
    pub fn new(k: C64) -> Self {
        Momentum(C64::new(wrap_angle(k.re), k.im))
    }

    pub fn real(k: f64) -> Self {
        Self::new(C64::new(k, 0.0))
    }

    /// `k = -i Log β` with the principal logarithm, then wrapped.
    pub fn from_beta(beta: C64) -> Self {
        Self::new(-I * beta.ln())
    }

    pub fn value(self) -> C64 {
        self.0
    }

    pub fn beta(self) -> C64 {
        (I * self.0).exp()
    }
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// `h(k) = Σ c_n e^{ink}`, stored sparsely by power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LaurentSymbol {
    coeffs: BTreeMap<i32, C64>,
}

impl LaurentSymbol {
    /// Build from `(power, coefficient)` pairs. Repeated powers are summed and
    /// vanishing coefficients dropped; the result must be nonzero.
    pub fn new<It: IntoIterator<Item = (i32, C64)>>(terms: It) -> Result<Self> {
        let sym = Self::from_terms(terms);
        if sym.is_zero() {
            return Err(Error::InvalidModel("symbol has no nonzero coefficient".into()));
        }
        if sym.coeffs.values().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidModel("symbol coefficient is not finite".into()));
        }
        Ok(sym)
    }

    /// Like [`LaurentSymbol::new`] but allows the zero symbol (algebra results).
    pub fn from_terms<It: IntoIterator<Item = (i32, C64)>>(terms: It) -> Self {
        let mut coeffs = BTreeMap::new();
        for (n, c) in terms {
            *coeffs.entry(n).or_insert(C64::new(0.0, 0.0)) += c;
        }
        coeffs.retain(|_, c| *c != C64::new(0.0, 0.0));
        LaurentSymbol { coeffs }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::from_terms([(0, c)])
    }

    /// The nearest-/next-nearest-neighbour chain with uniform loss `κ`.
    pub fn two_range(t1l: C64, t1r: C64, t2l: C64, t2r: C64, kappa: f64) -> Result<Self> {
        Self::new([
            (1, t1l),
            (-1, t1r),
            (2, t2l),
            (-2, t2r),
            (0, C64::new(0.0, -kappa)),
        ])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, n: i32) -> C64 {
        self.coeffs.get(&n).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, C64)> + '_ {
        self.coeffs.iter().map(|(&n, &c)| (n, c))
    }

    /// Largest power with a nonzero coefficient (`p`), clamped at 0.
    pub fn p(&self) -> i32 {
        self.coeffs.keys().next_back().copied().unwrap_or(0).max(0)
    }

    /// Minus the smallest power with a nonzero coefficient (`q`), clamped at 0.
    pub fn q(&self) -> i32 {
        (-self.coeffs.keys().next().copied().unwrap_or(0)).max(0)
    }

    pub fn max_power(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }

    pub fn min_power(&self) -> Option<i32> {
        self.coeffs.keys().next().copied()
    }

    /// Hopping range `max(p, q)`.
    pub fn range(&self) -> usize {
        self.coeffs.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    /// `Σ |c_n|`, a scale for relative thresholds.
    pub fn scale(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).sum()
    }

    pub fn eval(&self, k: C64) -> C64 {
        self.coeffs.iter().map(|(&n, &c)| c * (I * k * n as f64).exp()).sum()
    }

    pub fn eval_momentum(&self, k: Momentum) -> C64 {
        self.eval(k.value())
    }

    pub fn eval_beta(&self, beta: C64) -> C64 {
        self.coeffs.iter().map(|(&n, &c)| c * beta.powi(n)).sum()
    }

    /// `d/dk`: `c_n → i n c_n`.
    pub fn derivative_k(&self) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(&n, &c)| (n, I * n as f64 * c)))
    }

    /// `d/dβ`: `c_n β^n → n c_n β^{n-1}`.
    pub fn derivative_beta(&self) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(&n, &c)| (n - 1, n as f64 * c)))
    }

    /// Coefficients `a_0..a_{d}` of the ordinary polynomial `β^{shift} h(β)`,
    /// lowest degree first. `shift` must clear every negative power.
    pub fn cleared_poly(&self, shift: i32) -> Vec<C64> {
        let Some(maxp) = self.max_power() else {
            return vec![];
        };
        debug_assert!(self.min_power().unwrap() + shift >= 0);
        let deg = (maxp + shift).max(0) as usize;
        let mut out = vec![C64::new(0.0, 0.0); deg + 1];
        for (&n, &c) in &self.coeffs {
            out[(n + shift) as usize] += c;
        }
        out
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(&n, &c)| (n, c * s)))
    }

    /// Similarity rescaling `c_n → c_n r^n`, i.e. `h(β) → h(rβ)`.
    pub fn radial_rescale(&self, r: f64) -> Self {
        Self::from_terms(self.coeffs.iter().map(|(&n, &c)| (n, c * r.powi(n))))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_terms(self.terms().chain(other.terms()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_terms(self.terms().chain(other.terms().map(|(n, c)| (n, -c))))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for (&n, &a) in &self.coeffs {
            for (&m, &b) in &other.coeffs {
                terms.push((n + m, a * b));
            }
        }
        Self::from_terms(terms)
    }

    /// Whether `c_{-n} = conj(c_n)` for all `n` within `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.scale().max(1.0);
        self.coeffs
            .iter()
            .all(|(&n, &c)| (c - self.coeff(-n).conj()).norm() <= tol * scale)
    }
}

impl fmt::Display for LaurentSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .coeffs
            .iter()
            .map(|(n, c)| format!("({}{:+}i)β^{}", c.re, c.im, n))
            .collect();
        if parts.is_empty() {
            write!(f, "0")
        } else {
            write!(f, "{}", parts.join(" + "))
        }
    }
}

/// Square matrix of Laurent symbols, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultibandSymbol {
    bands: usize,
    entries: Vec<LaurentSymbol>,
}

impl MultibandSymbol {
    pub fn new(bands: usize, entries: Vec<LaurentSymbol>) -> Result<Self> {
        if bands == 0 {
            return Err(Error::InvalidModel("multiband symbol needs at least one band".into()));
        }
        if entries.len() != bands * bands {
            return Err(Error::InvalidModel(format!(
                "expected {} entries for a {bands}x{bands} symbol, got {}",
                bands * bands,
                entries.len()
            )));
        }
        if entries.iter().all(LaurentSymbol::is_zero) {
            return Err(Error::InvalidModel("symbol has no nonzero coefficient".into()));
        }
        Ok(MultibandSymbol { bands, entries })
    }

    pub fn single(sym: LaurentSymbol) -> Self {
        MultibandSymbol { bands: 1, entries: vec![sym] }
    }

    pub fn diagonal(diag: Vec<LaurentSymbol>) -> Result<Self> {
        let m = diag.len();
        let mut entries = vec![LaurentSymbol::zero(); m * m];
        for (i, d) in diag.into_iter().enumerate() {
            entries[i * m + i] = d;
        }
        Self::new(m, entries)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn entry(&self, row: usize, col: usize) -> &LaurentSymbol {
        &self.entries[row * self.bands + col]
    }

    /// The scalar symbol when `m = 1`.
    pub fn as_single(&self) -> Option<&LaurentSymbol> {
        (self.bands == 1).then(|| &self.entries[0])
    }

    pub fn range(&self) -> usize {
        self.entries.iter().map(LaurentSymbol::range).max().unwrap_or(0)
    }

    pub fn min_power(&self) -> i32 {
        self.entries.iter().filter_map(LaurentSymbol::min_power).min().unwrap_or(0)
    }

    pub fn max_power(&self) -> i32 {
        self.entries.iter().filter_map(LaurentSymbol::max_power).max().unwrap_or(0)
    }

    pub fn scale(&self) -> f64 {
        self.entries.iter().map(LaurentSymbol::scale).sum()
    }

    /// `m×m` coefficient block multiplying `β^n`.
    pub fn block(&self, n: i32) -> DMatrix<C64> {
        DMatrix::from_fn(self.bands, self.bands, |r, c| self.entry(r, c).coeff(n))
    }

    pub fn eval(&self, k: C64) -> DMatrix<C64> {
        DMatrix::from_fn(self.bands, self.bands, |r, c| self.entry(r, c).eval(k))
    }

    pub fn eval_beta(&self, beta: C64) -> DMatrix<C64> {
        DMatrix::from_fn(self.bands, self.bands, |r, c| self.entry(r, c).eval_beta(beta))
    }

    pub fn map_entries(&self, f: impl Fn(&LaurentSymbol) -> LaurentSymbol) -> Self {
        MultibandSymbol { bands: self.bands, entries: self.entries.iter().map(f).collect() }
    }

    /// `det[h(β) − E·I]` as a Laurent polynomial in `β`, by cofactor
    /// expansion over the Laurent ring (exact, `m ≤ 4`).
    pub fn char_poly(&self, energy: C64) -> Result<LaurentSymbol> {
        if self.bands > 4 {
            return Err(Error::InvalidModel(format!(
                "characteristic polynomial limited to 4 bands, got {}",
                self.bands
            )));
        }
        let m = self.bands;
        let shifted: Vec<LaurentSymbol> = (0..m * m)
            .map(|idx| {
                let e = &self.entries[idx];
                if idx / m == idx % m {
                    e.sub(&LaurentSymbol::constant(energy))
                } else {
                    e.clone()
                }
            })
            .collect();
        let rows: Vec<usize> = (0..m).collect();
        Ok(cofactor_det(&shifted, m, &rows, &rows))
    }

    /// Coefficients `a_j(β)` of `det[h(β) − E·I] = Σ_j a_j(β) E^j`, `j = 0..=m`,
    /// from signed sums of principal minors.
    pub fn char_poly_in_energy(&self) -> Result<Vec<LaurentSymbol>> {
        let m = self.bands;
        if m > 4 {
            return Err(Error::InvalidModel(format!(
                "characteristic polynomial limited to 4 bands, got {m}"
            )));
        }
        let mut out = vec![LaurentSymbol::zero(); m + 1];
        for mask in 0u32..(1 << m) {
            let idx: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let j = m - idx.len();
            let minor = if idx.is_empty() {
                LaurentSymbol::constant(C64::new(1.0, 0.0))
            } else {
                cofactor_det(&self.entries, m, &idx, &idx)
            };
            out[j] = if j.is_multiple_of(2) { out[j].add(&minor) } else { out[j].sub(&minor) };
        }
        Ok(out)
    }

    /// Whether every off-diagonal entry vanishes.
    pub fn is_diagonal(&self) -> bool {
        let m = self.bands;
        (0..m * m).all(|i| i / m == i % m || self.entries[i].is_zero())
    }

    /// `det h(β)` with no energy shift.
    pub fn determinant(&self) -> Result<LaurentSymbol> {
        self.char_poly(C64::new(0.0, 0.0))
    }
}

fn cofactor_det(a: &[LaurentSymbol], m: usize, rows: &[usize], cols: &[usize]) -> LaurentSymbol {
    if rows.len() == 1 {
        return a[rows[0] * m + cols[0]].clone();
    }
    let r0 = rows[0];
    let rest: Vec<usize> = rows[1..].to_vec();
    let mut acc = LaurentSymbol::zero();
    for (j, &c) in cols.iter().enumerate() {
        let entry = &a[r0 * m + c];
        if entry.is_zero() {
            continue;
        }
        let minor_cols: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let term = entry.mul(&cofactor_det(a, m, &rest, &minor_cols));
        acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    acc
}

/// Either kind of Bloch symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlochSymbol {
    Single(LaurentSymbol),
    Multi(MultibandSymbol),
}

impl BlochSymbol {
    pub fn bands(&self) -> usize {
        match self {
            BlochSymbol::Single(_) => 1,
            BlochSymbol::Multi(m) => m.bands(),
        }
    }

    pub fn as_single(&self) -> Option<&LaurentSymbol> {
        match self {
            BlochSymbol::Single(s) => Some(s),
            BlochSymbol::Multi(m) => m.as_single(),
        }
    }

    pub fn to_multiband(&self) -> MultibandSymbol {
        match self {
            BlochSymbol::Single(s) => MultibandSymbol::single(s.clone()),
            BlochSymbol::Multi(m) => m.clone(),
        }
    }
}

impl From<LaurentSymbol> for BlochSymbol {
    fn from(s: LaurentSymbol) -> Self {
        BlochSymbol::Single(s)
    }
}

impl From<MultibandSymbol> for BlochSymbol {
    fn from(s: MultibandSymbol) -> Self {
        BlochSymbol::Multi(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn fig2b() -> LaurentSymbol {
        LaurentSymbol::two_range(c(0.0, 1.2), c(0.0, -0.8), c(0.0, 0.6), c(0.0, 0.1), 0.7).unwrap()
    }

    #[test]
    fn eval_at_zero_sums_coefficients() {
        let h = fig2b().eval(c(0.0, 0.0));
        assert!((h - c(0.0, 0.4)).norm() < 1e-14);
    }

    #[test]
    fn cosine_band_vanishes_at_half_pi() {
        let s = LaurentSymbol::new([(1, c(1.0, 0.0)), (-1, c(1.0, 0.0))]).unwrap();
        assert!(s.eval(c(PI / 2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_of_cosine_band() {
        let s = LaurentSymbol::new([(1, c(1.0, 0.0)), (-1, c(1.0, 0.0))]).unwrap();
        let d = s.derivative_k();
        assert_eq!(d.coeff(1), c(0.0, 1.0));
        assert_eq!(d.coeff(-1), c(0.0, -1.0));
        assert_eq!(d.coeff(0), c(0.0, 0.0));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let s = LaurentSymbol::new([(0, c(0.0, -0.7))]).unwrap();
        assert!(s.derivative_k().is_zero());
    }

    #[test]
    fn zero_symbol_rejected() {
        assert!(LaurentSymbol::new([(1, c(0.0, 0.0))]).is_err());
    }

    #[test]
    fn powers_and_range() {
        let s = fig2b();
        assert_eq!((s.p(), s.q(), s.range()), (2, 2, 2));
        let uni = LaurentSymbol::new([(1, c(1.0, 0.0))]).unwrap();
        assert_eq!((uni.p(), uni.q()), (1, 0));
    }

    #[test]
    fn momentum_wraps_real_part() {
        let k = Momentum::new(c(-0.5, 0.3));
        assert!((k.value().re - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(k.value().im, 0.3);
        let k = Momentum::new(c(7.0, 0.0));
        assert!((k.value().re - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn one_band_char_poly_is_shift() {
        let m = MultibandSymbol::single(fig2b());
        let e = c(0.3, -0.2);
        let f = m.char_poly(e).unwrap();
        assert_eq!(f, fig2b().sub(&LaurentSymbol::constant(e)));
    }

    #[test]
    fn three_band_det_matches_numeric() {
        // diagonal-dominant 3x3 with mixed powers
        let e = |a: f64, b: f64, n: i32| LaurentSymbol::from_terms([(n, c(a, b))]);
        let entries = vec![
            e(1.0, 0.0, 1).add(&e(0.5, 0.1, -1)),
            e(0.2, 0.0, 0),
            e(0.0, 0.3, 2),
            e(0.1, 0.0, -1),
            e(0.0, -1.0, 0),
            e(0.3, 0.0, 1),
            e(0.0, 0.0, 0),
            e(0.4, 0.2, -2),
            e(1.0, 1.0, 0),
        ];
        let m = MultibandSymbol::new(3, entries).unwrap();
        let en = c(0.2, -0.4);
        let f = m.char_poly(en).unwrap();
        for &k in &[c(0.3, 0.1), c(2.0, -0.4), c(5.0, 0.0)] {
            let mut mat = m.eval(k);
            for i in 0..3 {
                mat[(i, i)] -= en;
            }
            let det = mat.determinant();
            assert!((f.eval(k) - det).norm() < 1e-12 * det.norm().max(1.0));
        }
        let a = m.char_poly_in_energy().unwrap();
        let k = c(0.7, 0.2);
        let poly: C64 = a.iter().enumerate().map(|(j, aj)| aj.eval(k) * en.powi(j as i32)).sum();
        assert!((poly - f.eval(k)).norm() < 1e-12);
    }

    #[test]
    fn hermitian_symbol_real_on_bz() {
        let s = LaurentSymbol::new([(1, c(0.3, 0.4)), (-1, c(0.3, -0.4)), (0, c(1.0, 0.0))]).unwrap();
        assert!(s.is_hermitian(1e-14));
        for j in 0..32 {
            let k = j as f64 * TAU / 32.0;
            assert!(s.eval(c(k, 0.0)).im.abs() < 1e-14);
        }
    }
}
