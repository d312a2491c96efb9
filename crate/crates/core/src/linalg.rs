//! Dense complex eigen-decomposition and polynomial root finding.
//!
//! The Schur form comes from `nalgebra`'s Hessenberg + shifted-QR routine;
//! eigenvectors are recovered here by back-substitution on the triangular
//! factor, and left eigenvectors as the rows of the inverse right basis so
//! that the pair is biorthonormal by construction.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::symbol::C64;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 0;

/// Eigenvalues with biorthonormal right/left eigenvectors.
///
/// `right.column(n)` is `|ψ_n^R⟩` with unit 2-norm and `left.row(n)` is
/// `⟨ψ_n^L|` (already conjugated), so `left * right ≈ I`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub right: DMatrix<C64>,
    pub left: DMatrix<C64>,
}

/// Complex Schur factorization `A = Q T Q^†`.
pub fn complex_schur(a: DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let schur = Schur::try_new(a, SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::EigenNoConvergence { indices: (0..n).collect() })?;
    Ok(schur.unpack())
}

pub fn eigenvalues(a: DMatrix<C64>) -> Result<Vec<C64>> {
    let (_, t) = complex_schur(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Full eigen-decomposition of a general complex matrix.
pub fn eigen_decompose(a: &DMatrix<C64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let norm = a.norm().max(f64::MIN_POSITIVE);
    let (q, t) = complex_schur(a.clone())?;
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    // Eigenvectors of the upper-triangular factor, column by column.
    let small = norm * f64::EPSILON;
    let mut y = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            y[(i, k)] = -s / d;
        }
        // keep the growth bounded before it overflows
        let m = (0..=k).map(|i| y[(i, k)].norm()).fold(0.0, f64::max);
        if m > 1e100 {
            for i in 0..=k {
                y[(i, k)] /= m;
            }
        }
    }
    let mut right = q * y;
    for mut col in right.column_iter_mut() {
        let nrm = col.norm();
        col /= C64::new(nrm, 0.0);
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenNoConvergence { indices: degenerate_indices(&values) })?;

    let bad: Vec<usize> = (0..n)
        .filter(|&i| {
            let v = right.column(i);
            let r = a * v - v * values[i];
            !(r.norm() <= 1e-8 * norm) || !values[i].re.is_finite() || !values[i].im.is_finite()
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::EigenNoConvergence { indices: bad });
    }
    Ok(EigenDecomposition { values, right, left })
}

fn degenerate_indices(values: &[C64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if (values[i] - values[j]).norm() < 1e-10 {
                out.push(i);
                out.push(j);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Indices of eigenvalue pairs closer than `tol` (near-defective).
pub fn near_defective_pairs(values: &[C64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if (values[i] - values[j]).norm() < tol {
                out.push((i, j));
            }
        }
    }
    out
}

/// Evaluate `Σ a_j z^j` (lowest degree first) by Horner's rule, with derivative.
pub fn horner(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// All roots of `Σ a_j z^j` (lowest degree first) from the companion matrix,
/// each polished by a few Newton steps. Trailing zero leading coefficients
/// are dropped.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut c: Vec<C64> = coeffs.to_vec();
    while c.last().is_some_and(|a| a.norm() == 0.0) {
        c.pop();
    }
    if c.len() < 2 {
        return Ok(vec![]);
    }
    let deg = c.len() - 1;
    let lead = c[deg];
    let mut comp = DMatrix::<C64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let mut roots = eigenvalues(comp)?;
    for r in roots.iter_mut() {
        *r = newton_polish(&c, *r);
    }
    Ok(roots)
}

fn newton_polish(coeffs: &[C64], mut z: C64) -> C64 {
    let (mut p, _) = horner(coeffs, z);
    for _ in 0..8 {
        let (_, dp) = horner(coeffs, z);
        if dp.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        let (pc, _) = horner(coeffs, cand);
        if !(pc.norm() < p.norm()) {
            break;
        }
        z = cand;
        p = pc;
    }
    z
}

/// Solve a small dense system with partial-pivot LU.
pub fn solve(a: DMatrix<C64>, b: DVector<C64>) -> Option<DVector<C64>> {
    a.lu().solve(&b)
}

/// Orthonormal basis of the numerical null space of `a` (rows ≤ cols
/// typical) from the SVD, using relative singular-value cutoff `rtol`.
pub fn null_space(a: &DMatrix<C64>, rtol: f64) -> DMatrix<C64> {
    let (rows, cols) = a.shape();
    // pad to square so the SVD exposes all right singular vectors
    let n = rows.max(cols);
    let mut sq = DMatrix::<C64>::zeros(n, cols);
    sq.view_mut((0, 0), (rows, cols)).copy_from(a);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rtol * smax.max(f64::MIN_POSITIVE) {
            basis.push(v_t.row(i).adjoint());
        }
    }
    if basis.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn roots_of_known_quartic() {
        // (z-1)(z+2)(z-i)(z-0.5-0.5i)
        let expected = [c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 1.0), c(0.5, 0.5)];
        let mut poly = vec![c(1.0, 0.0)];
        for &r in &expected {
            let mut next = vec![c(0.0, 0.0); poly.len() + 1];
            for (j, &a) in poly.iter().enumerate() {
                next[j + 1] += a;
                next[j] -= a * r;
            }
            poly = next;
        }
        let roots = poly_roots(&poly).unwrap();
        assert_eq!(roots.len(), 4);
        for e in expected {
            assert!(roots.iter().any(|r| (r - e).norm() < 1e-12), "missing {e}");
        }
    }

    #[test]
    fn eigen_pairs_are_biorthonormal() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let x = (i * 7 + j * 3) as f64;
            c((x * 0.37).sin(), (x * 0.11).cos() * 0.5)
        });
        let e = eigen_decompose(&a).unwrap();
        let id = &e.left * &e.right;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - c(target, 0.0)).norm() < 1e-10);
            }
            let v = e.right.column(i);
            assert!((&a * v - v * e.values[i]).norm() < 1e-10 * a.norm());
        }
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 3, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 1.0)]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.ncols(), 1);
        assert!((&a * ns.column(0)).norm() < 1e-12);
    }
}
