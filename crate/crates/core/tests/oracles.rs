//! Reference checks against independent evaluations of the same quantities.

use std::f64::consts::TAU;

use nonbloch_core::dynamics::{self, find_p, lambda_at, DdState, TaylorPropagator};
use nonbloch_core::healing::{build_sibc, HealingParams};
use nonbloch_core::lattice::{self, assemble, Boundary};
use nonbloch_core::linalg;
use nonbloch_core::model::{preset, CHAIN_A, CHAIN_E};
use nonbloch_core::saddle::{cyl_dist, dlambda_dv_check, find_saddles};
use nonbloch_core::{BlochSymbol, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const I: C64 = C64::new(0.0, 1.0);

#[test]
fn chain_eval_matches_term_sum() {
    let k = C64::new(1.3, 0.2);
    let p = CHAIN_A;
    // e^{ink} = e^{−n k_i} (cos n k_r + i sin n k_r)
    let wave = |n: f64| C64::new((n * k.re).cos(), (n * k.re).sin()) * (-n * k.im).exp();
    let direct = p.t1l * wave(1.0) + p.t1r * wave(-1.0) + p.t2l * wave(2.0) + p.t2r * wave(-2.0) - I * p.kappa;
    let got = CHAIN_A.symbol().eval(k);
    assert!((got - direct).norm() < 1e-14 * direct.norm().max(1.0), "{got} vs {direct}");
}

#[test]
fn chain_derivative_matches_finite_difference() {
    let sym = CHAIN_A.symbol();
    let d = sym.derivative_k();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for _ in 0..100 {
        let k = C64::new(rng.random_range(0.0..TAU), rng.random_range(-1.0..1.0));
        let fd = (sym.eval(k + h) - sym.eval(k - h)) / (2.0 * h);
        assert!((d.eval(k) - fd).norm() < 1e-8 * sym.scale().max(1.0), "k = {k}");
    }
}

#[test]
fn chiral_bands_match_closed_form_and_dense_solve() {
    let p = preset("figS3a").unwrap();
    let BlochSymbol::Multi(sym) = &p.symbol else { panic!("two-band preset") };
    let kappa = 0.3;
    let (r_plus, r_minus) = (sym.entry(0, 1), sym.entry(1, 0));
    for j in 0..16 {
        let k = C64::new(TAU * j as f64 / 16.0, 0.1);
        let root = (r_plus.eval(k) * r_minus.eval(k)).sqrt();
        let mut closed = [root - I * kappa, -root - I * kappa];
        let m = nalgebra::DMatrix::from_fn(2, 2, |r, c| sym.entry(r, c).eval(k));
        let mut dense = linalg::eigenvalues(m).unwrap();
        let mut bands = lattice::band_energies(sym, k).unwrap();
        let key = |a: &C64, b: &C64| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
        closed.sort_by(key);
        dense.sort_by(key);
        bands.sort_by(key);
        for i in 0..2 {
            assert!((closed[i] - dense[i]).norm() < 1e-12, "k = {k}: {closed:?} vs {dense:?}");
            assert!((closed[i] - bands[i]).norm() < 1e-12, "k = {k}: {closed:?} vs {bands:?}");
        }
    }
}

/// Slope of `ln|ψ(x)|` over sites above the round-off floor.
fn log_slope(v: &[C64]) -> f64 {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        v.iter().enumerate().filter(|(_, z)| z.norm() > 1e-10 * max).map(|(x, z)| (x as f64, z.norm().ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn fig2a_gbz_inside_unit_circle_and_modes_left_localized() {
    let sym = CHAIN_A.symbol();
    let l = 40;
    let h = assemble(&sym.clone().into(), l, Boundary::Open).unwrap();
    let sp = lattice::spectrum(&h).unwrap();
    let max_beta = lattice::gbz_from_obc(&sym, &sp).unwrap().iter().flat_map(|g| [g.inner.norm(), g.outer.norm()]).fold(0.0, f64::max);
    assert!(max_beta < 1.0, "max |β| = {max_beta}");
    let eig = linalg::eigen_decompose(h.matrix()).unwrap();
    for n in 0..l {
        let col: Vec<C64> = eig.right.column(n).iter().copied().collect();
        let s = log_slope(&col);
        assert!(s < 0.0, "mode {n} grows to the right: slope {s}");
    }
}

#[test]
fn fig3e_gbz_inside_unit_circle() {
    let sym = CHAIN_E.symbol();
    let h = assemble(&sym.clone().into(), 140, Boundary::Open).unwrap();
    let sp = lattice::spectrum(&h).unwrap();
    for g in lattice::gbz_from_obc(&sym, &sp).unwrap() {
        assert!(g.inner.norm() < 1.0 && g.outer.norm() < 1.0);
        assert!((sym.eval_beta(g.inner) - g.energy).norm() <= 1e-8 && (sym.eval_beta(g.outer) - g.energy).norm() <= 1e-8);
        assert!((g.inner.norm() - g.outer.norm()).abs() < 0.05);
    }
}

#[test]
fn fig4e_saddles_match_multistart_newton() {
    let sym = CHAIN_E.symbol();
    let v = 0.7;
    let (d1, d2) = (sym.derivative_k(), sym.derivative_k().derivative_k());
    let mut roots: Vec<C64> = Vec::new();
    for a in 0..20 {
        for b in 0..20 {
            let mut k = C64::new(TAU * (a as f64 + 0.5) / 20.0, -2.0 + 4.0 * (b as f64 + 0.5) / 20.0);
            for _ in 0..100 {
                let step = (d1.eval(k) - v) / d2.eval(k);
                k -= step;
                if !(k.norm() < 1e6) || step.norm() < 1e-15 {
                    break;
                }
            }
            if k.norm() < 1e6 && (d1.eval(k) - v).norm() <= 1e-12 && !roots.iter().any(|r| cyl_dist(*r, k) < 1e-6) {
                roots.push(k);
            }
        }
    }
    let saddles = find_saddles(&sym, v).unwrap();
    assert_eq!(saddles.len(), 4);
    assert_eq!(roots.len(), 4, "{roots:?}");
    for s in &saddles {
        assert!((d1.eval(s.k) - v).norm() <= 1e-10);
        assert!(roots.iter().any(|r| cyl_dist(*r, s.k) < 1e-8), "saddle {} not found by Newton", s.k);
    }
}

#[test]
fn lambda_slope_matches_saddle_momentum() {
    let sym: BlochSymbol = CHAIN_E.symbol().into();
    let v = 0.3;
    let h = 1e-4;
    let (_, s) = lambda_at(&sym, v).unwrap();
    let fd = (lambda_at(&sym, v + h).unwrap().0 - lambda_at(&sym, v - h).unwrap().0) / (2.0 * h);
    assert!((dlambda_dv_check(&s) - fd).abs() < 1e-4, "{} vs {fd}", dlambda_dv_check(&s));

    // non-sticky chain: λ(v) is stationary at the group velocity of P
    let sym: BlochSymbol = CHAIN_A.symbol().into();
    let p = find_p(&sym).unwrap().expect("point P");
    let (_, s) = lambda_at(&sym, p.v).unwrap();
    assert!(dlambda_dv_check(&s).abs() < 1e-6, "{}", dlambda_dv_check(&s));
}

#[test]
fn edge_state_evolves_as_eigenstate_before_disruption() {
    let p = preset("fig6a").unwrap();
    let BlochSymbol::Single(sym) = &p.symbol else { panic!("single band") };
    let e0 = C64::new(-1.0, 0.05);
    let st = build_sibc(sym, e0, p.size).unwrap();
    assert!(st.residual <= 1e-8, "residual {}", st.residual);
    let h = assemble(&p.symbol, p.size, Boundary::Open).unwrap();
    let params = HealingParams::default();
    let prop = TaylorPropagator::new(h.sparse(), params.dt);
    let mut state = DdState::new(&st.psi0);
    let steps = (params.t1 / params.dt).round() as usize;
    let n0: f64 = st.psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for _ in 0..steps {
        prop.step(&mut state);
        let psi = state.to_c64(state.log_scale);
        let overlap: C64 = st.psi0.iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(overlap.norm() / (norm * n0) >= 1.0 - 1e-6);
    }
    // the amplitude follows e^{Im E0 t}
    let t = steps as f64 * params.dt;
    assert!((state.ln_norm() - (n0.ln() + e0.im * t)).abs() < 1e-6);
}

#[test]
fn p_velocity_is_positive_group_velocity() {
    let sym: BlochSymbol = CHAIN_A.symbol().into();
    let p = find_p(&sym).unwrap().expect("point P");
    assert!(p.v > 0.0);
    let fine = dynamics::find_p_on_grid(&sym, 16384).unwrap().unwrap();
    assert!((p.energy.im - fine.energy.im).abs() < 1e-6);
}
