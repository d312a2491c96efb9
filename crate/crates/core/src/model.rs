//! Model definition files and the built-in parameter presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{BlochSymbol, LaurentSymbol, MultibandSymbol, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffEntry {
    #[serde(default)]
    pub row: usize,
    #[serde(default)]
    pub col: usize,
    pub power: i32,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// On-disk model: `{"bands": m, "coeffs": [{"row", "col", "power", "re", "im"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub bands: usize,
    pub coeffs: Vec<CoeffEntry>,
}

impl ModelFile {
    pub fn to_symbol(&self) -> Result<BlochSymbol> {
        let m = self.bands;
        if m == 0 {
            return Err(Error::InvalidModel("bands must be ≥ 1".into()));
        }
        let mut terms: Vec<Vec<(i32, C64)>> = vec![Vec::new(); m * m];
        for e in &self.coeffs {
            if e.row >= m || e.col >= m {
                return Err(Error::InvalidModel(format!(
                    "entry ({}, {}) outside a {m}-band model",
                    e.row, e.col
                )));
            }
            terms[e.row * m + e.col].push((e.power, C64::new(e.re, e.im)));
        }
        if m == 1 {
            let terms = terms.pop().unwrap_or_default();
            return Ok(BlochSymbol::Single(LaurentSymbol::new(terms)?));
        }
        let entries = terms.into_iter().map(LaurentSymbol::from_terms).collect();
        Ok(BlochSymbol::Multi(MultibandSymbol::new(m, entries)?))
    }

    pub fn from_symbol(sym: &BlochSymbol) -> Self {
        let multi = sym.to_multiband();
        let m = multi.bands();
        let mut coeffs = Vec::new();
        for row in 0..m {
            for col in 0..m {
                for (power, c) in multi.entry(row, col).terms() {
                    coeffs.push(CoeffEntry { row, col, power, re: c.re, im: c.im });
                }
            }
        }
        ModelFile { bands: m, coeffs }
    }
}

/// Parameters of the single-band chain `t1L e^{ik} + t1R e^{-ik} + t2L e^{2ik} + t2R e^{-2ik} − iκ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub t1l: C64,
    pub t1r: C64,
    pub t2l: C64,
    pub t2r: C64,
    pub kappa: f64,
}

impl ChainParams {
    pub fn symbol(&self) -> LaurentSymbol {
        LaurentSymbol::two_range(self.t1l, self.t1r, self.t2l, self.t2r, self.kappa)
            .expect("chain parameters give a nonzero symbol")
    }

    pub fn with_kappa(self, kappa: f64) -> Self {
        ChainParams { kappa, ..self }
    }
}

const fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

/// Figure 2(a) / 4(a–d) chain.
pub const CHAIN_A: ChainParams =
    ChainParams { t1l: im(1.2), t1r: im(-0.8), t2l: im(0.35), t2r: im(0.05), kappa: 0.35 };
/// Figure 2(b) / 3(a–d) / 7 chain.
pub const CHAIN_B: ChainParams =
    ChainParams { t1l: im(1.2), t1r: im(-0.8), t2l: im(0.6), t2r: im(0.1), kappa: 0.7 };
/// Figure 3(e–h) / 4(e–h) chain.
pub const CHAIN_E: ChainParams =
    ChainParams { t1l: im(2.05), t1r: im(-0.95), t2l: im(0.85), t2r: im(-0.15), kappa: 0.15 };

/// A named parameter set with its default lattice size.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub symbol: BlochSymbol,
    pub size: usize,
    pub chain: Option<ChainParams>,
}

pub const PRESET_NAMES: &[&str] = &[
    "fig2a", "fig2b", "fig3a", "fig3e", "fig3f", "fig4a", "fig4e", "fig6a", "fig6e", "fig7",
    "figS3a", "figS3b", "figS3c",
];

/// Two-band chiral model `[[0, R+], [R−, 0]] − iκ`.
pub fn chiral_two_band(t1: f64, t2: f64, t3: C64, g1: f64, g2: f64, kappa: f64) -> MultibandSymbol {
    let c = |x: f64| C64::new(x, 0.0);
    let r_plus = LaurentSymbol::from_terms([(1, t3), (-1, c(t2 - g2 / 2.0)), (0, c(t1 + g1 / 2.0))]);
    let r_minus = LaurentSymbol::from_terms([(-1, t3), (1, c(t2 + g2 / 2.0)), (0, c(t1 - g1 / 2.0))]);
    let loss = LaurentSymbol::constant(C64::new(0.0, -kappa));
    MultibandSymbol::new(2, vec![loss.clone(), r_plus, r_minus, loss]).expect("2x2")
}

/// Two-band model `½(A−B)σ_y + ½(A+B−iκ)`, with branches `A − iκ/2` and `B − iκ/2`.
pub fn sigma_y_two_band(a1: C64, am1: C64, b1: C64, bm1: C64, kappa: f64) -> MultibandSymbol {
    let a = LaurentSymbol::from_terms([(1, a1), (-1, am1)]);
    let b = LaurentSymbol::from_terms([(1, b1), (-1, bm1)]);
    let half = C64::new(0.5, 0.0);
    let diag = a.add(&b).sub(&LaurentSymbol::constant(C64::new(0.0, kappa))).scaled(half);
    let diff = a.sub(&b).scaled(half);
    // σ_y = [[0, −i], [i, 0]]
    let upper = diff.scaled(C64::new(0.0, -1.0));
    let lower = diff.scaled(C64::new(0.0, 1.0));
    MultibandSymbol::new(2, vec![diag.clone(), upper, lower, diag]).expect("2x2")
}

/// Two weakly coupled Hatano–Nelson chains with opposite skin preferences, plus uniform loss.
pub fn coupled_hatano_nelson(tl: f64, tr: f64, pot: f64, delta: f64, kappa: f64) -> MultibandSymbol {
    let c = |x: f64| C64::new(x, 0.0);
    let loss = C64::new(0.0, -kappa);
    let h11 = LaurentSymbol::from_terms([(1, c(tl)), (-1, c(tr)), (0, c(pot) + loss)]);
    let h22 = LaurentSymbol::from_terms([(1, c(tr)), (-1, c(tl)), (0, c(-pot) + loss)]);
    let off = LaurentSymbol::constant(c(delta));
    MultibandSymbol::new(2, vec![h11, off.clone(), off, h22]).expect("2x2")
}

pub fn preset(name: &str) -> Result<Preset> {
    let chain = |name, params: ChainParams, size| Preset {
        name,
        symbol: BlochSymbol::Single(params.symbol()),
        size,
        chain: Some(params),
    };
    let multi = |name, sym: MultibandSymbol| Preset {
        name,
        symbol: BlochSymbol::Multi(sym),
        size: 50,
        chain: None,
    };
    Ok(match name {
        "fig2a" => chain("fig2a", CHAIN_A, 140),
        "fig4a" => chain("fig4a", CHAIN_A, 140),
        "fig2b" => chain("fig2b", CHAIN_B, 140),
        "fig3a" => chain("fig3a", CHAIN_B, 140),
        "fig3e" => chain("fig3e", CHAIN_E, 140),
        "fig3f" => chain("fig3f", CHAIN_E, 140),
        "fig4e" => chain("fig4e", CHAIN_E, 140),
        "fig6a" => chain("fig6a", CHAIN_A.with_kappa(0.0), 600),
        "fig6e" => chain("fig6e", CHAIN_E.with_kappa(-0.2), 600),
        "fig7" => chain("fig7", CHAIN_B, 51),
        "figS3a" => multi("figS3a", chiral_two_band(0.1, 0.4, C64::new(0.0, 0.1), 0.2, 0.2, 0.3)),
        "figS3b" => multi(
            "figS3b",
            sigma_y_two_band(
                C64::new(0.2, 0.0),
                C64::new(0.6, 0.0),
                C64::new(0.2, 0.8),
                C64::new(0.3, 0.0),
                2.0,
            ),
        ),
        "figS3c" => multi("figS3c", coupled_hatano_nelson(1.4, 0.6, 0.5, 1e-4, 0.5)),
        other => {
            return Err(Error::InvalidModel(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    })
}
