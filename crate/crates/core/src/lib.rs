//! Short- and long-time dynamics of one-dimensional non-Hermitian lattices
//! from saddle points of the Bloch symbol and their Lefschetz thimbles.
//!
//! The pipeline runs `symbol → lattice → saddle → thimble → dynamics`, with
//! `healing` on top of `dynamics`.

pub mod dd;
pub mod dynamics;
pub mod error;
pub mod healing;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod saddle;
pub mod symbol;
pub mod thimble;

pub use dynamics::{EvolutionTrace, LineFit, LyapunovReport, PointP};
pub use error::{Error, Result};
pub use healing::{HealingReport, SibcState, Verdict};
pub use lattice::{Boundary, LatticeHamiltonian, SpectrumSet};
pub use model::{preset, ModelFile, Preset};
pub use saddle::SaddlePoint;
pub use symbol::{BlochSymbol, LaurentSymbol, MultibandSymbol, C64};
pub use thimble::{Contour, ThimbleClassification};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
