use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("lattice shorter than hopping range (L = {size}, need L > {min})")]
    LatticeTooShort { size: usize, min: usize },

    #[error("eigensolver failed to converge for indices {indices:?}")]
    EigenNoConvergence { indices: Vec<usize> },

    #[error("GBZ degenerate: unidirectional hopping")]
    GbzDegenerate,

    #[error("saddle method inapplicable: unidirectional hopping")]
    SaddleInapplicable,

    #[error("internal consistency: root |β| = {modulus:e} survived clearing")]
    SpuriousRoot { modulus: f64 },

    #[error("Morse assumption violated: degenerate saddle at k = {k_re}{k_im:+}i")]
    DegenerateSaddle { k_re: f64, k_im: f64 },

    #[error("non-transversal crossing after {retries} retries")]
    NonTransversal { retries: usize },

    #[error("no contributing saddle (v = {v})")]
    NoContributingSaddle { v: f64 },

    #[error("insufficient trace: window [{start}, {end}] holds {samples} samples")]
    InsufficientTrace { start: f64, end: f64, samples: usize },

    #[error("E0 on PBC spectrum (distance {distance:e})")]
    EnergyOnSpectrum { distance: f64 },

    #[error("E0 at GBZ boundary: |β_3| ≈ |β_4|")]
    EnergyAtGbz,

    #[error("boundary system degenerate (null space dimension {dimension})")]
    BoundaryDegenerate { dimension: usize },

    #[error("winding number {winding} ≠ 1 required for edge-state construction")]
    WrongWinding { winding: i64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
