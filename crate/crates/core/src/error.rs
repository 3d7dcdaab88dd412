//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NmdError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is singular or near-singular: {0}")]
    Singular(String),

    #[error("Newton iteration failed to converge after {iters} iterations (residual {residual:.3e})")]
    NewtonDivergence { iters: usize, residual: f64 },

    #[error("expansion center is not an equilibrium (residual {residual:.3e} >= {tol:.1e})")]
    NotEquilibrium { residual: f64, tol: f64 },

    #[error("truncation order {got} out of range (need {need})")]
    BadOrder { got: usize, need: &'static str },

    #[error("resonance in homological equation: row {row}, monomial {monomial}, denominator {denom:.3e} below tolerance {tol:.3e}")]
    Resonance {
        row: usize,
        monomial: String,
        denom: f64,
        tol: f64,
    },

    #[error("eigendecomposition residual {residual:.3e} exceeds 1e-8 for eigenvalue {eigenvalue}")]
    EigenResidual { eigenvalue: String, residual: f64 },

    #[error("unexpected non-oscillatory mode: eigenvalue {0} has no imaginary part and is not a mean-motion eigenvalue")]
    UnexpectedRealMode(String),

    #[error("damping is not uniform: {0}")]
    NonUniformDamping(String),

    #[error("mean-motion variables couple into retained rows (max |coef| {0:.3e} >= 1e-9)")]
    MeanMotionCoupling(f64),

    #[error("conjugate pairing violated: {0}")]
    ConjugatePairing(String),

    #[error("imaginary residue {0:.3e} above tolerance in real-oscillator transform")]
    ImaginaryResidue(f64),

    #[error("oscillator eigenvalue has no imaginary part; cannot form the 2x2 real transform")]
    NotOscillatory,

    #[error("Zubov's method requires a damped oscillator (linear Lie-derivative operator singular at degree 2)")]
    ZubovUndamped,

    #[error("Zubov solve singular at degree {0} (resonant linear part)")]
    ZubovSingular(usize),

    #[error("modal amplitude fit is rank-deficient: modes {0} and {1} have indistinguishable frequencies")]
    DegenerateFitBasis(usize, usize),

    #[error("empty mode selection")]
    EmptySelection,

    #[error("shrink ratios require a stable reference trajectory: {0}")]
    ShrinkNeedsStableTrajectory(String),

    #[error("initial state is not finite")]
    NonFiniteState,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, NmdError>;
