//! Nonlinear modal decoupling (NMD) and per-mode transient stability
//! analysis for multi-machine power systems in the classical model.
//!
//! The pipeline: a swing-equation system is Taylor-truncated about its
//! post-fault equilibrium, transformed to modal coordinates, decoupled into
//! independent second-order nonlinear oscillators by a cascade of
//! near-identity polynomial coordinate changes, and each oscillator's
//! stability boundary is estimated three ways (time-simulation search, first
//! integral, Zubov power series). Post-disturbance trajectories are projected
//! into each oscillator plane and classified against the boundaries to yield
//! per-mode stability verdicts.
//!
//! Modules follow the pipeline order:
//! - [`model`]: machines, reduced networks, swing dynamics, equilibria,
//!   Taylor expansion.
//! - [`poly`]: sparse polynomial vector fields and coordinate changes.
//! - [`modal`]: eigenanalysis, modal transform, mode selection.
//! - [`nmd`]: the decoupling cascade, real oscillators, trajectory
//!   projection.
//! - [`sim`]: fixed-step RK4 integration and contingency runs.
//! - [`boundary`]: the three boundary estimators and point classification.
//! - [`tsa`]: end-to-end procedures and modal-energy shrink ratios.
//! - [`io`]: system/scenario file formats and text exports.

pub mod boundary;
pub mod error;
pub mod io;
pub mod modal;
pub mod model;
pub mod nmd;
pub mod poly;
pub mod scalar;
pub mod sim;
pub mod tsa;

pub use error::{NmdError, Result};

/// Complex scalar used throughout the modal pipeline.
pub type Complex64 = num_complex::Complex<f64>;

/// Real-coefficient polynomial vector field (swing expansions).
pub type RealVectorField = poly::PolyVectorField<f64>;

/// Complex-coefficient polynomial vector field (modal systems).
pub type ComplexVectorField = poly::PolyVectorField<Complex64>;
