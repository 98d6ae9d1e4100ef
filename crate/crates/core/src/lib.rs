//! Random walks on hyperbolic groups at desk scale.
//!
//! The crate computes, for finitely supported step measures on the integers,
//! free groups and free products of two finite cyclic groups:
//!
//! * convolution powers with direct entropy and escape-rate estimators
//!   ([`walk`], with exact lumped series for nearest-neighbour walks in
//!   [`tree`]),
//! * Green functions, hitting probabilities and Martin kernels with
//!   certified truncation intervals ([`green`], built on the killed-chain
//!   solvers of [`region`]),
//! * Hilbert projective metric tools ([`cone`]) and obstacle chains along
//!   geodesics ([`obstacle`]),
//! * harmonic measure on the boundary subshift, transfer operators and the
//!   boundary formulas for entropy and escape rate ([`boundary`]),
//! * Lipschitz scans, kink detection and stability sweeps in the measure
//!   parameter ([`lab`]).
//!
//! Kernels that parallelize take an [`Exec`] argument; with the `parallel`
//! feature disabled every mode runs sequentially.

pub mod boundary;
pub mod cone;
pub mod error;
pub mod exec;
pub mod green;
pub mod group;
pub mod lab;
pub mod linalg;
pub mod obstacle;
pub mod region;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
pub use exec::Exec;
pub use group::{Element, Family, Group, Letter};
pub use walk::StepMeasure;
