//! Numerical verification toolkit for volume-preserving flows: explicit
//! divergence-free local perturbations, flow boxes, Poincaré return maps,
//! recurrence and genericity checks, and (ε,t)-chains.
//!
//! Data-parallel sweeps use rayon by default; building without the
//! `parallel` feature gives a sequential fallback with identical results.

pub mod bump;
pub mod chains;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod flowbox;
pub mod geometry;
pub mod par;
pub mod perturb;
pub mod poincare;
pub mod quadrature;
pub mod returnlemma;

pub use bump::{bump_gamma, bump_lambda, BumpPair, GammaBump, LambdaBump};
pub use error::{Error, Result};
pub use field::{evaluate, FieldKind, Patch, VectorFieldSpec};
pub use geometry::{in_cylinder_ring, BoxChart, CylinderRingSpec, Gluing, Point};
