//! Optimal boundary control of the two-dimensional TM Maxwell system on the
//! unit square.
//!
//! The crate discretizes `ε ∂_t E_z = curl H − σ E_z`, `μ ∂_t H = −curl E_z`
//! with a staggered finite-volume scheme, drives it through the tangential
//! boundary trace weighted by `(κ − Δ_Γ)^{1/2}`, and solves the finite-horizon
//! quadratic regulator problem in open loop, through the Riccati operator and,
//! for `σ = 0`, through the dual Riccati operator.
//!
//! ```
//! use std::sync::Arc;
//! use mxlqr::{assemble_system, GridShape, MaterialField, Propagator, TimeGrid};
//!
//! let shape = GridShape::new(8, 8);
//! let ops = assemble_system(shape, MaterialField::uniform(shape, 1.0, 1.0, 0.0), 1.0).unwrap();
//! let prop = Propagator::new(Arc::new(ops), TimeGrid::new(1.0, 64).unwrap()).unwrap();
//! assert_eq!(prop.ops().n_gamma(), 32);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod approx;
mod banded;
pub mod boundary;
pub mod cg;
pub mod error;
pub mod lanczos;
pub mod lq;
pub mod maxwell;
pub mod propagation;
pub mod sampling;
pub mod space;
pub mod zero_sigma;

pub use boundary::{BoundaryMesh, FracPower};
pub use cg::{cg_solve, CgConfig, CgReport};
pub use error::{Error, Result};
pub use lanczos::{lanczos_extremes, RitzBounds};
pub use lq::{FeedbackReport, LqProblem, OpenLoopSolution, TerminalWeight, TransitionReport};
pub use maxwell::{assemble_system, Direction, MaterialField, MaxwellOperators, ShiftedSolver};
pub use propagation::{AdmissibilityReport, Propagator, Record};
pub use space::{
    BoundarySlice, ControlTrajectory, GridShape, InnerProducts, StateTrajectory, StateVector, TimeGrid, Vector,
};
pub use zero_sigma::{QHandle, QOpenLoop, Quadrature};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/optimal_control.md")]
    mod optimal_control {}
    #[doc = include_str!("../../../book/src/approximation.md")]
    mod approximation {}
    #[doc = include_str!("../../../book/src/zero_conductivity.md")]
    mod zero_conductivity {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
