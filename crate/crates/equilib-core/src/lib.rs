//! Numerical differential geometry of equilibrium level-set partitions.
//!
//! The crate provides metric charts with closed-form or finite-difference
//! curvature, third-order scalar-field jets, rank-based equilibrium tests,
//! level-set extraction and fiber geometry, isometry-algebra checks, an
//! analytic-representative diagnostic for traced field defects, and the
//! static fluid-body solver built on the radial ODE integrator.

pub mod analyticrep;
pub mod error;
pub mod expr;
pub mod fibergeom;
pub mod field;
pub mod fluid;
pub mod geometry;
pub mod halton;
pub mod isometry;
pub mod jet;
pub mod marching;
pub mod ode;
pub mod partition;
pub mod tensor;

pub use error::{Error, Result};
pub use field::{sample_domain, SampleCloud, ScalarField};
pub use geometry::{
    christoffel, conformal_ricci, curvature_at, gradient, laplace_beltrami,
    sectional_curvature, CurvatureAt, MetricChart, MetricJet,
};
pub use jet::{fd_jet3, Jet3, Profile1d};
pub use tensor::{Tensor3, Tensor4};
