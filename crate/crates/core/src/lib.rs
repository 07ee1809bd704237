//! Numerical laboratory for quasilinear parabolic equations of p-Laplace
//! type with measure data and absorption or source terms.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` deliberately rejects NaN

pub mod cli;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod measures;
pub mod minimize;
pub mod nonlinearity;
pub mod parabolic;
pub mod pipelines;
pub mod potential;

pub use error::{Error, Result};
pub use grid::{Field, Grid, GridSpec, Point, SpaceTimeField};
pub use measures::{SpaceTimeMeasure, SpatialMeasure};
pub use nonlinearity::Nonlinearity;
