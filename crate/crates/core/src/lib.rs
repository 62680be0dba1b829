//! Mean curvature flow of spacelike graphs in Minkowski space `R^{n+1}_1`
//! (`n = 1, 2`) with a perpendicular free boundary on a timelike tube.
//!
//! The geometric kernels are generic over the scalar type ([`scalar::Real`]);
//! the aliases below fix it to `f64`, which is what the monitors, the scenario
//! layer and the command line tool use.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod error;
pub mod flow;
pub mod graph;
pub mod lorentz;
pub mod monitor;
pub mod profile;
pub mod scenario;
pub mod scalar;

pub use error::{Error, Result};

pub type Vector = lorentz::SpacetimeVector<f64>;
pub type State = graph::FlowState<f64>;
pub type Geometry = graph::GeometryFields<f64>;
pub type Trajectory = flow::Trajectory<f64>;
