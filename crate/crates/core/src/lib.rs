//! Max-plus stochastic control: the max-plus expectation on discretized
//! path spaces, the discontinuous Hamiltonian of the running-maximum
//! problem, grid solvers for its quasi-variational inequality, trajectory
//! tools, the risk-sensitive approximation, the Merton benchmark and
//! H-infinity storage functions.

// Checks like `!(x > 0.0)` are written that way so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod families;
pub mod grid;
pub mod hamiltonian;
pub mod hinfty;
pub mod io;
pub mod maxplus;
pub mod merton;
pub mod problem;
pub mod properties;
pub mod risk;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::{Axis, BoundaryPolicy, Grid, ValueField};
pub use maxplus::MaxPlus;
pub use problem::{ControlProblem, ControlSet};

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
