//! Inhomogeneous random graphs at desk scale.
//!
//! Kernels and their integral operators ([`kernel`]), cut norms and the cut
//! distance ([`cutnorm`]), graph samplers ([`graphgen`]), component statistics
//! ([`components`]), multi-type Poisson branching processes ([`branching`]),
//! the hypergraph extension ([`hypergraph`]) and an experiment runner with
//! CSV/SVG reporting ([`experiment`], [`report`]). File formats live in [`io`].

pub mod branching;
pub mod components;
pub mod cutnorm;
pub mod error;
pub mod experiment;
pub mod graphgen;
pub mod hypergraph;
pub mod io;
pub mod kernel;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use graphgen::SparseGraph;
pub use kernel::{StepKernel, WeightMatrix};
pub use rng::RngStream;
