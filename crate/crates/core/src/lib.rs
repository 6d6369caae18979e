//! Exact covariance matrices and neural tangent kernels of infinitely wide
//! graph neural networks, with and without neighborhood sampling.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs; IO, configuration, and the experiment driver live
//! in the companion `gntk` crate.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`graph`] | adjacency construction, normalization, the 100-node ring, train splits |
//! | [`activation`] | closed-form ReLU / erf Gaussian moments and a Monte-Carlo check |
//! | [`sampling`] | masking matrices for layer-wise and node-wise sampling |
//! | [`recursion`] | layer recursion for the GCN covariance and NTK |
//! | [`dsl`] | building-block programs that compose kernel transforms (GCN, GraphSAGE) |
//! | [`dynamics`] | closed-form GP evolution under gradient flow and posterior inference |
//! | [`oracle`] | finite-width random networks and sampling estimators used as ground truth |

#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod activation;
pub mod dsl;
pub mod dynamics;
mod error;
pub mod graph;
pub mod linalg;
mod math;
pub mod oracle;
pub mod recursion;
pub mod rng;
pub mod sampling;

pub use activation::{ActivationKind, MomentPair};
pub use dsl::{BlockInstr, KernelState};
pub use dynamics::{GpEvolution, GpState, PosteriorResult};
pub use error::{Error, Result};
pub use graph::{FeatureMoment, GraphSpec, Normalization, TrainSplit};
pub use linalg::{Mat, Vector};
pub use recursion::{GcnHyper, KernelPair};
pub use sampling::{SamplingScheme, SchemeSchedule};
