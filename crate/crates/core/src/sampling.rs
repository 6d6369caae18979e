//! Neighborhood-sampling schemes and their masking matrices.
//!
//! Sampling changes the kernel recursion only through an entrywise mask on
//! the second-moment matrix fed into the graph aggregation:
//! `A (M ⊙ C) A^T` instead of `A C A^T`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::linalg::{self, Mat};

/// Tolerance on `sum(p) = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// Sampling applied at a single layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingScheme {
    None,
    /// `n_samples` draws with replacement from `p`, each rescaled by `1/p(v)`.
    LayerWithReplacement { p: Vec<f64>, n_samples: usize },
    /// Each node kept independently with probability `q(v)`, rescaled by `1/q(v)`.
    LayerWithoutReplacement { q: Vec<f64> },
    /// Each node keeps each neighbor independently with probability
    /// `min(1, fanout / |N(x)|)`.
    NodeWise { fanout: usize },
}

impl SamplingScheme {
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        match self {
            SamplingScheme::None => Ok(()),
            SamplingScheme::LayerWithReplacement { p, n_samples } => {
                check_len(p.len(), n_nodes)?;
                if *n_samples == 0 {
                    return Err(Error::InvalidParameter {
                        name: "n_samples",
                        value: 0.0,
                    });
                }
                validate_distribution(p)
            }
            SamplingScheme::LayerWithoutReplacement { q } => {
                check_len(q.len(), n_nodes)?;
                validate_inclusion(q)
            }
            SamplingScheme::NodeWise { fanout } => {
                if *fanout == 0 {
                    return Err(Error::InvalidParameter {
                        name: "fanout",
                        value: 0.0,
                    });
                }
                Ok(())
            }
        }
    }

    /// Layer-wise mask, or `None` for schemes without one (no sampling,
    /// node-wise).
    pub fn layer_mask(&self) -> Result<Option<Mat>> {
        match self {
            SamplingScheme::LayerWithReplacement { p, n_samples } => {
                mask_with_replacement(p, *n_samples).map(Some)
            }
            SamplingScheme::LayerWithoutReplacement { q } => mask_without_replacement(q).map(Some),
            SamplingScheme::None | SamplingScheme::NodeWise { .. } => Ok(None),
        }
    }
}

/// One scheme for every layer, or an explicit per-layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeSchedule {
    PerLayer(Vec<SamplingScheme>),
    Broadcast(SamplingScheme),
}

impl SchemeSchedule {
    pub fn none() -> Self {
        SchemeSchedule::Broadcast(SamplingScheme::None)
    }

    /// Scheme for 1-based layer `l`.
    pub fn at(&self, l: usize) -> &SamplingScheme {
        match self {
            SchemeSchedule::Broadcast(s) => s,
            SchemeSchedule::PerLayer(v) => &v[l - 1],
        }
    }

    pub fn validate(&self, n_layers: usize, n_nodes: usize) -> Result<()> {
        match self {
            SchemeSchedule::Broadcast(s) => s.validate(n_nodes),
            SchemeSchedule::PerLayer(v) => {
                if v.len() != n_layers {
                    return Err(Error::DimensionMismatch {
                        context: "per-layer scheme list",
                        expected: n_layers,
                        found: v.len(),
                    });
                }
                v.iter().try_for_each(|s| s.validate(n_nodes))
            }
        }
    }
}

impl From<SamplingScheme> for SchemeSchedule {
    fn from(s: SamplingScheme) -> Self {
        SchemeSchedule::Broadcast(s)
    }
}

fn check_len(found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch {
            context: "sampling probability vector",
            expected,
            found,
        });
    }
    Ok(())
}

/// Strictly positive and summing to one.
pub fn validate_distribution(p: &[f64]) -> Result<()> {
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::InvalidSamplingProb { index, value });
    }
    let sum: f64 = p.iter().sum();
    if !((sum - 1.0).abs() <= PROBABILITY_SUM_TOL) {
        return Err(Error::ProbabilitiesNotNormalized { sum });
    }
    Ok(())
}

/// Every entry in `(0, 1]`.
pub fn validate_inclusion(q: &[f64]) -> Result<()> {
    match q.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
        Some((index, &value)) => Err(Error::InvalidSamplingProb { index, value }),
        None => Ok(()),
    }
}

pub fn uniform_probabilities(n: usize) -> Vec<f64> {
    alloc::vec![1.0 / n as f64; n]
}

/// FastGCN proposal: `p(v) ∝ ||A(:, v)||^2`. Columns with zero norm would
/// get probability zero, which the masks cannot use.
pub fn fastgcn_probabilities(adjacency: &Mat) -> Result<Vec<f64>> {
    let norms: Vec<f64> = adjacency.column_iter().map(|c| c.norm_squared()).collect();
    if let Some((index, _)) = norms.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::InvalidSamplingProb { index, value: 0.0 });
    }
    let total: f64 = norms.iter().sum();
    Ok(norms.into_iter().map(|v| v / total).collect())
}

/// `M(v,v) = 1 + (1 - p(v)) / (p(v) N_l)`, `M(v,v') = 1 - 1/N_l`.
pub fn mask_with_replacement(p: &[f64], n_samples: usize) -> Result<Mat> {
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidSamplingProb { index, value });
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            value: 0.0,
        });
    }
    let n = p.len();
    let nl = n_samples as f64;
    Ok(Mat::from_fn(n, n, |v, w| {
        if v == w {
            1.0 + (1.0 - p[v]) / (p[v] * nl)
        } else {
            1.0 - 1.0 / nl
        }
    }))
}

/// `M(v,v) = 1/q(v)`, ones elsewhere.
pub fn mask_without_replacement(q: &[f64]) -> Result<Mat> {
    validate_inclusion(q)?;
    let n = q.len();
    Ok(Mat::from_fn(n, n, |v, w| if v == w { 1.0 / q[v] } else { 1.0 }))
}

/// Per-node inclusion probabilities; row `x` is `q_x`.
pub fn nodewise_probabilities(graph: &GraphSpec, fanout: usize) -> Mat {
    let n = graph.n_nodes();
    let mut q = Mat::zeros(n, n);
    for x in 0..n {
        let nb = graph.neighborhood(x);
        let prob = if nb.len() >= fanout {
            fanout as f64 / nb.len() as f64
        } else {
            1.0
        };
        for &v in nb {
            q[(x, v)] = prob;
        }
    }
    q
}

/// Node-wise mask `M_{xx'}` materialized for one pair. Only used to check
/// the diagonal-correction shortcut in [`crate::recursion`].
pub fn nodewise_pair_mask(graph: &GraphSpec, fanout: usize, x: usize, x_prime: usize) -> Mat {
    let n = graph.n_nodes();
    let q = nodewise_probabilities(graph, fanout);
    let mut m = Mat::zeros(n, n);
    for &v in graph.neighborhood(x) {
        for &w in graph.neighborhood(x_prime) {
            m[(v, w)] = if x == x_prime && v == w {
                1.0 / q[(x, v)]
            } else {
                1.0
            };
        }
    }
    m
}

/// Spectral facts about the layer-wise masks.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProperties {
    pub min_eig_mp_minus_ones: f64,
    pub min_eig_mq_minus_ones: f64,
    pub min_eig_mp_hadamard_gain: f64,
    pub min_eig_mq_hadamard_gain: f64,
    /// Ascending spectrum of `M_p - M_q`.
    pub mp_minus_mq_spectrum: Vec<f64>,
}

/// Report on `M_p` and `M_q` for a PSD `b`. With `q = None`, `q = N_l p` is
/// used (the coupled case), which requires `N_l p <= 1`.
pub fn mask_properties_report(
    p: &[f64],
    q: Option<&[f64]>,
    n_samples: usize,
    b: &Mat,
) -> Result<MaskProperties> {
    validate_distribution(p)?;
    let n = p.len();
    let coupled: Vec<f64>;
    let q = match q {
        Some(q) => q,
        None => {
            coupled = p.iter().map(|v| v * n_samples as f64).collect();
            if let Some((index, &value)) = coupled.iter().enumerate().find(|(_, v)| **v > 1.0) {
                return Err(Error::CouplingExceedsOne { index, value });
            }
            &coupled
        }
    };
    check_len(q.len(), n)?;
    if linalg::ensure_symmetric(b)? != n {
        return Err(Error::DimensionMismatch {
            context: "mask property test matrix",
            expected: n,
            found: b.nrows(),
        });
    }
    let mp = mask_with_replacement(p, n_samples)?;
    let mq = mask_without_replacement(q)?;
    let ones = linalg::ones(n);
    Ok(MaskProperties {
        min_eig_mp_minus_ones: linalg::min_eigenvalue(&(&mp - &ones)),
        min_eig_mq_minus_ones: linalg::min_eigenvalue(&(&mq - &ones)),
        min_eig_mp_hadamard_gain: linalg::min_eigenvalue(&(mp.component_mul(b) - b)),
        min_eig_mq_hadamard_gain: linalg::min_eigenvalue(&(mq.component_mul(b) - b)),
        mp_minus_mq_spectrum: linalg::eigenvalues(&(&mp - &mq)),
    })
}
