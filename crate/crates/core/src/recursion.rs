//! Layer recursion for the GCN covariance `K` and neural tangent kernel `Θ`.
//!
//! With `C`, `Ċ` the activation moments of the previous layer and
//! `V = Θ ⊙ Ċ + C`,
//!
//! ```text
//! K⁽ˡ⁾ = σ_b² 1 + σ_w² Agg(C⁽ˡ⁻¹⁾)
//! Θ⁽ˡ⁾ = σ_b² 1 + σ_w² Agg(V⁽ˡ⁻¹⁾)
//! ```
//!
//! where `Agg(X) = A (M ⊙ X) A^T` for a layer-wise mask `M` (all ones without
//! sampling). The first layer reads `C⁽⁰⁾` directly with `Θ⁽⁰⁾ = Ċ⁽⁰⁾ = 0`,
//! and the output layer has no activation.
//!
//! Node-wise sampling uses a different mask for every node pair, but the
//! mask equals one on the whole support of `A(x,:)^T A(x',:)` unless
//! `x = x'`, so only the diagonal changes:
//!
//! ```text
//! Agg(X)(x,x) = (A X A^T)(x,x) + Σ_{v ∈ N(x)} A(x,v)² X(v,v) (1/q_x(v) - 1)
//! ```

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::graph::{FeatureMoment, GraphSpec};
use crate::linalg::{self, Mat};
use crate::sampling::{nodewise_probabilities, SamplingScheme, SchemeSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnHyper {
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub n_layers: usize,
    pub activation: ActivationKind,
}

impl GcnHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w2 >= 0.0) || !self.sigma_w2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma_w2",
                value: self.sigma_w2,
            });
        }
        if !(self.sigma_b2 >= 0.0) || !self.sigma_b2.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma_b2",
                value: self.sigma_b2,
            });
        }
        if self.n_layers == 0 {
            return Err(Error::InvalidParameter {
                name: "n_layers",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Covariance and NTK after `layer` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    pub k: Mat,
    pub theta: Mat,
    pub layer: usize,
}

impl KernelPair {
    pub fn n_nodes(&self) -> usize {
        self.k.nrows()
    }

    /// Smallest eigenvalue over both matrices.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.k).min(linalg::min_eigenvalue(&self.theta))
    }
}

/// Second moments entering layer `l`: `(C⁽ˡ⁻¹⁾, V⁽ˡ⁻¹⁾)`.
pub fn layer_inputs(
    previous: Option<&KernelPair>,
    c0: &FeatureMoment,
    activation: ActivationKind,
) -> Result<(Mat, Mat)> {
    match previous {
        None => Ok((c0.matrix().clone(), c0.matrix().clone())),
        Some(prev) => {
            let moments = activation.moments(&prev.k)?;
            let v = prev.theta.component_mul(&moments.c_dot) + &moments.c;
            Ok((moments.c, v))
        }
    }
}

/// `A (M ⊙ X) A^T`, or `A X A^T` without a mask.
pub fn masked_aggregate(graph: &GraphSpec, x: &Mat, mask: Option<&Mat>) -> Mat {
    let a = graph.adjacency();
    match mask {
        Some(m) => a * m.component_mul(x) * a.transpose(),
        None => a * x * a.transpose(),
    }
}

/// Node-wise aggregation via the diagonal correction.
pub fn nodewise_aggregate(graph: &GraphSpec, x: &Mat, fanout: usize) -> Mat {
    let q = nodewise_probabilities(graph, fanout);
    let a = graph.adjacency();
    let mut out = masked_aggregate(graph, x, None);
    for node in 0..graph.n_nodes() {
        let correction: f64 = graph
            .neighborhood(node)
            .iter()
            .map(|&v| a[(node, v)] * a[(node, v)] * x[(v, v)] * (1.0 / q[(node, v)] - 1.0))
            .sum();
        out[(node, node)] += correction;
    }
    out
}

/// Graph aggregation of a second-moment matrix under `scheme`.
pub fn aggregate(graph: &GraphSpec, x: &Mat, scheme: &SamplingScheme) -> Result<Mat> {
    check_dims(graph.n_nodes(), x, "aggregated matrix")?;
    Ok(match scheme {
        SamplingScheme::None => masked_aggregate(graph, x, None),
        SamplingScheme::NodeWise { fanout } => nodewise_aggregate(graph, x, *fanout),
        layer => {
            let mask = layer.layer_mask()?;
            masked_aggregate(graph, x, mask.as_ref())
        }
    })
}

fn check_dims(n: usize, m: &Mat, context: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context,
            expected: n,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// `(K⁽ˡ⁾, Θ⁽ˡ⁾)` for `l = 1..=L`.
pub fn gcn_kernel_layers(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    schedule: &SchemeSchedule,
) -> Result<Vec<KernelPair>> {
    hyper.validate()?;
    let n = graph.n_nodes();
    check_dims(n, c0.matrix(), "input feature moment")?;
    schedule.validate(hyper.n_layers, n)?;

    let bias = linalg::ones(n) * hyper.sigma_b2;
    let mut layers: Vec<KernelPair> = Vec::with_capacity(hyper.n_layers);
    for l in 1..=hyper.n_layers {
        let (c, v) = layer_inputs(layers.last(), c0, hyper.activation)?;
        let scheme = schedule.at(l);
        let mut k = &bias + aggregate(graph, &c, scheme)? * hyper.sigma_w2;
        let mut theta = &bias + aggregate(graph, &v, scheme)? * hyper.sigma_w2;
        linalg::symmetrize(&mut k);
        linalg::symmetrize(&mut theta);
        layers.push(KernelPair { k, theta, layer: l });
    }
    Ok(layers)
}

/// Output-layer kernels `(K⁽ᴸ⁾, Θ⁽ᴸ⁾)`.
pub fn gcn_kernels(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    schedule: &SchemeSchedule,
) -> Result<KernelPair> {
    let mut layers = gcn_kernel_layers(graph, c0, hyper, schedule)?;
    Ok(layers.pop().expect("n_layers >= 1"))
}

/// One entry of the node-wise-sampled `(K, Θ)` given the previous layer's
/// `C` and `V`, evaluated straight from the pair mask restricted to
/// `N(x) x N(x')`.
pub fn nodewise_kernel_entry(
    graph: &GraphSpec,
    c_prev: &Mat,
    v_prev: &Mat,
    hyper: &GcnHyper,
    fanout: usize,
    x: usize,
    x_prime: usize,
) -> (f64, f64) {
    let a = graph.adjacency();
    let q = nodewise_probabilities(graph, fanout);
    let mut k = 0.0;
    let mut theta = 0.0;
    for &v in graph.neighborhood(x) {
        for &w in graph.neighborhood(x_prime) {
            let m = if x == x_prime && v == w { 1.0 / q[(x, v)] } else { 1.0 };
            let weight = a[(x, v)] * m * a[(x_prime, w)];
            k += weight * c_prev[(v, w)];
            theta += weight * v_prev[(v, w)];
        }
    }
    (
        hyper.sigma_b2 + hyper.sigma_w2 * k,
        hyper.sigma_b2 + hyper.sigma_w2 * theta,
    )
}
