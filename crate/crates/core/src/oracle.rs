//! Monte-Carlo ground truth for the analytic kernels.
//!
//! A finite GCN with `d_L = 1` is
//!
//! ```text
//! Z⁽ˡ⁾ = Â_l X⁽ˡ⁻¹⁾ W⁽ˡ⁾ σ_w / √d_{l-1} + σ_b 1 b⁽ˡ⁾ᵀ,   X⁽ˡ⁾ = φ(Z⁽ˡ⁾)
//! ```
//!
//! with standard normal `W`, `b`. `Â_l` is `A` without sampling and an
//! unbiased random estimate of `A` otherwise, drawn fresh per layer and per
//! trial. Trial `i` draws everything from stream `i` of the seed.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{GraphSpec, TrainSplit};
use crate::linalg::{self, Mat, Vector};
use crate::math;
use crate::recursion::GcnHyper;
use crate::rng::{stream_rng, StreamRng};
use crate::sampling::{nodewise_probabilities, validate_distribution, validate_inclusion, SamplingScheme, SchemeSchedule};

/// Output norm above which training counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGcnConfig {
    /// `d_0, ..., d_L` with `d_L = 1`.
    pub widths: Vec<usize>,
    pub hyper: GcnHyper,
    pub schedule: SchemeSchedule,
    pub n_trials: usize,
    pub seed: u64,
}

impl FiniteGcnConfig {
    pub fn validate(&self, n_nodes: usize, d0: usize) -> Result<()> {
        self.hyper.validate()?;
        if self.widths.len() != self.hyper.n_layers + 1 {
            return Err(Error::DimensionMismatch {
                context: "widths vs n_layers + 1",
                expected: self.hyper.n_layers + 1,
                found: self.widths.len(),
            });
        }
        if let Some(i) = self.widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidParameter {
                name: "widths",
                value: i as f64,
            });
        }
        if self.widths[0] != d0 {
            return Err(Error::DimensionMismatch {
                context: "input feature width",
                expected: self.widths[0],
                found: d0,
            });
        }
        if self.widths[self.hyper.n_layers] != 1 {
            return Err(Error::InvalidParameter {
                name: "output width",
                value: self.widths[self.hyper.n_layers] as f64,
            });
        }
        self.schedule.validate(self.hyper.n_layers, n_nodes)
    }
}

fn standard_normal_mat(rows: usize, cols: usize, rng: &mut StreamRng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Per-node rescaling `d` with `E[d_v d_w] = M(v, w)` for a layer-wise scheme.
fn layer_scaling(scheme: &SamplingScheme, rng: &mut StreamRng) -> Option<Vector> {
    match scheme {
        SamplingScheme::LayerWithReplacement { p, n_samples } => {
            let dist = WeightedIndex::new(p).expect("validated distribution");
            let mut counts = vec![0usize; p.len()];
            for _ in 0..*n_samples {
                counts[dist.sample(rng)] += 1;
            }
            Some(Vector::from_fn(p.len(), |v, _| {
                counts[v] as f64 / (*n_samples as f64 * p[v])
            }))
        }
        SamplingScheme::LayerWithoutReplacement { q } => Some(Vector::from_fn(q.len(), |v, _| {
            if rng.random::<f64>() < q[v] {
                1.0 / q[v]
            } else {
                0.0
            }
        })),
        SamplingScheme::None | SamplingScheme::NodeWise { .. } => None,
    }
}

/// One random draw of the aggregation operator `Â` under `scheme`.
pub fn sampled_aggregation(graph: &GraphSpec, scheme: &SamplingScheme, rng: &mut StreamRng) -> Mat {
    let a = graph.adjacency();
    match scheme {
        SamplingScheme::None => a.clone(),
        SamplingScheme::NodeWise { fanout } => {
            let q = nodewise_probabilities(graph, *fanout);
            let mut out = Mat::zeros(a.nrows(), a.ncols());
            for x in 0..graph.n_nodes() {
                for &v in graph.neighborhood(x) {
                    if rng.random::<f64>() < q[(x, v)] {
                        out[(x, v)] = a[(x, v)] / q[(x, v)];
                    }
                }
            }
            out
        }
        layer => {
            let d = layer_scaling(layer, rng).expect("layer-wise scheme");
            let mut out = a.clone();
            for (j, mut col) in out.column_iter_mut().enumerate() {
                col *= d[j];
            }
            out
        }
    }
}

struct Network {
    weights: Vec<Mat>,
    biases: Vec<Vector>,
}

impl Network {
    fn init(widths: &[usize], rng: &mut StreamRng) -> Self {
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            weights.push(standard_normal_mat(pair[0], pair[1], rng));
            biases.push(Vector::from_fn(pair[1], |_, _| StandardNormal.sample(rng)));
        }
        Network { weights, biases }
    }
}

/// Pre-activations `Z⁽¹⁾..Z⁽ᵏ⁾` for the first `k = aggs.len()` layers.
fn forward(x0: &Mat, net: &Network, hyper: &GcnHyper, aggs: &[Mat]) -> Vec<Mat> {
    let sw = math::sqrt(hyper.sigma_w2);
    let sb = math::sqrt(hyper.sigma_b2);
    let mut zs: Vec<Mat> = Vec::with_capacity(aggs.len());
    for (l, agg) in aggs.iter().enumerate() {
        let input = match zs.last() {
            None => x0.clone(),
            Some(z) => z.map(|v| hyper.activation.apply(v)),
        };
        let scale = sw / math::sqrt(input.ncols() as f64);
        let mut z = agg * (input * &net.weights[l]) * scale;
        let bias = &net.biases[l];
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(sb * bias[j]);
        }
        zs.push(z);
    }
    zs
}

fn draw_aggregations(graph: &GraphSpec, cfg: &FiniteGcnConfig, rng: &mut StreamRng) -> Vec<Mat> {
    (1..=cfg.hyper.n_layers)
        .map(|l| sampled_aggregation(graph, cfg.schedule.at(l), rng))
        .collect()
}

fn check_inputs(graph: &GraphSpec, x0: &Mat, cfg: &FiniteGcnConfig) -> Result<()> {
    if x0.nrows() != graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "feature rows vs nodes",
            expected: graph.n_nodes(),
            found: x0.nrows(),
        });
    }
    cfg.validate(graph.n_nodes(), x0.ncols())
}

/// Output `f` of a freshly drawn network for trial `trial`.
pub fn trial_output(graph: &GraphSpec, x0: &Mat, cfg: &FiniteGcnConfig, trial: usize) -> Vector {
    let mut rng = stream_rng(cfg.seed, trial as u64);
    let net = Network::init(&cfg.widths, &mut rng);
    let aggs = draw_aggregations(graph, cfg, &mut rng);
    let zs = forward(x0, &net, &cfg.hyper, &aggs);
    zs.last().expect("n_layers >= 1").column(0).into_owned()
}

/// `E[f f^T]` for trial `trial` with the readout layer integrated out:
/// given the hidden features `X` and the last aggregation `Â_L`, the output
/// covariance is `σ_b² 1 + σ_w² Â_L X X^T Â_L^T / d_{L-1}`. Hidden weights
/// and all sampling stay random, so the trial average is an unbiased
/// estimate of the same quantity as the plain second moment of `f`, with
/// the readout noise removed.
pub fn trial_conditional_covariance(graph: &GraphSpec, x0: &Mat, cfg: &FiniteGcnConfig, trial: usize) -> Mat {
    let mut rng = stream_rng(cfg.seed, trial as u64);
    let net = Network::init(&cfg.widths, &mut rng);
    let aggs = draw_aggregations(graph, cfg, &mut rng);
    let l = cfg.hyper.n_layers;
    let zs = forward(x0, &net, &cfg.hyper, &aggs[..l - 1]);
    let hidden = match zs.last() {
        None => x0.clone(),
        Some(z) => z.map(|v| cfg.hyper.activation.apply(v)),
    };
    let ax = &aggs[l - 1] * &hidden;
    let d = hidden.ncols() as f64;
    let mut cov = (&ax * ax.transpose()) * (cfg.hyper.sigma_w2 / d);
    cov.add_scalar_mut(cfg.hyper.sigma_b2);
    linalg::symmetrize(&mut cov);
    cov
}

/// Outputs of `cfg.n_trials` independent networks.
pub fn sample_finite_gcn_output(graph: &GraphSpec, x0: &Mat, cfg: &FiniteGcnConfig) -> Result<Vec<Vector>> {
    check_inputs(graph, x0, cfg)?;
    Ok((0..cfg.n_trials).map(|i| trial_output(graph, x0, cfg, i)).collect())
}

/// Trial average of [`trial_conditional_covariance`].
pub fn empirical_output_covariance(graph: &GraphSpec, x0: &Mat, cfg: &FiniteGcnConfig) -> Result<Mat> {
    check_inputs(graph, x0, cfg)?;
    if cfg.n_trials == 0 {
        return Err(Error::InvalidParameter {
            name: "n_trials",
            value: 0.0,
        });
    }
    let covs: Vec<Mat> = (0..cfg.n_trials)
        .map(|i| trial_conditional_covariance(graph, x0, cfg, i))
        .collect();
    Ok(average(&covs))
}

/// Entrywise mean, summed in slice order.
pub fn average(mats: &[Mat]) -> Mat {
    let mut acc = mats[0].clone();
    for m in &mats[1..] {
        acc += m;
    }
    acc / mats.len() as f64
}

/// `mean(f f^T)` over samples; the outputs have known zero mean.
pub fn sample_second_moment(outputs: &[Vector]) -> Mat {
    let n = outputs[0].len();
    let mut acc = Mat::zeros(n, n);
    for f in outputs {
        acc.ger(1.0, f, f, 1.0);
    }
    acc / outputs.len() as f64
}

/// Average of `D C D` over random layer-wise rescalings `D`; converges to
/// `M ⊙ C`.
pub fn empirical_mask_check(scheme: &SamplingScheme, c: &Mat, n_draws: usize, seed: u64) -> Result<Mat> {
    let n = linalg::ensure_symmetric(c)?;
    match scheme {
        SamplingScheme::LayerWithReplacement { p, .. } => validate_distribution(p)?,
        SamplingScheme::LayerWithoutReplacement { q } => validate_inclusion(q)?,
        _ => {
            return Err(Error::InvalidParameter {
                name: "mask check scheme",
                value: f64::NAN,
            })
        }
    }
    scheme.validate(n)?;
    let mut rng = stream_rng(seed, 0);
    let mut acc = Mat::zeros(n, n);
    for _ in 0..n_draws {
        let d = layer_scaling(scheme, &mut rng).expect("layer-wise scheme");
        acc.ger(1.0, &d, &d, 1.0);
    }
    Ok((acc / n_draws as f64).component_mul(c))
}

/// Average of `(d_x d_{x'}^T) ⊙ C` where `d_x` holds node `x`'s rescaled
/// neighbor indicators; converges to `M_{xx'} ⊙ C`.
pub fn empirical_nodewise_mask_check(
    graph: &GraphSpec,
    fanout: usize,
    x: usize,
    x_prime: usize,
    c: &Mat,
    n_draws: usize,
    seed: u64,
) -> Result<Mat> {
    let n = linalg::ensure_symmetric(c)?;
    SamplingScheme::NodeWise { fanout }.validate(n)?;
    if n != graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "moment matrix vs graph",
            expected: graph.n_nodes(),
            found: n,
        });
    }
    let q = nodewise_probabilities(graph, fanout);
    let mut rng = stream_rng(seed, 0);
    let draw = |node: usize, rng: &mut StreamRng| {
        let mut d = Vector::zeros(n);
        for &v in graph.neighborhood(node) {
            if rng.random::<f64>() < q[(node, v)] {
                d[v] = 1.0 / q[(node, v)];
            }
        }
        d
    };
    let mut acc = Mat::zeros(n, n);
    for _ in 0..n_draws {
        let dx = draw(x, &mut rng);
        let dy = if x == x_prime { dx.clone() } else { draw(x_prime, &mut rng) };
        acc.ger(1.0, &dx, &dy, 1.0);
    }
    Ok((acc / n_draws as f64).component_mul(c))
}

/// Gradient-descent trajectory of one finite network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    /// `f` before the first step and after every step.
    pub outputs: Vec<Vector>,
    /// `(1/2N_b) ‖f_b - y_b‖²` for each recorded output.
    pub losses: Vec<f64>,
    /// Training stopped early because `‖f‖` left `[0, 1e6]` or became NaN.
    pub diverged: bool,
}

/// Squared loss and gradients of one network; `aggs` fixed.
fn loss_and_gradients(
    x0: &Mat,
    net: &Network,
    hyper: &GcnHyper,
    aggs: &[Mat],
    split: &TrainSplit,
) -> (Vector, f64, Vec<Mat>, Vec<Vector>) {
    let zs = forward(x0, net, hyper, aggs);
    let f: Vector = zs.last().expect("n_layers >= 1").column(0).into_owned();
    let nb = split.n_train() as f64;
    let mut grad_z = Mat::zeros(f.len(), 1);
    let mut loss = 0.0;
    for (i, &node) in split.train_idx().iter().enumerate() {
        let r = f[node] - split.y_b()[i];
        loss += r * r;
        grad_z[(node, 0)] = r / nb;
    }
    loss /= 2.0 * nb;

    let sw = math::sqrt(hyper.sigma_w2);
    let sb = math::sqrt(hyper.sigma_b2);
    let n_layers = aggs.len();
    let mut grad_w = vec![Mat::zeros(0, 0); n_layers];
    let mut grad_b = vec![Vector::zeros(0); n_layers];
    for l in (0..n_layers).rev() {
        let input = if l == 0 {
            x0.clone()
        } else {
            zs[l - 1].map(|v| hyper.activation.apply(v))
        };
        let scale = sw / math::sqrt(input.ncols() as f64);
        let agg_t_grad = aggs[l].transpose() * &grad_z;
        grad_w[l] = input.transpose() * &agg_t_grad * scale;
        grad_b[l] = grad_z.row_sum().transpose() * sb;
        if l > 0 {
            let grad_x = agg_t_grad * net.weights[l].transpose() * scale;
            grad_z = grad_x.zip_map(&zs[l - 1], |g, z| g * hyper.activation.derivative(z));
        }
    }
    (f, loss, grad_w, grad_b)
}

/// Full-batch gradient descent on `(1/2N_b) ‖f_b - y_b‖²` from the network
/// of trial 0. Sampling schemes draw a fresh `Â` every step. One step
/// corresponds to time 1 of the gradient flow `dθ/dt = -η ∇L`.
pub fn train_finite_gcn(
    graph: &GraphSpec,
    x0: &Mat,
    cfg: &FiniteGcnConfig,
    split: &TrainSplit,
    eta: f64,
    n_steps: usize,
) -> Result<TrainingRun> {
    check_inputs(graph, x0, cfg)?;
    if split.n_nodes() != graph.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "training split vs graph",
            expected: graph.n_nodes(),
            found: split.n_nodes(),
        });
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter { name: "eta", value: eta });
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let mut net = Network::init(&cfg.widths, &mut rng);
    let mut run = TrainingRun {
        outputs: Vec::with_capacity(n_steps + 1),
        losses: Vec::with_capacity(n_steps + 1),
        diverged: false,
    };
    for step in 0..=n_steps {
        let aggs = draw_aggregations(graph, cfg, &mut rng);
        let (f, loss, grad_w, grad_b) = loss_and_gradients(x0, &net, &cfg.hyper, &aggs, split);
        let norm = f.norm();
        run.outputs.push(f);
        run.losses.push(loss);
        if !(norm <= DIVERGENCE_NORM) {
            run.diverged = true;
            break;
        }
        if step == n_steps {
            break;
        }
        for l in 0..net.weights.len() {
            net.weights[l] -= &grad_w[l] * eta;
            net.biases[l] -= &grad_b[l] * eta;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::graph::{build_ring_graph, figure1_split, identity_features, normalize_adjacency, Normalization};
    use crate::recursion::gcn_kernels;
    use crate::sampling::{mask_with_replacement, mask_without_replacement, nodewise_pair_mask, uniform_probabilities};

    fn ring_subgraph(n: usize) -> GraphSpec {
        let nodes: Vec<usize> = (0..n).collect();
        build_ring_graph().induced_subgraph(&nodes).unwrap()
    }

    fn relu_hyper(n_layers: usize) -> GcnHyper {
        GcnHyper {
            sigma_w2: 32.0,
            sigma_b2: 0.0,
            n_layers,
            activation: ActivationKind::Relu,
        }
    }

    fn random_psd(n: usize, seed: u64) -> Mat {
        let mut rng = stream_rng(seed, 0);
        let f = standard_normal_mat(n, n + 1, &mut rng);
        &f * f.transpose() / n as f64
    }

    fn cfg(widths: Vec<usize>, hyper: GcnHyper, schedule: SchemeSchedule, n_trials: usize, seed: u64) -> FiniteGcnConfig {
        FiniteGcnConfig { widths, hyper, schedule, n_trials, seed }
    }

    #[test]
    fn sampled_aggregation_is_unbiased_in_its_support() {
        let g = ring_subgraph(12);
        let mut rng = stream_rng(1, 0);
        let a = sampled_aggregation(&g, &SamplingScheme::NodeWise { fanout: 3 }, &mut rng);
        for x in 0..12 {
            for v in 0..12 {
                if g.adjacency()[(x, v)] == 0.0 {
                    assert_eq!(a[(x, v)], 0.0);
                }
            }
        }
        let q1 = SamplingScheme::LayerWithoutReplacement { q: vec![1.0; 12] };
        assert_eq!(sampled_aggregation(&g, &q1, &mut rng), *g.adjacency());
        let full = SamplingScheme::NodeWise { fanout: 20 };
        assert_eq!(sampled_aggregation(&g, &full, &mut rng), *g.adjacency());
    }

    #[test]
    fn bias_only_network_has_all_ones_covariance() {
        let g = ring_subgraph(8);
        let x0 = Mat::identity(8, 8);
        let h = GcnHyper { sigma_w2: 0.0, sigma_b2: 1.0, n_layers: 2, activation: ActivationKind::Relu };
        let c = cfg(vec![8, 16, 1], h, SchemeSchedule::none(), 4000, 3);
        let outs = sample_finite_gcn_output(&g, &x0, &c).unwrap();
        for f in &outs {
            assert!(f.iter().all(|v| *v == f[0]));
        }
        let m = sample_second_moment(&outs);
        // var of a mean of 4000 squared normals is 2/4000
        assert!(linalg::max_abs_diff(&m, &linalg::ones(8)) < 5.0 * (2.0f64 / 4000.0).sqrt());
        let integrated = empirical_output_covariance(&g, &x0, &c).unwrap();
        assert_eq!(integrated, linalg::ones(8));
    }

    #[test]
    fn single_layer_integrated_covariance_is_exact() {
        let g = ring_subgraph(10);
        let x0 = Mat::identity(10, 10);
        let c = cfg(vec![10, 1], relu_hyper(1), SchemeSchedule::none(), 3, 0);
        let emp = empirical_output_covariance(&g, &x0, &c).unwrap();
        let exact = gcn_kernels(&g, &identity_features(10), &relu_hyper(1), &SchemeSchedule::none()).unwrap();
        assert!(linalg::max_abs_diff(&emp, &exact.k) < 1e-12);
    }

    #[test]
    fn two_layer_covariance_matches_kernel() {
        // relative standard error at width 4096 and 200 trials is ~0.1%
        let g = ring_subgraph(20);
        let x0 = Mat::identity(20, 20);
        let c = cfg(vec![20, 4096, 1], relu_hyper(2), SchemeSchedule::none(), 200, 11);
        let emp = empirical_output_covariance(&g, &x0, &c).unwrap();
        let exact = gcn_kernels(&g, &identity_features(20), &relu_hyper(2), &SchemeSchedule::none()).unwrap();
        assert!(linalg::relative_frobenius(&emp, &exact.k) < 0.05);
    }

    #[test]
    fn sampled_two_layer_covariance_matches_masked_kernel() {
        let g = ring_subgraph(10);
        let x0 = Mat::identity(10, 10);
        for scheme in [
            SamplingScheme::LayerWithoutReplacement { q: vec![0.5; 10] },
            SamplingScheme::NodeWise { fanout: 4 },
            SamplingScheme::LayerWithReplacement { p: uniform_probabilities(10), n_samples: 10 },
        ] {
            let sched: SchemeSchedule = scheme.clone().into();
            let c = cfg(vec![10, 512, 1], relu_hyper(2), sched.clone(), 2000, 5);
            let emp = empirical_output_covariance(&g, &x0, &c).unwrap();
            let exact = gcn_kernels(&g, &identity_features(10), &relu_hyper(2), &sched).unwrap();
            let err = linalg::relative_frobenius(&emp, &exact.k);
            assert!(err < 0.05, "{scheme:?}: {err}");
        }
    }

    #[test]
    fn wider_networks_are_closer() {
        // On the full ring the error spreads over many kernel modes, so the
        // 1/sqrt(width) trend is visible per family (expected ratio 2).
        let g = build_ring_graph();
        let x0 = Mat::identity(100, 100);
        let exact = gcn_kernels(&g, &identity_features(100), &relu_hyper(2), &SchemeSchedule::none()).unwrap();
        let mut wins = 0;
        for family in 0..5u64 {
            let err = |w: usize, seed: u64| {
                let c = cfg(vec![100, w, 1], relu_hyper(2), SchemeSchedule::none(), 20, seed);
                linalg::relative_frobenius(&empirical_output_covariance(&g, &x0, &c).unwrap(), &exact.k)
            };
            if err(4096, 2 * family + 1) < err(1024, 2 * family) {
                wins += 1;
            }
        }
        assert!(wins >= 4, "{wins}");
    }

    #[test]
    fn mask_check_with_replacement() {
        let c = random_psd(10, 2);
        let scheme = SamplingScheme::LayerWithReplacement { p: uniform_probabilities(10), n_samples: 5 };
        let emp = empirical_mask_check(&scheme, &c, 100_000, 9).unwrap();
        let target = mask_with_replacement(&uniform_probabilities(10), 5).unwrap().component_mul(&c);
        for (e, t) in emp.iter().zip(target.iter()) {
            assert!((e - t).abs() <= 0.02 * t.abs().max(0.05 * target.amax()), "{e} vs {t}");
        }
    }

    #[test]
    fn mask_check_without_replacement() {
        let c = random_psd(6, 3);
        let q = [0.3, 0.5, 0.9, 1.0, 0.7, 0.6];
        let scheme = SamplingScheme::LayerWithoutReplacement { q: q.to_vec() };
        let emp = empirical_mask_check(&scheme, &c, 200_000, 4).unwrap();
        let target = mask_without_replacement(&q).unwrap().component_mul(&c);
        assert!(linalg::max_abs_diff(&emp, &target) < 0.03 * target.amax());
        let ones = SamplingScheme::LayerWithoutReplacement { q: vec![1.0; 6] };
        assert_eq!(empirical_mask_check(&ones, &c, 10, 4).unwrap(), c);
    }

    #[test]
    fn nodewise_mask_check() {
        let g = ring_subgraph(12);
        let c = random_psd(12, 4);
        for (x, y) in [(3usize, 3usize), (3, 4), (0, 11)] {
            let emp = empirical_nodewise_mask_check(&g, 2, x, y, &c, 100_000, 8).unwrap();
            let target = nodewise_pair_mask(&g, 2, x, y).component_mul(&c);
            assert!(linalg::max_abs_diff(&emp, &target) < 0.05 * target.amax(), "({x},{y})");
        }
        let emp = empirical_nodewise_mask_check(&g, 15, 5, 6, &c, 3, 1).unwrap();
        assert_eq!(emp, nodewise_pair_mask(&g, 15, 5, 6).component_mul(&c));
    }

    #[test]
    fn mask_error_shrinks_like_root_n() {
        let c = random_psd(10, 6);
        let scheme = SamplingScheme::LayerWithReplacement { p: uniform_probabilities(10), n_samples: 5 };
        let target = mask_with_replacement(&uniform_probabilities(10), 5).unwrap().component_mul(&c);
        let err = |n: usize| -> f64 {
            (0..3u64)
                .map(|rep| linalg::max_abs_diff(&empirical_mask_check(&scheme, &c, n, 100 + rep).unwrap(), &target))
                .sum::<f64>()
                / 3.0
        };
        let ratio = err(5_000) / err(20_000);
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn outputs_are_deterministic() {
        let g = ring_subgraph(10);
        let x0 = Mat::identity(10, 10);
        let sched: SchemeSchedule = SamplingScheme::NodeWise { fanout: 3 }.into();
        let c = cfg(vec![10, 32, 1], relu_hyper(2), sched, 5, 77);
        assert_eq!(
            sample_finite_gcn_output(&g, &x0, &c).unwrap(),
            sample_finite_gcn_output(&g, &x0, &c).unwrap()
        );
        assert_eq!(trial_output(&g, &x0, &c, 3), sample_finite_gcn_output(&g, &x0, &c).unwrap()[3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = GraphSpec::new(normalize_adjacency(ring_subgraph(8).adjacency(), Normalization::Row)).unwrap();
        let x0 = Mat::identity(8, 8);
        let split = TrainSplit::new(8, vec![1, 4, 6], vec![0.5, -1.0, 0.2]).unwrap();
        let h = GcnHyper { sigma_w2: 2.0, sigma_b2: 0.3, n_layers: 3, activation: ActivationKind::Erf };
        let mut rng = stream_rng(3, 0);
        let mut net = Network::init(&[8, 5, 4, 1], &mut rng);
        let aggs = vec![g.adjacency().clone(); 3];
        let (_, _, gw, gb) = loss_and_gradients(&x0, &net, &h, &aggs, &split);
        let h_step = 1e-6;
        for l in 0..3 {
            for idx in [0usize, 3] {
                let idx = idx.min(net.weights[l].len() - 1);
                let orig = net.weights[l][idx];
                net.weights[l][idx] = orig + h_step;
                let up = loss_and_gradients(&x0, &net, &h, &aggs, &split).1;
                net.weights[l][idx] = orig - h_step;
                let down = loss_and_gradients(&x0, &net, &h, &aggs, &split).1;
                net.weights[l][idx] = orig;
                assert!(((up - down) / (2.0 * h_step) - gw[l][idx]).abs() < 1e-6);
            }
            let orig = net.biases[l][0];
            net.biases[l][0] = orig + h_step;
            let up = loss_and_gradients(&x0, &net, &h, &aggs, &split).1;
            net.biases[l][0] = orig - h_step;
            let down = loss_and_gradients(&x0, &net, &h, &aggs, &split).1;
            net.biases[l][0] = orig;
            assert!(((up - down) / (2.0 * h_step) - gb[l][0]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_steps_returns_initial_output() {
        let g = ring_subgraph(10);
        let x0 = Mat::identity(10, 10);
        let split = TrainSplit::new(10, vec![2, 7], vec![1.0, -1.0]).unwrap();
        let c = cfg(vec![10, 16, 1], relu_hyper(2), SchemeSchedule::none(), 1, 4);
        let run = train_finite_gcn(&g, &x0, &c, &split, 0.1, 0).unwrap();
        assert_eq!(run.outputs.len(), 1);
        assert_eq!(run.outputs[0], trial_output(&g, &x0, &c, 0));
    }

    #[test]
    fn unnormalized_ring_diverges_at_figure_rate() {
        let g = build_ring_graph();
        let x0 = Mat::identity(100, 100);
        let c = cfg(vec![100, 100, 1], relu_hyper(2), SchemeSchedule::none(), 1, 0);
        let run = train_finite_gcn(&g, &x0, &c, &figure1_split(), 0.1, 50).unwrap();
        assert!(run.diverged);
    }

    #[test]
    fn row_normalized_ring_training_reduces_loss() {
        let ring = build_ring_graph();
        let g = GraphSpec::new(normalize_adjacency(ring.adjacency(), Normalization::Row)).unwrap();
        let x0 = Mat::identity(100, 100);
        let split = figure1_split();
        let mut improved = 0;
        for seed in 0..20u64 {
            let c = cfg(vec![100, 100, 1], relu_hyper(2), SchemeSchedule::none(), 1, seed);
            let run = train_finite_gcn(&g, &x0, &c, &split, 0.1, 500).unwrap();
            assert!(!run.diverged);
            if run.losses[500] < run.losses[0] {
                improved += 1;
            }
        }
        assert!(improved >= 19, "{improved}");
    }

    #[test]
    fn rejects_bad_configs() {
        let g = ring_subgraph(5);
        let x0 = Mat::identity(5, 5);
        let bad_out = cfg(vec![5, 3, 2], relu_hyper(2), SchemeSchedule::none(), 1, 0);
        assert!(sample_finite_gcn_output(&g, &x0, &bad_out).is_err());
        let bad_in = cfg(vec![4, 3, 1], relu_hyper(2), SchemeSchedule::none(), 1, 0);
        assert!(sample_finite_gcn_output(&g, &x0, &bad_in).is_err());
        let short = cfg(vec![5, 1], relu_hyper(2), SchemeSchedule::none(), 1, 0);
        assert!(sample_finite_gcn_output(&g, &x0, &short).is_err());
    }
}
