//! Gaussian-process evolution under gradient flow on the squared loss.
//!
//! Training on nodes `b` with learning rate `η` moves the prior `N(0, K)` to
//!
//! ```text
//! μ_b(t) = β y_b                 μ_c(t) = G β y_b
//! K_bb(t) = α K_bb α             K_cb(t) = K_cb α - G β K_bb α
//! K_cc(t) = K_cc - G β K_bc - K_cb β G^T + G β K_bb β G^T
//! ```
//!
//! with `α = exp(-t η Θ_bb / N_b)`, `β = I - α`, `G = Θ_cb Θ_bb⁻¹`. All
//! functions of `Θ_bb` go through one symmetric eigendecomposition; `Θ_bb⁻¹`
//! is the spectral pseudo-inverse with cutoff `1e-10 λ_max`.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::TrainSplit;
use crate::linalg::{self, Mat, SymmetricSpectrum, Vector};
use crate::math;
use crate::recursion::KernelPair;
use crate::rng::stream_rng;

/// Relative eigenvalue cutoff for pseudo-inverses.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Default observation noise variance for the posterior.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Kernel blocks and the `Θ_bb` spectrum for one training split.
#[derive(Debug, Clone)]
pub struct GpEvolution {
    eta: f64,
    n_train: usize,
    train_idx: Vec<usize>,
    rest_idx: Vec<usize>,
    y: Vector,
    k_bb: Mat,
    k_cb: Mat,
    k_cc: Mat,
    theta_cb: Mat,
    theta_spec: SymmetricSpectrum,
    theta_cutoff: f64,
    /// `Θ_cb Θ_bb⁺`
    gain: Mat,
    theta_rank_deficient: bool,
}

/// Prior of `(f_b, f_c)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpState {
    pub t: f64,
    pub mu_b: Vector,
    pub mu_c: Vector,
    pub k_bb: Mat,
    pub k_bc: Mat,
    pub k_cb: Mat,
    pub k_cc: Mat,
    /// `Θ_bb` was singular at the pseudo-inverse tolerance.
    pub rank_deficient: bool,
    train_idx: Vec<usize>,
    rest_idx: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    pub mean_c: Vector,
    pub cov_cc: Mat,
    pub epsilon: f64,
    pub mean_b: Vector,
    pub cov_bb: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiselessMean {
    pub mean_c: Vector,
    /// `K_bb(0)` was singular; a pseudo-inverse was used.
    pub rank_deficient: bool,
}

impl GpEvolution {
    pub fn new(kernels: &KernelPair, split: &TrainSplit, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter { name: "eta", value: eta });
        }
        let n = linalg::ensure_symmetric(&kernels.k)?;
        if linalg::ensure_symmetric(&kernels.theta)? != n || split.n_nodes() != n {
            return Err(Error::DimensionMismatch {
                context: "kernels vs training split",
                expected: n,
                found: split.n_nodes(),
            });
        }
        let b = split.train_idx();
        let c = split.rest_idx();
        let theta_bb = linalg::select(&kernels.theta, b, b);
        let theta_spec = SymmetricSpectrum::new(&theta_bb)?;
        let theta_cutoff = theta_spec.cutoff(PINV_REL_TOL);
        let theta_cb = linalg::select(&kernels.theta, c, b);
        let gain = &theta_cb * theta_spec.pseudo_inverse(PINV_REL_TOL);
        Ok(GpEvolution {
            eta,
            n_train: b.len(),
            train_idx: b.to_vec(),
            rest_idx: c.to_vec(),
            y: Vector::from_column_slice(split.y_b()),
            k_bb: linalg::select(&kernels.k, b, b),
            k_cb: linalg::select(&kernels.k, c, b),
            k_cc: linalg::select(&kernels.k, c, c),
            theta_cb,
            theta_rank_deficient: theta_spec.rank(PINV_REL_TOL) < b.len(),
            theta_spec,
            theta_cutoff,
            gain,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn theta_rank_deficient(&self) -> bool {
        self.theta_rank_deficient
    }

    pub fn theta_bb_spectrum(&self) -> &SymmetricSpectrum {
        &self.theta_spec
    }

    /// `Θ_cb Θ_bb⁻¹`.
    pub fn gain(&self) -> &Mat {
        &self.gain
    }

    /// Time at which `t η / N_b = 10³ / λ_min(Θ_bb)`; every mode of `α` is
    /// below `e^-1000` there.
    pub fn limit_time(&self) -> f64 {
        let lambda_min = self.theta_spec.min_eigenvalue().max(self.theta_cutoff);
        1e3 * self.n_train as f64 / (self.eta * lambda_min)
    }

    /// `(α, G β)` at time `t`; `α = I` exactly at `t = 0`.
    fn propagators(&self, t: f64) -> (Mat, Mat) {
        let nb = self.n_train;
        if t == 0.0 {
            return (Mat::identity(nb, nb), Mat::zeros(self.rest_idx.len(), nb));
        }
        let s = t * self.eta / nb as f64;
        let cutoff = self.theta_cutoff;
        let alpha = self.theta_spec.map(|l| if l <= 0.0 { 1.0 } else { math::exp(-s * l) });
        // Θ_bb⁺ β as one spectral function, so small t avoids cancellation.
        let inv_beta = self
            .theta_spec
            .map(|l| if l <= cutoff { 0.0 } else { -math::expm1(-s * l) / l });
        (alpha, &self.theta_cb * inv_beta)
    }

    fn state_from(&self, t: f64, alpha: &Mat, g_beta: &Mat) -> GpState {
        let nb = self.n_train;
        let beta = Mat::identity(nb, nb) - alpha;
        let k_bc0 = self.k_cb.transpose();
        let mu_b = &beta * &self.y;
        let mu_c = g_beta * &self.y;
        let mut k_bb = alpha * &self.k_bb * alpha;
        let k_cb = &self.k_cb * alpha - g_beta * &self.k_bb * alpha;
        let g_beta_k_bc = g_beta * &k_bc0;
        let mut k_cc = &self.k_cc - &g_beta_k_bc - g_beta_k_bc.transpose()
            + g_beta * &self.k_bb * g_beta.transpose();
        linalg::symmetrize(&mut k_bb);
        linalg::symmetrize(&mut k_cc);
        GpState {
            t,
            mu_b,
            mu_c,
            k_bb,
            k_bc: k_cb.transpose(),
            k_cb,
            k_cc,
            rank_deficient: self.theta_rank_deficient,
            train_idx: self.train_idx.clone(),
            rest_idx: self.rest_idx.clone(),
        }
    }

    /// Prior at time `t >= 0`.
    pub fn evolve_prior(&self, t: f64) -> Result<GpState> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter { name: "t", value: t });
        }
        let (alpha, g_beta) = self.propagators(t);
        Ok(self.state_from(t, &alpha, &g_beta))
    }

    /// The `t = ∞` state in closed form: `α = 0`, `β = I`.
    pub fn limit(&self) -> GpState {
        let cutoff = self.theta_cutoff;
        // modes below the cutoff do not train
        let alpha = if self.theta_rank_deficient {
            self.theta_spec.map(|l| if l <= cutoff { 1.0 } else { 0.0 })
        } else {
            Mat::zeros(self.n_train, self.n_train)
        };
        self.state_from(f64::INFINITY, &alpha, &self.gain)
    }

    /// Condition the prior at `state.t` on `f_b = y_b + noise`, noise
    /// variance `epsilon`.
    pub fn posterior(&self, state: &GpState, epsilon: f64) -> Result<PosteriorResult> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: epsilon,
            });
        }
        let nb = self.n_train;
        let noisy = &state.k_bb + Mat::identity(nb, nb) * epsilon;
        let chol = noisy
            .cholesky()
            .ok_or(Error::SingularSystem("K_bb(t) + epsilon I"))?;
        let resid = &self.y - &state.mu_b;
        let w = chol.solve(&resid);
        // K_cb (LLᵀ)⁻¹ K_bc = WᵀW with W = L⁻¹ K_bc, symmetric PSD by construction
        let l = chol.l();
        let w_bc = l.solve_lower_triangular(&state.k_bc).ok_or(Error::SingularSystem("Cholesky factor"))?;
        let w_bb = l.solve_lower_triangular(&state.k_bb).ok_or(Error::SingularSystem("Cholesky factor"))?;
        let mut cov_cc = &state.k_cc - w_bc.transpose() * &w_bc;
        let mut cov_bb = &state.k_bb - w_bb.transpose() * &w_bb;
        linalg::symmetrize(&mut cov_cc);
        linalg::symmetrize(&mut cov_bb);
        Ok(PosteriorResult {
            mean_c: &state.mu_c + &state.k_cb * &w,
            cov_cc,
            epsilon,
            mean_b: &state.mu_b + &state.k_bb * &w,
            cov_bb,
        })
    }

    /// Noise-free posterior mean `μ_c(t) + K_cb(t) K_bb(t)⁻¹ (y_b - μ_b(t))`,
    /// simplified through the evolution formulas to
    /// `G β y + (K_cb - G β K_bb) K_bb⁺ y`.
    pub fn noiseless_posterior_mean(&self, t: f64) -> Result<NoiselessMean> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter { name: "t", value: t });
        }
        let k_spec = SymmetricSpectrum::new(&self.k_bb)?;
        let k_pinv = k_spec.pseudo_inverse(PINV_REL_TOL);
        let (_, g_beta) = self.propagators(t);
        let mean_c = &g_beta * &self.y + (&self.k_cb - &g_beta * &self.k_bb) * (k_pinv * &self.y);
        Ok(NoiselessMean {
            mean_c,
            rank_deficient: k_spec.rank(PINV_REL_TOL) < self.n_train,
        })
    }
}

impl GpState {
    pub fn n_nodes(&self) -> usize {
        self.train_idx.len() + self.rest_idx.len()
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn rest_idx(&self) -> &[usize] {
        &self.rest_idx
    }

    /// Mean over all nodes, in node order.
    pub fn node_mean(&self) -> Vector {
        scatter(self.n_nodes(), &self.train_idx, &self.mu_b, &self.rest_idx, &self.mu_c)
    }

    /// Covariance over all nodes, in node order.
    pub fn node_covariance(&self) -> Mat {
        let n = self.n_nodes();
        let mut full = Mat::zeros(n, n);
        let blocks = [
            (&self.train_idx, &self.train_idx, &self.k_bb),
            (&self.train_idx, &self.rest_idx, &self.k_bc),
            (&self.rest_idx, &self.train_idx, &self.k_cb),
            (&self.rest_idx, &self.rest_idx, &self.k_cc),
        ];
        for (rows, cols, block) in blocks {
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    full[(r, c)] = block[(i, j)];
                }
            }
        }
        full
    }

    /// Largest `|K_cb - K_bc^T|`.
    pub fn cross_asymmetry(&self) -> f64 {
        linalg::max_abs_diff(&self.k_cb, &self.k_bc.transpose())
    }

    /// Draw `n_paths` joint samples, in node order. Negative eigenvalues of
    /// the covariance are clipped to zero. Path `i` uses stream `i` of
    /// `seed`.
    pub fn sample_paths(&self, n_paths: usize, seed: u64) -> Result<Vec<Vector>> {
        let mean = self.node_mean();
        let factor = SymmetricSpectrum::new(&self.node_covariance())?.psd_sqrt_factor();
        let n = mean.len();
        Ok((0..n_paths)
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                let z = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                &mean + &factor * z
            })
            .collect())
    }
}

impl PosteriorResult {
    /// Posterior mean in node order.
    pub fn node_mean(&self, state: &GpState) -> Vector {
        scatter(state.n_nodes(), &state.train_idx, &self.mean_b, &state.rest_idx, &self.mean_c)
    }

    /// Posterior marginal variances in node order.
    pub fn node_variance(&self, state: &GpState) -> Vector {
        scatter(
            state.n_nodes(),
            &state.train_idx,
            &self.cov_bb.diagonal(),
            &state.rest_idx,
            &self.cov_cc.diagonal(),
        )
    }
}

fn scatter(n: usize, b: &[usize], vb: &Vector, c: &[usize], vc: &Vector) -> Vector {
    let mut out = Vector::zeros(n);
    for (i, &x) in b.iter().enumerate() {
        out[x] = vb[i];
    }
    for (i, &x) in c.iter().enumerate() {
        out[x] = vc[i];
    }
    out
}
