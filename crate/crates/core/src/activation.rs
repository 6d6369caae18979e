//! Gaussian moments of activations.
//!
//! For `z ~ N(0, K)` these compute `C = E[phi(z) phi(z)^T]` and
//! `C_dot = E[phi'(z) phi'(z)^T]` in closed form. ReLU gives (half of) the
//! arc-cosine kernels of order one and zero; erf gives the arcsine kernel.

use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::math;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Erf,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Erf => math::erf(z),
        }
    }

    /// The ReLU derivative at 0 is taken to be 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Erf => 2.0 / math::sqrt(PI) * math::exp(-z * z),
        }
    }

    pub fn moments(self, k: &Mat) -> Result<MomentPair> {
        match self {
            ActivationKind::Relu => relu_moments(k),
            ActivationKind::Erf => erf_moments(k),
        }
    }
}

/// `c = E[phi phi^T]`, `c_dot = E[phi' phi'^T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub c: Mat,
    pub c_dot: Mat,
}

pub fn relu_moments(k: &Mat) -> Result<MomentPair> {
    let n = linalg::ensure_symmetric(k)?;
    let mut c = Mat::zeros(n, n);
    let mut c_dot = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (cij, dij) = relu_entry(k[(i, i)], k[(j, j)], 0.5 * (k[(i, j)] + k[(j, i)]), i == j);
            c[(i, j)] = cij;
            c[(j, i)] = cij;
            c_dot[(i, j)] = dij;
            c_dot[(j, i)] = dij;
        }
    }
    Ok(MomentPair { c, c_dot })
}

fn relu_entry(kxx: f64, kyy: f64, kxy: f64, diagonal: bool) -> (f64, f64) {
    let prod = kxx * kyy;
    // z = 0 almost surely on a zero-variance node: phi = 0 and phi'(0) = 0.
    if !(prod > 0.0) {
        return (0.0, 0.0);
    }
    let norm = math::sqrt(prod);
    let cos_theta = if diagonal {
        1.0
    } else {
        (kxy / norm).clamp(-1.0, 1.0)
    };
    let theta = math::acos(cos_theta);
    let c = norm * (math::sin(theta) + (PI - theta) * cos_theta) / (2.0 * PI);
    let c_dot = (PI - theta) / (2.0 * PI);
    (c, c_dot)
}

/// Below this the erf determinant term `(1+2Kxx)(1+2Kyy) - 4Kxy^2` is rejected.
pub const ERF_DET_FLOOR: f64 = 1e-12;

pub fn erf_moments(k: &Mat) -> Result<MomentPair> {
    let n = linalg::ensure_symmetric(k)?;
    let mut c = Mat::zeros(n, n);
    let mut c_dot = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let kxy = 0.5 * (k[(i, j)] + k[(j, i)]);
            let a = 1.0 + 2.0 * k[(i, i)];
            let b = 1.0 + 2.0 * k[(j, j)];
            let det = a * b - 4.0 * kxy * kxy;
            if !(det >= ERF_DET_FLOOR) || !(a * b > 0.0) {
                return Err(Error::InvalidErfCovariance {
                    row: i,
                    col: j,
                    value: det,
                });
            }
            let ratio = (2.0 * kxy / math::sqrt(a * b)).clamp(-1.0, 1.0);
            let cij = 2.0 / PI * math::asin(ratio);
            let dij = 4.0 / PI / math::sqrt(det);
            c[(i, j)] = cij;
            c[(j, i)] = cij;
            c_dot[(i, j)] = dij;
            c_dot[(j, i)] = dij;
        }
    }
    Ok(MomentPair { c, c_dot })
}

/// Monte-Carlo estimate of both moments from `n_samples` draws of
/// `z = L g`, `L L^T = k`. Deterministic in `seed`.
pub fn numeric_moment_oracle(
    k: &Mat,
    kind: ActivationKind,
    n_samples: usize,
    seed: u64,
) -> Result<MomentPair> {
    let (c, c_dot) = moment_sums(k, kind, n_samples, seed)?;
    let scale = 1.0 / n_samples.max(1) as f64;
    Ok(MomentPair {
        c: c * scale,
        c_dot: c_dot * scale,
    })
}

/// Same estimate with the sample budget split over `n_chunks` chunks seeded
/// `seed + chunk`; chunk sums are combined in chunk order.
pub fn numeric_moment_oracle_chunked(
    k: &Mat,
    kind: ActivationKind,
    n_samples: usize,
    seed: u64,
    n_chunks: usize,
) -> Result<MomentPair> {
    let n_chunks = n_chunks.max(1);
    let n = linalg::ensure_symmetric(k)?;
    let mut c = Mat::zeros(n, n);
    let mut c_dot = Mat::zeros(n, n);
    for chunk in 0..n_chunks {
        let budget = n_samples / n_chunks + usize::from(chunk < n_samples % n_chunks);
        let (cs, ds) = moment_sums(k, kind, budget, seed.wrapping_add(chunk as u64))?;
        c += cs;
        c_dot += ds;
    }
    let scale = 1.0 / n_samples.max(1) as f64;
    Ok(MomentPair {
        c: c * scale,
        c_dot: c_dot * scale,
    })
}

/// Unnormalized sums of `phi phi^T` and `phi' phi'^T` over one chunk.
pub fn moment_sums(k: &Mat, kind: ActivationKind, n_samples: usize, seed: u64) -> Result<(Mat, Mat)> {
    let n = linalg::ensure_symmetric(k)?;
    let factor = linalg::gaussian_factor(k)?;
    let mut rng = stream_rng(seed, 0);
    let mut c = Mat::zeros(n, n);
    let mut c_dot = Mat::zeros(n, n);
    let mut g = Vector::zeros(n);
    let mut phi = Vector::zeros(n);
    let mut dphi = Vector::zeros(n);
    for _ in 0..n_samples {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let z = &factor * &g;
        for i in 0..n {
            phi[i] = kind.apply(z[i]);
            dphi[i] = kind.derivative(z[i]);
        }
        c.ger(1.0, &phi, &phi, 1.0);
        c_dot.ger(1.0, &dphi, &dphi, 1.0);
    }
    Ok((c, c_dot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[a, b, b, c])
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        let d = linalg::max_abs_diff(a, b);
        assert!(d <= tol, "max diff {d:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn relu_perfect_correlation() {
        let m = relu_moments(&m2(1.0, 1.0, 1.0)).unwrap();
        assert_close(&m.c, &Mat::from_element(2, 2, 0.5), 1e-15);
        assert_close(&m.c_dot, &Mat::from_element(2, 2, 0.5), 1e-15);
    }

    #[test]
    fn relu_orthogonal_inputs() {
        let m = relu_moments(&Mat::identity(2, 2)).unwrap();
        assert_close(&m.c, &m2(0.5, 1.0 / (2.0 * PI), 0.5), 1e-15);
        assert_close(&m.c_dot, &m2(0.5, 0.25, 0.5), 1e-15);
    }

    #[test]
    fn relu_zero_variance_node() {
        let m = relu_moments(&m2(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(m.c[(0, 0)], 0.0);
        assert_eq!(m.c[(0, 1)], 0.0);
        assert_eq!(m.c_dot[(0, 1)], 0.0);
        assert_eq!(m.c_dot[(0, 0)], 0.0);
        assert_eq!(m.c[(1, 1)], 1.0);
        assert_eq!(m.c_dot[(1, 1)], 0.5);
    }

    #[test]
    fn erf_zero_covariance() {
        let m = erf_moments(&Mat::zeros(2, 2)).unwrap();
        assert_close(&m.c, &Mat::zeros(2, 2), 0.0);
        assert_close(&m.c_dot, &Mat::from_element(2, 2, 4.0 / PI), 1e-15);
    }

    #[test]
    fn erf_rejects_invalid_covariance() {
        // |K_xy| far beyond what any PSD matrix allows
        let err = erf_moments(&m2(0.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidErfCovariance { .. }));
    }

    #[test]
    fn moments_reject_bad_shapes() {
        assert!(matches!(relu_moments(&Mat::zeros(2, 3)), Err(Error::NotSquare { .. })));
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0]);
        assert!(matches!(relu_moments(&asym), Err(Error::Asymmetric { .. })));
        assert!(matches!(erf_moments(&asym), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn ordered_pair_breaks_loewner_monotonicity() {
        let k1 = m2(2.58, 0.83, 0.62);
        let k2 = m2(1.52, 0.76, 0.61);
        assert!(linalg::min_eigenvalue(&(&k1 - &k2)) > 0.0);
        let relu = |k: &Mat| relu_moments(k).unwrap();
        let erf = |k: &Mat| erf_moments(k).unwrap();
        let cases = [
            ("relu", [-0.00172870, 0.53672870], [-0.03084086, 0.03084086], relu(&k1), relu(&k2)),
            ("erf", [-0.01530613, 0.10825164], [-0.17231565, 0.06827739], erf(&k1), erf(&k2)),
        ];
        for (name, c_eigs, cd_eigs, m1, m2_) in cases {
            let ec = linalg::eigenvalues(&(&m1.c - &m2_.c));
            let ed = linalg::eigenvalues(&(&m1.c_dot - &m2_.c_dot));
            for i in 0..2 {
                assert!((ec[i] - c_eigs[i]).abs() < 1e-6, "{name} C: {ec:?}");
                assert!((ed[i] - cd_eigs[i]).abs() < 1e-6, "{name} Cdot: {ed:?}");
            }
            assert!(ec[0] < -1e-4, "{name}");
        }
    }

    #[test]
    fn oracle_matches_relu_identity() {
        let k = Mat::identity(2, 2);
        let mc = numeric_moment_oracle(&k, ActivationKind::Relu, 1_000_000, 11).unwrap();
        let exact = relu_moments(&k).unwrap();
        assert_close(&mc.c, &exact.c, 0.005);
        assert_close(&mc.c_dot, &exact.c_dot, 0.005);
    }

    #[test]
    fn oracle_matches_relu_perfect_correlation() {
        let mc = numeric_moment_oracle(&m2(1.0, 1.0, 1.0), ActivationKind::Relu, 1_000_000, 5).unwrap();
        assert!((mc.c[(0, 1)] - 0.5).abs() < 0.005);
    }

    #[test]
    fn oracle_matches_erf_on_correlated_matrix() {
        let k = m2(2.58, 0.83, 0.62);
        let mc = numeric_moment_oracle_chunked(&k, ActivationKind::Erf, 10_000_000, 3, 4).unwrap();
        let exact = erf_moments(&k).unwrap();
        assert_close(&mc.c, &exact.c, 0.002);
        assert_close(&mc.c_dot, &exact.c_dot, 0.002);
    }

    #[test]
    fn oracle_is_deterministic() {
        let k = m2(1.0, 0.3, 2.0);
        let a = numeric_moment_oracle_chunked(&k, ActivationKind::Erf, 1000, 9, 3).unwrap();
        let b = numeric_moment_oracle_chunked(&k, ActivationKind::Erf, 1000, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    fn psd_matrix(n: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-2.0f64..2.0, n * (n + 1)).prop_map(move |v| {
            let g = Mat::from_iterator(n, n + 1, v);
            &g * g.transpose() / (n + 1) as f64
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn moments_are_symmetric_psd(k in (1usize..7).prop_flat_map(psd_matrix)) {
            for kind in [ActivationKind::Relu, ActivationKind::Erf] {
                let m = kind.moments(&k).unwrap();
                prop_assert_eq!(linalg::max_asymmetry(&m.c), 0.0);
                prop_assert!(linalg::min_eigenvalue(&m.c) >= -1e-10);
                prop_assert!(linalg::min_eigenvalue(&m.c_dot) >= -1e-10);
                for v in m.c_dot.iter() {
                    match kind {
                        ActivationKind::Relu => prop_assert!((0.0..=0.5).contains(v)),
                        ActivationKind::Erf => prop_assert!(*v > 0.0 && *v <= 4.0 / PI + 1e-15),
                    }
                }
            }
        }

        #[test]
        fn relu_is_homogeneous(k in (1usize..6).prop_flat_map(psd_matrix), s in 0.01f64..100.0) {
            let base = relu_moments(&k).unwrap();
            let scaled = relu_moments(&(&k * s)).unwrap();
            for (a, b) in scaled.c.iter().zip(base.c.iter()) {
                prop_assert!((a - s * b).abs() <= 1e-12 * (1.0 + (s * b).abs()));
            }
            prop_assert!(linalg::max_abs_diff(&scaled.c_dot, &base.c_dot) <= 1e-12);
        }

        #[test]
        fn relu_diagonal_identity(k in (1usize..6).prop_flat_map(psd_matrix)) {
            let m = relu_moments(&k).unwrap();
            for i in 0..k.nrows() {
                if k[(i, i)] > 0.0 {
                    prop_assert!((m.c[(i, i)] - k[(i, i)] / 2.0).abs() <= 1e-12);
                    prop_assert!((m.c_dot[(i, i)] - 0.5).abs() <= 1e-12);
                }
            }
        }
    }
}
