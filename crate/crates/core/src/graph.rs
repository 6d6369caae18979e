//! Graphs, input feature moments, and train/prediction splits.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::math;

/// How a raw 0/1 adjacency is rescaled before use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    /// `D^{-1/2} A D^{-1/2}`
    #[default]
    Symmetric,
    /// `D^{-1} A`
    Row,
}

/// A graph given by its (already normalized) adjacency matrix.
///
/// `neighborhood(x)` is the nonzero support of row `x`, which includes `x`
/// itself when the diagonal entry is nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    adjacency: Mat,
    neighborhoods: Vec<Vec<usize>>,
    coords: Option<Vec<f64>>,
}

impl GraphSpec {
    pub fn new(adjacency: Mat) -> Result<Self> {
        let n = linalg::ensure_square(&adjacency)?;
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n_nodes",
                value: 0.0,
            });
        }
        if let Some(bad) = adjacency.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "adjacency",
                value: *bad,
            });
        }
        let neighborhoods = (0..n)
            .map(|x| (0..n).filter(|&v| adjacency[(x, v)] != 0.0).collect())
            .collect();
        Ok(GraphSpec {
            adjacency,
            neighborhoods,
            coords: None,
        })
    }

    /// Undirected edge list with 0-based endpoints; each edge is stored in
    /// both directions, duplicates collapse to a single 1.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], mode: Normalization) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n_nodes",
                value: 0.0,
            });
        }
        let mut raw = Mat::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    context: "edge endpoint",
                    expected: n,
                    found: i.max(j),
                });
            }
            raw[(i, j)] = 1.0;
            raw[(j, i)] = 1.0;
        }
        GraphSpec::new(normalize_adjacency(&raw, mode))
    }

    /// Attach node coordinates used only for plotting.
    pub fn with_coords(mut self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "node coordinates",
                expected: self.n_nodes(),
                found: coords.len(),
            });
        }
        self.coords = Some(coords);
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    pub fn neighborhood(&self, x: usize) -> &[usize] {
        &self.neighborhoods[x]
    }

    pub fn degree(&self, x: usize) -> usize {
        self.neighborhoods[x].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighborhoods.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn coords(&self) -> Option<&[f64]> {
        self.coords.as_deref()
    }

    /// Coordinate of node `x`, or its index when none were attached.
    pub fn coord(&self, x: usize) -> f64 {
        self.coords.as_ref().map_or(x as f64, |c| c[x])
    }

    /// Induced subgraph on `nodes` (in the given order).
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&v| v >= self.n_nodes()) {
            return Err(Error::DimensionMismatch {
                context: "subgraph node",
                expected: self.n_nodes(),
                found: bad,
            });
        }
        let sub = GraphSpec::new(linalg::select(&self.adjacency, nodes, nodes))?;
        match &self.coords {
            Some(c) => sub.with_coords(nodes.iter().map(|&v| c[v]).collect()),
            None => Ok(sub),
        }
    }

    /// Relabel nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        self.induced_subgraph(perm)
    }
}

/// Rescale a raw nonnegative adjacency. Zero-degree rows stay zero.
pub fn normalize_adjacency(raw: &Mat, mode: Normalization) -> Mat {
    let n = raw.nrows();
    let degree: Vec<f64> = (0..n).map(|i| raw.row(i).sum()).collect();
    match mode {
        Normalization::None => raw.clone(),
        Normalization::Row => Mat::from_fn(n, raw.ncols(), |i, j| {
            if degree[i] > 0.0 {
                raw[(i, j)] / degree[i]
            } else {
                0.0
            }
        }),
        Normalization::Symmetric => {
            let inv_sqrt: Vec<f64> = degree
                .iter()
                .map(|&d| if d > 0.0 { 1.0 / math::sqrt(d) } else { 0.0 })
                .collect();
            Mat::from_fn(n, raw.ncols(), |i, j| raw[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
        }
    }
}

pub const RING_NODES: usize = 100;
pub const RING_COS_THRESHOLD: f64 = 0.9;

/// Coordinate of the 0-based ring node `idx`, i.e. `(j/50 - 1) pi` with `j = idx + 1`.
pub fn ring_coordinate(idx: usize) -> f64 {
    ((idx + 1) as f64 / 50.0 - 1.0) * PI
}

/// 100 equispaced nodes on `[-pi, pi]`, joined when `cos(x_i - x_j) >= 0.9`.
/// Self-loops are present and no normalization is applied.
pub fn build_ring_graph() -> GraphSpec {
    let coords: Vec<f64> = (0..RING_NODES).map(ring_coordinate).collect();
    let adjacency = Mat::from_fn(RING_NODES, RING_NODES, |i, j| {
        if math::cos(coords[i] - coords[j]) >= RING_COS_THRESHOLD {
            1.0
        } else {
            0.0
        }
    });
    GraphSpec::new(adjacency)
        .and_then(|g| g.with_coords(coords))
        .expect("ring graph is well formed")
}

/// Second-moment matrix `C0 = X X^T / d0` of the input features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMoment(Mat);

impl FeatureMoment {
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(c0: Mat) -> Result<Self> {
        linalg::ensure_symmetric(&c0)?;
        let min_eig = linalg::min_eigenvalue(&c0);
        if min_eig < -Self::PSD_TOL {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        Ok(FeatureMoment(linalg::symmetrized(c0)))
    }

    /// From an `N x d0` feature matrix.
    pub fn from_features(x0: &Mat) -> Result<Self> {
        if x0.ncols() == 0 {
            return Err(Error::InvalidParameter {
                name: "d0",
                value: 0.0,
            });
        }
        FeatureMoment::new(x0 * x0.transpose() / x0.ncols() as f64)
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }
}

/// `C0` for identity features: `I / n`.
pub fn identity_features(n: usize) -> FeatureMoment {
    assert!(n >= 1, "identity_features needs n >= 1");
    FeatureMoment(Mat::identity(n, n) / n as f64)
}

/// Training nodes `b` with targets `y_b`, and the remaining nodes `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSplit {
    train_idx: Vec<usize>,
    rest_idx: Vec<usize>,
    y_b: Vec<f64>,
}

impl TrainSplit {
    /// `rest_idx` is every node not in `train_idx`, ascending.
    pub fn new(n_nodes: usize, train_idx: Vec<usize>, y_b: Vec<f64>) -> Result<Self> {
        if train_idx.is_empty() {
            return Err(Error::InvalidSplit("training set is empty".into()));
        }
        if train_idx.len() != y_b.len() {
            return Err(Error::InvalidSplit(format!(
                "{} training nodes but {} targets",
                train_idx.len(),
                y_b.len()
            )));
        }
        let mut seen = alloc::vec![false; n_nodes];
        for &i in &train_idx {
            if i >= n_nodes {
                return Err(Error::InvalidSplit(format!(
                    "training node {i} out of range for {n_nodes} nodes"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidSplit(format!("training node {i} repeated")));
            }
            seen[i] = true;
        }
        if let Some(bad) = y_b.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSplit(format!("non-finite target {bad}")));
        }
        let rest_idx = (0..n_nodes).filter(|&i| !seen[i]).collect();
        Ok(TrainSplit {
            train_idx,
            rest_idx,
            y_b,
        })
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn rest_idx(&self) -> &[usize] {
        &self.rest_idx
    }

    pub fn y_b(&self) -> &[f64] {
        &self.y_b
    }

    pub fn n_train(&self) -> usize {
        self.train_idx.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.train_idx.len() + self.rest_idx.len()
    }
}

pub const FIGURE1_TRAIN_COORDS: [f64; 6] = [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5];

/// Target function generating the ring-graph training data.
pub fn figure1_target(x: f64) -> f64 {
    math::sin(PI / 2.0 * x + PI / 4.0)
}

/// Ring node closest to coordinate `x` (ties go to the lower index).
pub fn nearest_ring_node(x: f64) -> usize {
    (0..RING_NODES)
        .min_by(|&a, &b| {
            (ring_coordinate(a) - x)
                .abs()
                .total_cmp(&(ring_coordinate(b) - x).abs())
        })
        .expect("ring is nonempty")
}

/// Six training nodes on the ring, targets `sin(pi/2 x + pi/4)` at the
/// listed coordinates.
pub fn figure1_split() -> TrainSplit {
    let train_idx = FIGURE1_TRAIN_COORDS.iter().map(|&x| nearest_ring_node(x)).collect();
    let y_b = FIGURE1_TRAIN_COORDS.iter().map(|&x| figure1_target(x)).collect();
    TrainSplit::new(RING_NODES, train_idx, y_b).expect("figure-1 split is well formed")
}
