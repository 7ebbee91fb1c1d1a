//! K-nearest-neighbour graphs over a single frame's points and the matrices derived
//! from them: adjacency `W`, degree `D` and combinatorial Laplacian `L = D - W`.

use serde::{Deserialize, Serialize};

use crate::numerics::Matrix;
use crate::{Error, Result};

/// One frame of points, stored as an `n × 3` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    coords: Matrix,
}

impl PointSet {
    pub fn new(coords: Matrix) -> Result<Self> {
        if coords.cols() != 3 {
            return Err(Error::shape("PointSet", format!("{} columns", coords.cols()), "3 columns"));
        }
        if coords.rows() < 2 {
            return Err(Error::Parameter(format!(
                "a point set needs at least 2 points, got {}",
                coords.rows()
            )));
        }
        if !coords.is_finite() {
            return Err(Error::NonFinite("PointSet coordinates".into()));
        }
        Ok(PointSet { coords })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        PointSet::new(Matrix::from_rows(points)?)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    fn dist2(&self, i: usize, j: usize) -> f64 {
        let a = self.coords.row(i);
        let b = self.coords.row(j);
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    }
}

/// Edge weighting for the union-symmetrized K-NN graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EdgeWeight {
    #[default]
    Binary,
    /// `exp(-d² / (2σ²))` on the same edge set.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphMatrices {
    pub adjacency: Matrix,
    pub degree: Matrix,
    pub laplacian: Matrix,
}

impl GraphMatrices {
    pub fn len(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds `D` and `L` from a symmetric, zero-diagonal adjacency.
    pub fn from_adjacency(adjacency: Matrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::shape(
                "GraphMatrices",
                format!("{}x{}", adjacency.rows(), adjacency.cols()),
                "square",
            ));
        }
        let n = adjacency.rows();
        let mut degree = Matrix::zeros(n, n);
        let mut laplacian = adjacency.scale(-1.0);
        for i in 0..n {
            let d: f64 = adjacency.row(i).iter().sum();
            degree.set(i, i, d);
            laplacian.set(i, i, d - adjacency.get(i, i));
        }
        Ok(GraphMatrices {
            adjacency,
            degree,
            laplacian,
        })
    }
}

/// Indices of the `k` nearest neighbours of every point (self excluded), nearest first.
/// Equal distances are broken by the lower point index.
pub fn nearest_neighbors(points: &PointSet, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "neighbour count k={k} must satisfy 1 <= k < n={n}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (points.dist2(i, j), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.push(cand[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// Binary K-NN graph: `W_ij = 1` iff `j` is among the `k` nearest of `i` or vice versa.
pub fn knn_graph(points: &PointSet, k: usize) -> Result<GraphMatrices> {
    knn_graph_weighted(points, k, EdgeWeight::Binary)
}

pub fn knn_graph_weighted(points: &PointSet, k: usize, weight: EdgeWeight) -> Result<GraphMatrices> {
    if let EdgeWeight::Gaussian { sigma } = weight {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("gaussian sigma must be positive, got {sigma}")));
        }
    }
    let n = points.len();
    let neighbors = nearest_neighbors(points, k)?;
    let mut w = Matrix::zeros(n, n);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let value = match weight {
                EdgeWeight::Binary => 1.0,
                EdgeWeight::Gaussian { sigma } => (-points.dist2(i, j) / (2.0 * sigma * sigma)).exp(),
            };
            w.set(i, j, value);
            w.set(j, i, value);
        }
    }
    GraphMatrices::from_adjacency(w)
}

/// Laplacian quadratic form `Σ_c x_cᵀ L x_c` summed over signal channels.
pub fn laplacian_energy_check(g: &GraphMatrices, signal: &Matrix) -> Result<f64> {
    if signal.rows() != g.len() {
        return Err(Error::shape(
            "laplacian_energy_check",
            format!("{} graph nodes", g.len()),
            format!("{} signal rows", signal.rows()),
        ));
    }
    let lx = g.laplacian.matmul(signal)?;
    Ok(lx.data().iter().zip(signal.data()).map(|(a, b)| a * b).sum())
}
