//! k-means clustering of the embedding space.

mod kmeans;
mod persist;

pub use kmeans::{
    kmeans_fit, kmeans_fit_from, kmeans_fit_observed, kmeans_plus_plus, IterationStats,
    KMeansParams,
};
pub use persist::{load_model, save_model, MODEL_MAGIC};

use crate::corpus_io::{EmbeddingMatrix, TokenRecord, Vocabulary};
use crate::error::{Error, Result};

/// A fitted partition of the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dims: usize,
    /// Row-major `k x dims`.
    pub centroids: Vec<f64>,
    /// Cluster index of each token, indexed by token id.
    pub assignments: Vec<u32>,
    pub sizes: Vec<usize>,
    pub wcss: f64,
    pub seed: u64,
    pub iterations_run: u32,
}

impl ClusterModel {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dims..(c + 1) * self.dims]
    }

    pub fn rows(&self) -> usize {
        self.assignments.len()
    }

    /// Token ids of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c as usize].push(i);
        }
        out
    }
}

pub(crate) fn sizes_of(assignments: &[u32], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a as usize] += 1;
    }
    sizes
}

/// Squared Euclidean distance between a stored row and a centroid.
#[inline]
pub fn sq_dist(row: &[f32], centroid: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut r = row.chunks_exact(4);
    let mut c = centroid.chunks_exact(4);
    for (a, b) in (&mut r).zip(&mut c) {
        for l in 0..4 {
            let d = f64::from(a[l]) - b[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for (a, b) in r.remainder().iter().zip(c.remainder()) {
        let d = f64::from(*a) - b;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Index of the nearest centroid; the lowest index wins ties.
#[inline]
pub fn nearest_centroid(row: &[f32], centroids: &[f64], dims: usize) -> (usize, f64) {
    if dims == 0 {
        return (0, 0.0);
    }
    let mut best = (0usize, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dims).enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Within-cluster sum of squares, recomputed point by point.
pub fn recompute_wcss(matrix: &EmbeddingMatrix, model: &ClusterModel) -> Result<f64> {
    if model.assignments.len() != matrix.rows() {
        return Err(Error::InvalidArgument(format!(
            "model covers {} rows, matrix has {}",
            model.assignments.len(),
            matrix.rows()
        )));
    }
    let mut total = 0.0;
    for (i, &a) in model.assignments.iter().enumerate() {
        let a = a as usize;
        if a >= model.k {
            return Err(Error::AssignmentOutOfRange {
                index: a,
                k: model.k,
            });
        }
        total += sq_dist(matrix.row(i), model.centroid(a));
    }
    Ok(total)
}

/// Members of `cluster_id` ordered by distance to its centroid, nearest first.
///
/// Ties are broken by token id. An empty cluster yields an empty list.
pub fn top_terms(
    model: &ClusterModel,
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
    cluster_id: usize,
    n: usize,
) -> Result<Vec<TokenRecord>> {
    if cluster_id >= model.k {
        return Err(Error::InvalidArgument(format!(
            "cluster {cluster_id} out of range for k = {}",
            model.k
        )));
    }
    if vocab.len() != model.rows() || matrix.rows() != model.rows() {
        return Err(Error::InvalidArgument(
            "vocabulary, matrix and model disagree on the number of tokens".into(),
        ));
    }
    let centroid = model.centroid(cluster_id);
    let mut members: Vec<(f64, usize)> = model
        .assignments
        .iter()
        .enumerate()
        .filter(|(_, &a)| a as usize == cluster_id)
        .map(|(i, _)| (sq_dist(matrix.row(i), centroid), i))
        .collect();
    members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(members
        .into_iter()
        .take(n)
        .map(|(_, i)| vocab.tokens[i].clone())
        .collect())
}
