//! Lloyd's algorithm with greedy k-means++ seeding.
//!
//! All reductions go through fixed-size row chunks whose partial results are
//! combined in chunk order, so the output is identical for any rayon pool
//! size.

use rand::Rng as _;
use rayon::prelude::*;

use super::{nearest_centroid, sizes_of, sq_dist, ClusterModel};
use crate::corpus_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 200,
            seed: 0,
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

/// Reported after every assignment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub wcss: f64,
    pub reassigned: usize,
}

pub fn kmeans_fit(matrix: &EmbeddingMatrix, params: &KMeansParams) -> Result<ClusterModel> {
    kmeans_fit_observed(matrix, params, &mut |_| {})
}

/// Fit with a callback invoked after every assignment step.
pub fn kmeans_fit_observed(
    matrix: &EmbeddingMatrix,
    params: &KMeansParams,
    observer: &mut dyn FnMut(&IterationStats),
) -> Result<ClusterModel> {
    validate(matrix, params)?;
    let init = kmeans_plus_plus(matrix, params.k, params.seed);
    run_lloyd(matrix, &init, params, observer)
}

/// Fit starting from the given rows as initial centroids.
pub fn kmeans_fit_from(
    matrix: &EmbeddingMatrix,
    initial_rows: &[usize],
    params: &KMeansParams,
    observer: &mut dyn FnMut(&IterationStats),
) -> Result<ClusterModel> {
    validate(matrix, params)?;
    if initial_rows.len() != params.k {
        return Err(Error::InvalidArgument(format!(
            "{} initial rows given for k = {}",
            initial_rows.len(),
            params.k
        )));
    }
    if let Some(&bad) = initial_rows.iter().find(|&&r| r >= matrix.rows()) {
        return Err(Error::InvalidArgument(format!(
            "initial row {bad} out of range"
        )));
    }
    run_lloyd(matrix, initial_rows, params, observer)
}

fn validate(matrix: &EmbeddingMatrix, params: &KMeansParams) -> Result<()> {
    if params.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if params.k > matrix.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the number of rows ({})",
            params.k,
            matrix.rows()
        )));
    }
    if params.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::InvalidArgument("tol must be non-negative".into()));
    }
    if let Some(pos) = matrix.data().iter().position(|v| !v.is_finite()) {
        let dims = matrix.dims().max(1);
        return Err(Error::NonFinite {
            row: pos / dims,
            col: pos % dims,
        });
    }
    u32::try_from(matrix.rows()).map_err(|_| Error::InvalidArgument("too many rows".into()))?;
    Ok(())
}

/// Deterministic sum over a per-row quantity.
fn chunked_sum(values: &[f64]) -> f64 {
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect();
    partial.iter().sum()
}

/// Greedy k-means++: at each step several D²-weighted candidates are drawn
/// and the one that most reduces the potential is kept. Candidates are
/// located by scanning rows in id order.
pub fn kmeans_plus_plus(matrix: &EmbeddingMatrix, k: usize, seed: u64) -> Vec<usize> {
    let n = matrix.rows();
    if k == 0 || n == 0 {
        return Vec::new();
    }
    let mut rng = seed::rng(seed);
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];

    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let first_row: Vec<f64> = matrix.row(first).iter().map(|&v| f64::from(v)).collect();
    let mut closest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(matrix.row(i), &first_row))
        .collect();

    while chosen.len() < k {
        let potential = chunked_sum(&closest);
        let mut candidates = Vec::with_capacity(trials);
        if potential > 0.0 {
            for _ in 0..trials {
                let target = rng.random::<f64>() * potential;
                candidates.push(pick_weighted(&closest, target));
            }
        } else {
            // every remaining row coincides with a chosen centroid
            let next = (0..n).find(|&i| !is_chosen[i]).expect("k <= rows");
            candidates.push(next);
        }

        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &cand in &candidates {
            let c_row: Vec<f64> = matrix.row(cand).iter().map(|&v| f64::from(v)).collect();
            let updated: Vec<f64> = closest
                .par_iter()
                .enumerate()
                .map(|(i, &d)| d.min(sq_dist(matrix.row(i), &c_row)))
                .collect();
            let pot = chunked_sum(&updated);
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, cand, updated));
            }
        }
        let (_, cand, updated) = best.expect("at least one candidate");
        chosen.push(cand);
        is_chosen[cand] = true;
        closest = updated;
    }
    chosen
}

fn pick_weighted(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

struct Assignment {
    labels: Vec<u32>,
    dists: Vec<f64>,
    wcss: f64,
}

fn assign(matrix: &EmbeddingMatrix, centroids: &[f64]) -> Assignment {
    let dims = matrix.dims();
    let (labels, dists): (Vec<u32>, Vec<f64>) = (0..matrix.rows())
        .into_par_iter()
        .map(|i| {
            let (c, d) = nearest_centroid(matrix.row(i), centroids, dims);
            (c as u32, d)
        })
        .unzip();
    let wcss = chunked_sum(&dists);
    Assignment {
        labels,
        dists,
        wcss,
    }
}

/// Mean of each cluster's members; empty clusters are reseeded at the rows
/// farthest from their current centroid. Returns the largest centroid shift.
fn update(
    matrix: &EmbeddingMatrix,
    k: usize,
    assignment: &Assignment,
    centroids: &mut [f64],
) -> f64 {
    let dims = matrix.dims();
    let partials: Vec<(Vec<f64>, Vec<usize>)> = assignment
        .labels
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, labels)| {
            let mut sums = vec![0.0f64; k * dims];
            let mut counts = vec![0usize; k];
            for (j, &l) in labels.iter().enumerate() {
                let row = matrix.row(ci * CHUNK + j);
                let l = l as usize;
                counts[l] += 1;
                for (s, &v) in sums[l * dims..(l + 1) * dims].iter_mut().zip(row) {
                    *s += f64::from(v);
                }
            }
            (sums, counts)
        })
        .collect();
    let mut sums = vec![0.0f64; k * dims];
    let mut counts = vec![0usize; k];
    for (s, c) in &partials {
        for (a, b) in sums.iter_mut().zip(s) {
            *a += b;
        }
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }

    let mut taken = vec![false; matrix.rows()];
    let mut shift = 0.0f64;
    for c in 0..k {
        let new: Vec<f64> = if counts[c] > 0 {
            let n = counts[c] as f64;
            sums[c * dims..(c + 1) * dims]
                .iter()
                .map(|s| s / n)
                .collect()
        } else {
            let far = farthest_untaken(&assignment.dists, &taken);
            taken[far] = true;
            matrix.row(far).iter().map(|&v| f64::from(v)).collect()
        };
        let old = &mut centroids[c * dims..(c + 1) * dims];
        let moved = old
            .iter()
            .zip(&new)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        shift = shift.max(moved);
        old.copy_from_slice(&new);
    }
    shift
}

fn farthest_untaken(dists: &[f64], taken: &[bool]) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &d) in dists.iter().enumerate() {
        if !taken[i] && d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn run_lloyd(
    matrix: &EmbeddingMatrix,
    init: &[usize],
    params: &KMeansParams,
    observer: &mut dyn FnMut(&IterationStats),
) -> Result<ClusterModel> {
    let k = params.k;
    let dims = matrix.dims();
    let mut centroids: Vec<f64> = Vec::with_capacity(k * dims);
    for &r in init {
        centroids.extend(matrix.row(r).iter().map(|&v| f64::from(v)));
    }

    let mut labels: Vec<u32> = Vec::new();
    let mut iterations = 0usize;
    let final_assignment = loop {
        let a = assign(matrix, &centroids);
        let reassigned = if labels.is_empty() {
            a.labels.len()
        } else {
            labels.iter().zip(&a.labels).filter(|(x, y)| x != y).count()
        };
        observer(&IterationStats {
            iteration: iterations,
            wcss: a.wcss,
            reassigned,
        });
        labels.clone_from(&a.labels);
        if reassigned == 0 || iterations == params.max_iter {
            break a;
        }
        let shift = update(matrix, k, &a, &mut centroids);
        iterations += 1;
        if shift < params.tol || iterations == params.max_iter {
            // one more assignment so labels agree with the final centroids
            let a = assign(matrix, &centroids);
            let reassigned = labels.iter().zip(&a.labels).filter(|(x, y)| x != y).count();
            observer(&IterationStats {
                iteration: iterations,
                wcss: a.wcss,
                reassigned,
            });
            break a;
        }
    };

    Ok(ClusterModel {
        k,
        dims,
        sizes: sizes_of(&final_assignment.labels, k),
        assignments: final_assignment.labels,
        centroids,
        wcss: final_assignment.wcss,
        seed: params.seed,
        iterations_run: iterations as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::recompute_wcss;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rows: usize, dims: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = seed::rng(seed);
        let normal = Normal::new(0.0f32, 1.0).unwrap();
        let data = (0..rows * dims).map(|_| normal.sample(&mut rng)).collect();
        EmbeddingMatrix::new(rows, dims, data).unwrap()
    }

    fn params(k: usize, seed: u64) -> KMeansParams {
        KMeansParams {
            k,
            seed,
            ..KMeansParams::default()
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let m = random_matrix(37, 5, 1);
        let model = kmeans_fit(&m, &params(1, 9)).unwrap();
        assert!(model.assignments.iter().all(|&a| a == 0));
        assert_eq!(model.sizes, vec![37]);
        for d in 0..5 {
            let mean = (0..37).map(|i| f64::from(m.row(i)[d])).sum::<f64>() / 37.0;
            assert!((model.centroids[d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let m = random_matrix(12, 3, 2);
        let model = kmeans_fit(&m, &params(12, 4)).unwrap();
        assert!(model.sizes.iter().all(|&s| s == 1));
        assert_eq!(model.wcss, 0.0);
    }

    #[test]
    fn two_planted_blobs_are_recovered() {
        let mut rng = seed::rng(77);
        let noise = Normal::new(0.0f32, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut planted = Vec::new();
        for (label, center) in [(0usize, 10.0f32), (1, -10.0)] {
            for _ in 0..100 {
                rows.push(vec![
                    center + noise.sample(&mut rng),
                    center + noise.sample(&mut rng),
                ]);
                planted.push(label);
            }
        }
        // oracle: every point is nearer its own planted center
        for (r, &l) in rows.iter().zip(&planted) {
            let c = if l == 0 { 10.0 } else { -10.0 };
            let own: f32 = r.iter().map(|v| (v - c) * (v - c)).sum();
            let other: f32 = r.iter().map(|v| (v + c) * (v + c)).sum();
            assert!(own < other);
        }
        let m = EmbeddingMatrix::from_rows(&rows).unwrap();
        let model = kmeans_fit(&m, &params(2, 3)).unwrap();
        let a0 = model.assignments[0];
        for (i, &l) in planted.iter().enumerate() {
            assert_eq!(model.assignments[i] == a0, l == 0, "row {i}");
        }
    }

    #[test]
    fn wcss_is_non_increasing_and_consistent() {
        let m = random_matrix(500, 8, 3);
        let mut trace = Vec::new();
        let model = kmeans_fit_observed(&m, &params(10, 5), &mut |s| trace.push(s.wcss)).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "{trace:?}");
        }
        assert_eq!(*trace.last().unwrap(), model.wcss);
        let recomputed = recompute_wcss(&m, &model).unwrap();
        assert!((recomputed - model.wcss).abs() <= 1e-4 * model.wcss);
        for i in 0..m.rows() {
            let (c, _) = nearest_centroid(m.row(i), &model.centroids, m.dims());
            assert_eq!(model.assignments[i] as usize, c);
        }
        assert_eq!(model.sizes.iter().sum::<usize>(), 500);
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = random_matrix(5, 2, 0);
        assert!(kmeans_fit(&m, &params(6, 0)).is_err());
        assert!(kmeans_fit(&m, &params(0, 0)).is_err());
        let p = KMeansParams {
            max_iter: 0,
            ..params(2, 0)
        };
        assert!(kmeans_fit(&m, &p).is_err());
    }

    #[test]
    fn duplicate_rows_still_fill_k() {
        let m = EmbeddingMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        let init = kmeans_plus_plus(&m, 3, 0);
        let mut sorted = init.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
        let model = kmeans_fit(&m, &params(3, 0)).unwrap();
        assert_eq!(model.sizes.iter().sum::<usize>(), 4);
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // two identical initial centroids force an empty cluster on the first pass
        let m =
            EmbeddingMatrix::from_rows(&[vec![0.0], vec![0.1], vec![10.0], vec![10.1]]).unwrap();
        let model = kmeans_fit_from(&m, &[0, 0], &params(2, 0), &mut |_| {}).unwrap();
        assert_eq!(model.sizes, vec![2, 2]);
    }
}
