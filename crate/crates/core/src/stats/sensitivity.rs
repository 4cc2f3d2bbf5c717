//! Per-cluster sensitivity of an attribute's distribution.
//!
//! A cluster is sensitive to an attribute when the log-probability of its
//! observed bin counts under the population marginal falls strictly below
//! every one of `n_samples` same-size draws from that marginal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::multinomial::log_multinomial_prob;
use super::sampler::{sample_null, NullDistribution};
use crate::error::{Error, Result};
use crate::norms::BinnedAttribute;
use crate::seed;

/// Lower quantile of the null reported next to its minimum.
pub const NULL_QUANTILE_LEVEL: f64 = 5e-5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAttributeCounts {
    pub cluster_id: usize,
    pub attribute: String,
    pub counts: Vec<u64>,
    pub m: u64,
}

impl ClusterAttributeCounts {
    pub fn new(cluster_id: usize, attribute: impl Into<String>, counts: Vec<u64>) -> Self {
        let m = counts.iter().sum();
        ClusterAttributeCounts {
            cluster_id,
            attribute: attribute.into(),
            counts,
            m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub cluster_id: usize,
    pub attribute: String,
    pub m: u64,
    pub observed_log_p: f64,
    pub null_min: f64,
    pub null_median: f64,
    pub sensitive: bool,
    pub low_annotation_flag: bool,
    /// Null quantile at [`NULL_QUANTILE_LEVEL`].
    pub null_quantile: f64,
}

impl SensitivityResult {
    /// Observed value lies below the whole null sample, before discounting.
    pub fn below_null(&self) -> bool {
        self.m > 0 && self.observed_log_p < self.null_min
    }

    pub fn no_annotations(&self) -> bool {
        self.m == 0
    }

    /// Below the null but discounted for having too few annotations.
    pub fn discounted(&self) -> bool {
        self.below_null() && self.low_annotation_flag
    }
}

pub fn sensitivity_test(
    counts: &ClusterAttributeCounts,
    binned: &BinnedAttribute,
    n_samples: usize,
    seed: u64,
    min_annotated: u64,
) -> Result<SensitivityResult> {
    sensitivity_test_with_null(counts, binned, n_samples, seed, min_annotated).map(|(r, _)| r)
}

/// As [`sensitivity_test`], also returning the null sample (absent when the
/// cluster has no annotations).
pub fn sensitivity_test_with_null(
    counts: &ClusterAttributeCounts,
    binned: &BinnedAttribute,
    n_samples: usize,
    seed: u64,
    min_annotated: u64,
) -> Result<(SensitivityResult, Option<NullDistribution>)> {
    if counts.counts.len() != binned.n_bins() {
        return Err(Error::InvalidArgument(format!(
            "cluster {} has {} bins, attribute {} has {}",
            counts.cluster_id,
            counts.counts.len(),
            binned.attribute,
            binned.n_bins()
        )));
    }
    let m: u64 = counts.counts.iter().sum();
    let low_annotation_flag = m < min_annotated;
    if m == 0 {
        return Ok((
            SensitivityResult {
                cluster_id: counts.cluster_id,
                attribute: counts.attribute.clone(),
                m,
                observed_log_p: 0.0,
                null_min: 0.0,
                null_median: 0.0,
                null_quantile: 0.0,
                sensitive: false,
                low_annotation_flag,
            },
            None,
        ));
    }
    let observed_log_p = log_multinomial_prob(&counts.counts, &binned.p_cat)?;
    let null = sample_null(m, &binned.p_cat, n_samples, seed)?;
    let null_min = null.min();
    Ok((
        SensitivityResult {
            cluster_id: counts.cluster_id,
            attribute: counts.attribute.clone(),
            m,
            observed_log_p,
            null_min,
            null_median: null.median(),
            null_quantile: null.quantile(NULL_QUANTILE_LEVEL),
            sensitive: observed_log_p < null_min && !low_annotation_flag,
            low_annotation_flag,
        },
        Some(null),
    ))
}

/// Test every cluster against one attribute, in parallel.
///
/// Cluster `c` uses the seed derived from `(master_seed, c, attribute)`.
/// When `keep_null` returns true for a result its null sample is retained.
pub fn test_all_clusters(
    assignments: &[u32],
    k: usize,
    binned: &BinnedAttribute,
    n_samples: usize,
    master_seed: u64,
    min_annotated: u64,
    keep_null: &(dyn Fn(&SensitivityResult) -> bool + Sync),
) -> Result<Vec<(SensitivityResult, Option<NullDistribution>)>> {
    let per_cluster = binned.cluster_counts(assignments, k)?;
    per_cluster
        .into_par_iter()
        .enumerate()
        .map(|(c, counts)| {
            let counts = ClusterAttributeCounts::new(c, binned.attribute.clone(), counts);
            let task = seed::task_seed(master_seed, c, &binned.attribute);
            let (result, null) =
                sensitivity_test_with_null(&counts, binned, n_samples, task, min_annotated)?;
            let null = null.filter(|_| keep_null(&result));
            Ok((result, null))
        })
        .collect()
}
