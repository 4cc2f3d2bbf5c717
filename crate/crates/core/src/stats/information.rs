//! Entropies and normalized mutual information of the cluster x bin table.

use crate::error::{Error, Result};
use crate::norms::BinnedAttribute;

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    /// `p_joint[cluster][bin]`.
    pub p_joint: Vec<Vec<f64>>,
    pub p_clust: Vec<f64>,
    pub p_cat: Vec<f64>,
}

impl JointDistribution {
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let total: u64 = counts.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("joint table has no mass".into()));
        }
        let table = counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / total as f64).collect())
            .collect();
        Self::from_probabilities(table)
    }

    pub fn from_probabilities(p_joint: Vec<Vec<f64>>) -> Result<Self> {
        let bins = p_joint.first().map_or(0, Vec::len);
        if p_joint.is_empty() || bins == 0 || p_joint.iter().any(|r| r.len() != bins) {
            return Err(Error::InvalidArgument(
                "joint table must be a non-empty rectangle".into(),
            ));
        }
        if p_joint.iter().flatten().any(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::InvalidArgument("negative joint probability".into()));
        }
        let p_clust: Vec<f64> = p_joint.iter().map(|r| r.iter().sum()).collect();
        let p_cat: Vec<f64> = (0..bins)
            .map(|j| p_joint.iter().map(|r| r[j]).sum())
            .collect();
        let total: f64 = p_clust.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "joint table sums to {total}"
            )));
        }
        Ok(JointDistribution {
            p_joint,
            p_clust,
            p_cat,
        })
    }
}

/// Empirical joint distribution of (cluster, bin) over annotated tokens.
pub fn joint_distribution(
    assignments: &[u32],
    k: usize,
    binned: &BinnedAttribute,
) -> Result<JointDistribution> {
    JointDistribution::from_counts(&binned.cluster_counts(assignments, k)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationSummary {
    pub h_clust: f64,
    pub h_cat: f64,
    pub mutual_information: f64,
    /// `I / sqrt(H_clust * H_cat)`; zero when either entropy is zero.
    pub nmi: f64,
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
///
/// A point mass has entropy exactly zero even when its stored probability is
/// one ulp away from 1.
pub fn entropy(p: &[f64]) -> f64 {
    if p.iter().filter(|&&v| v > 0.0).count() <= 1 {
        return 0.0;
    }
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

pub fn mutual_information(joint: &JointDistribution) -> InformationSummary {
    let h_clust = entropy(&joint.p_clust);
    let h_cat = entropy(&joint.p_cat);
    let mut mi = 0.0;
    for (row, &pc) in joint.p_joint.iter().zip(&joint.p_clust) {
        for (&p, &pk) in row.iter().zip(&joint.p_cat) {
            if p > 0.0 {
                mi += p * (p / (pc * pk)).ln();
            }
        }
    }
    // rounding can leave a tiny negative for independent tables
    let mi = mi.max(0.0);
    let nmi = if h_clust > 0.0 && h_cat > 0.0 {
        (mi / (h_clust * h_cat).sqrt()).min(1.0)
    } else {
        0.0
    };
    InformationSummary {
        h_clust,
        h_cat,
        mutual_information: mi,
        nmi,
    }
}
