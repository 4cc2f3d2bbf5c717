//! Multinomial draws by sequential conditional binomials, and Monte Carlo
//! null distributions of the multinomial log-probability.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::multinomial::{validate_probabilities, MultinomialLogPmf};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Samples per independently seeded block.
const BLOCK: usize = 4096;

/// Draws `Multinomial(m, p)` as `X_i ~ Bin(m - sum_{j<i} X_j, p_i / sum_{j>=i} p_j)`.
///
/// Cost per draw is one binomial variate per bin, independent of `m`.
#[derive(Debug, Clone)]
pub struct MultinomialSampler {
    conditional: Vec<f64>,
}

impl MultinomialSampler {
    pub fn new(p_cat: &[f64]) -> Result<Self> {
        validate_probabilities(p_cat)?;
        let mut tail = vec![0.0f64; p_cat.len() + 1];
        for i in (0..p_cat.len()).rev() {
            tail[i] = tail[i + 1] + p_cat[i];
        }
        let conditional = p_cat
            .iter()
            .zip(&tail)
            .map(|(&p, &rest)| if rest > 0.0 { (p / rest).min(1.0) } else { 0.0 })
            .collect();
        Ok(MultinomialSampler { conditional })
    }

    pub fn bins(&self) -> usize {
        self.conditional.len()
    }

    pub fn sample_into(&self, rng: &mut Rng, m: u64, out: &mut [u64]) {
        debug_assert_eq!(out.len(), self.conditional.len());
        let last = self.conditional.len() - 1;
        let mut remaining = m;
        for (i, slot) in out.iter_mut().enumerate() {
            let x = if remaining == 0 {
                0
            } else if i == last {
                remaining
            } else {
                let q = self.conditional[i];
                if q <= 0.0 {
                    0
                } else if q >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, q)
                        .expect("probability in (0, 1)")
                        .sample(rng)
                }
            };
            *slot = x;
            remaining -= x;
        }
    }

    pub fn sample(&self, rng: &mut Rng, m: u64) -> Vec<u64> {
        let mut out = vec![0; self.bins()];
        self.sample_into(rng, m, &mut out);
        out
    }
}

/// Sorted log-probabilities of count vectors drawn under the null.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    pub n_samples: usize,
    pub seed: u64,
    /// Ascending.
    pub log_p_samples: Vec<f64>,
}

impl NullDistribution {
    pub fn min(&self) -> f64 {
        self.log_p_samples[0]
    }

    pub fn max(&self) -> f64 {
        self.log_p_samples[self.n_samples - 1]
    }

    /// Linearly interpolated quantile (type 7).
    pub fn quantile(&self, q: f64) -> f64 {
        let s = &self.log_p_samples;
        let h = (s.len() - 1) as f64 * q.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Fraction of samples at or below `x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        let below = self.log_p_samples.partition_point(|&v| v <= x);
        below as f64 / self.n_samples as f64
    }
}

/// Draw `n_samples` count vectors of size `m` from `Multinomial(m, p_cat)` and
/// return their sorted log-probabilities.
///
/// Samples are generated in fixed blocks, each with its own stream derived
/// from `seed`, so the result does not depend on the thread count.
pub fn sample_null(m: u64, p_cat: &[f64], n_samples: usize, seed: u64) -> Result<NullDistribution> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let sampler = MultinomialSampler::new(p_cat)?;
    let pmf = MultinomialLogPmf::new(p_cat, m)?;
    let blocks = n_samples.div_ceil(BLOCK);
    let mut samples: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let len = BLOCK.min(n_samples - b * BLOCK);
            let mut rng = seed::rng(seed::mix(seed, b as u64));
            let mut counts = vec![0u64; sampler.bins()];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                sampler.sample_into(&mut rng, m, &mut counts);
                out.push(pmf.eval(&counts));
            }
            out
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(NullDistribution {
        n_samples,
        seed,
        log_p_samples: samples,
    })
}
