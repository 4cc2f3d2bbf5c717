//! Multinomial log-probabilities.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Tolerance on `sum(p) == 1` for caller-supplied probability vectors.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

/// `ln(n!)` via the log-gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub(crate) fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty probability vector".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "probability {bad} outside [0, 1]"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// `ln P(C | p) = sum_i C_i ln p_i + ln m! - sum_i ln C_i!` in natural logs.
///
/// A positive count in a zero-probability bin has probability zero; that case
/// is returned as [`Error::ImpossibleCount`] rather than as `-inf`.
pub fn log_multinomial_prob(counts: &[u64], p_cat: &[f64]) -> Result<f64> {
    if counts.len() != p_cat.len() {
        return Err(Error::InvalidArgument(format!(
            "{} counts for {} categories",
            counts.len(),
            p_cat.len()
        )));
    }
    validate_probabilities(p_cat)?;
    let mut m = 0u64;
    let mut acc = 0.0;
    for (bin, (&c, &p)) in counts.iter().zip(p_cat).enumerate() {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::ImpossibleCount { bin });
        }
        acc += c as f64 * p.ln() - ln_factorial(c);
        m += c;
    }
    Ok(acc + ln_factorial(m))
}

/// Precomputed evaluator for repeated draws against one `p_cat`.
#[derive(Debug, Clone)]
pub struct MultinomialLogPmf {
    ln_p: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl MultinomialLogPmf {
    /// Evaluator valid for totals up to `max_m`.
    pub fn new(p_cat: &[f64], max_m: u64) -> Result<Self> {
        validate_probabilities(p_cat)?;
        let ln_fact = (0..=max_m).map(ln_factorial).collect();
        Ok(MultinomialLogPmf {
            ln_p: p_cat.iter().map(|p| p.ln()).collect(),
            ln_fact,
        })
    }

    pub fn bins(&self) -> usize {
        self.ln_p.len()
    }

    /// Log-probability of a count vector; `-inf` for impossible counts.
    ///
    /// Panics if the total exceeds the `max_m` given at construction.
    #[inline]
    pub fn eval(&self, counts: &[u64]) -> f64 {
        let mut m = 0usize;
        let mut acc = 0.0;
        for (&c, &lp) in counts.iter().zip(&self.ln_p) {
            if c > 0 {
                let c = c as usize;
                acc += c as f64 * lp - self.ln_fact[c];
                m += c;
            }
        }
        acc + self.ln_fact[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valence_p_cat() -> Vec<f64> {
        let c = [53u64, 576, 984, 1740, 3021, 1760, 587, 30];
        let total: u64 = c.iter().sum();
        c.iter().map(|&x| x as f64 / total as f64).collect()
    }

    #[test]
    fn cluster_172_golden_value() {
        let got = log_multinomial_prob(&[4, 117, 149, 52, 12, 6, 0, 0], &valence_p_cat()).unwrap();
        assert!((got - -354.667).abs() < 0.01, "{got}");
    }

    #[test]
    fn certain_event_is_zero() {
        assert_eq!(log_multinomial_prob(&[17], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn two_fair_coins() {
        // 2!/(1!1!) * 0.25 = 0.5
        let got = log_multinomial_prob(&[1, 1], &[0.5, 0.5]).unwrap();
        assert!((got - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn impossible_count_is_distinct() {
        assert!(matches!(
            log_multinomial_prob(&[1, 2], &[1.0, 0.0]),
            Err(Error::ImpossibleCount { bin: 1 })
        ));
        let pmf = MultinomialLogPmf::new(&[1.0, 0.0], 4).unwrap();
        assert_eq!(pmf.eval(&[1, 2]), f64::NEG_INFINITY);
        assert_eq!(pmf.eval(&[3, 0]), 0.0);
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(log_multinomial_prob(&[1], &[0.5, 0.5]).is_err());
        assert!(log_multinomial_prob(&[1, 1], &[0.5, 0.6]).is_err());
        assert!(log_multinomial_prob(&[], &[]).is_err());
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        let mut direct = 0.0f64;
        for n in 1..=400u64 {
            direct += (n as f64).ln();
            let lf = ln_factorial(n);
            assert!(
                (lf - direct).abs() <= 1e-12 * direct.max(1.0),
                "n={n}: {lf} vs {direct}"
            );
        }
    }

    #[test]
    fn evaluator_agrees_with_direct_formula() {
        let p = valence_p_cat();
        let pmf = MultinomialLogPmf::new(&p, 340).unwrap();
        let c = [4u64, 117, 149, 52, 12, 6, 0, 0];
        let direct = log_multinomial_prob(&c, &p).unwrap();
        assert!((pmf.eval(&c) - direct).abs() < 1e-9);
    }
}
