//! Multinomial null-hypothesis testing and information measures.

mod information;
mod multinomial;
mod sampler;
mod sensitivity;

pub use information::{
    entropy, joint_distribution, mutual_information, InformationSummary, JointDistribution,
};
pub use multinomial::{ln_factorial, log_multinomial_prob, MultinomialLogPmf, PROBABILITY_SUM_TOL};
pub use sampler::{sample_null, MultinomialSampler, NullDistribution};
pub use sensitivity::{
    sensitivity_test, sensitivity_test_with_null, test_all_clusters, ClusterAttributeCounts,
    SensitivityResult, NULL_QUANTILE_LEVEL,
};
