//! Clustering of a transformer's static token-embedding space and
//! multinomial tests of whether clusters are sensitive to lexical attributes
//! such as valence, concreteness, iconicity, taboo and age of acquisition.

pub mod cluster;
pub mod corpus_io;
pub mod error;
pub mod norms;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod stats;

pub use cluster::{kmeans_fit, ClusterModel, KMeansParams};
pub use corpus_io::{EmbeddingMatrix, TokenRecord, Vocabulary};
pub use error::{Error, Result};
pub use norms::{AttributeAssignment, BinnedAttribute, NormColumns, NormList};
pub use pipeline::RunConfig;
pub use stats::{NullDistribution, SensitivityResult};
