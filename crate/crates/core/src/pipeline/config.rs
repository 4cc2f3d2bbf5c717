use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::NormColumns;

/// Which clusters get a cumulative null plot in the `test` stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CdfPlots {
    None,
    #[default]
    Sensitive,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSource {
    pub path: PathBuf,
    #[serde(default = "default_word_col")]
    pub word_col: String,
    #[serde(default = "default_value_col")]
    pub value_col: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub skip_missing: bool,
}

fn default_word_col() -> String {
    "Word".into()
}
fn default_value_col() -> String {
    "Value".into()
}
fn default_delimiter() -> char {
    ','
}

impl NormSource {
    pub fn new(path: impl Into<PathBuf>, word_col: &str, value_col: &str) -> Self {
        NormSource {
            path: path.into(),
            word_col: word_col.into(),
            value_col: value_col.into(),
            delimiter: ',',
            skip_missing: false,
        }
    }

    pub fn columns(&self) -> NormColumns {
        NormColumns {
            word: self.word_col.clone(),
            value: self.value_col.clone(),
            delimiter: self.delimiter,
            skip_missing: self.skip_missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub vocab: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub out: PathBuf,
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub min_annotated: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Scale embeddings to unit length before clustering.
    pub normalize: bool,
    pub n_top: usize,
    pub cdf_plots: CdfPlots,
    /// Write every null sample per (cluster, attribute).
    pub dump_null: bool,
    pub attributes: BTreeMap<String, NormSource>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vocab: None,
            embeddings: None,
            out: PathBuf::from("lexprobe-out"),
            k: 200,
            seed: 0,
            n_samples: 100_000,
            min_annotated: 10,
            max_iter: 300,
            tol: 1e-4,
            normalize: false,
            n_top: 5,
            cdf_plots: CdfPlots::default(),
            dump_null: false,
            attributes: BTreeMap::new(),
        }
    }
}

fn require_file(what: &str, path: Option<&Path>) -> Result<PathBuf> {
    let path = path.ok_or_else(|| Error::InvalidArgument(format!("no {what} path configured")))?;
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "{what} file {} does not exist",
            path.display()
        )));
    }
    Ok(path.to_path_buf())
}

fn valid_attribute_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.')
}

impl RunConfig {
    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.keys().cloned().collect()
    }

    pub fn vocab_path(&self) -> Result<PathBuf> {
        require_file("vocabulary", self.vocab.as_deref())
    }

    pub fn embeddings_path(&self) -> Result<PathBuf> {
        require_file("embeddings", self.embeddings.as_deref())
    }

    pub fn validate_cluster(&self) -> Result<()> {
        self.vocab_path()?;
        self.embeddings_path()?;
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidArgument("tol must be non-negative".into()));
        }
        Ok(())
    }

    pub fn validate_annotate(&self) -> Result<()> {
        self.vocab_path()?;
        if self.attributes.is_empty() {
            return Err(Error::InvalidArgument("no attributes configured".into()));
        }
        for (name, src) in &self.attributes {
            if !valid_attribute_name(name) {
                return Err(Error::InvalidArgument(format!(
                    "invalid attribute name {name:?}"
                )));
            }
            require_file(&format!("{name} norms"), Some(&src.path))?;
        }
        Ok(())
    }

    pub fn validate_test(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.attributes.is_empty() {
            return Err(Error::InvalidArgument("no attributes configured".into()));
        }
        Ok(())
    }

    pub fn validate_all(&self) -> Result<()> {
        self.validate_cluster()?;
        self.validate_annotate()?;
        self.validate_test()
    }
}
