//! Result tables, summaries, cluster listings and plots.

mod plot;

pub use plot::{emit_cluster_scatter, emit_cumulative_plot, ScatterOrder, MAX_CDF_POINTS};

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cluster::{top_terms, ClusterModel};
use crate::corpus_io::{EmbeddingMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::stats::SensitivityResult;

/// Companion data file of a plot: same stem, `.csv` extension.
pub fn companion_path(plot: &Path) -> PathBuf {
    plot.with_extension("csv")
}

pub(crate) fn create(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

pub fn write_results(path: impl AsRef<Path>, results: &[SensitivityResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in results {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<SensitivityResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSummary {
    pub attribute: String,
    /// Clusters below the null after discounting.
    pub sensitive_count: usize,
    /// Clusters below the null but with too few annotations.
    pub discounted_count: usize,
    /// Every cluster below the null, discounted or not.
    pub cluster_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossAttributeHistogram {
    /// Index `n` holds the number of clusters sensitive to exactly `n` attributes.
    pub counts_by_num_attributes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub attributes: Vec<AttributeSummary>,
    pub histogram: CrossAttributeHistogram,
}

impl Summary {
    /// Clusters sensitive to at least one attribute.
    pub fn any_sensitive(&self) -> usize {
        self.histogram.counts_by_num_attributes.iter().skip(1).sum()
    }

    pub fn get(&self, attribute: &str) -> Option<&AttributeSummary> {
        self.attributes.iter().find(|a| a.attribute == attribute)
    }
}

/// Per-attribute sensitive counts and the histogram of clusters by how many
/// attributes they are sensitive to.
///
/// `results` must hold exactly one entry for every cluster in `0..k` and every
/// listed attribute.
pub fn summarize(
    results: &[SensitivityResult],
    attributes: &[String],
    k: usize,
) -> Result<Summary> {
    let known: BTreeSet<&str> = attributes.iter().map(String::as_str).collect();
    let mut seen: BTreeMap<(&str, usize), &SensitivityResult> = BTreeMap::new();
    for r in results {
        if !known.contains(r.attribute.as_str()) {
            return Err(Error::Incomplete(format!(
                "unexpected attribute {:?}",
                r.attribute
            )));
        }
        if r.cluster_id >= k {
            return Err(Error::Incomplete(format!(
                "cluster {} outside 0..{k}",
                r.cluster_id
            )));
        }
        if seen
            .insert((r.attribute.as_str(), r.cluster_id), r)
            .is_some()
        {
            return Err(Error::Incomplete(format!(
                "duplicate result for cluster {} / {}",
                r.cluster_id, r.attribute
            )));
        }
    }
    let mut per_cluster = vec![0usize; k];
    let mut summaries = Vec::with_capacity(attributes.len());
    for attr in attributes {
        let mut s = AttributeSummary {
            attribute: attr.clone(),
            sensitive_count: 0,
            discounted_count: 0,
            cluster_ids: Vec::new(),
        };
        for (c, slot) in per_cluster.iter_mut().enumerate() {
            let r = seen
                .get(&(attr.as_str(), c))
                .ok_or_else(|| Error::Incomplete(format!("no result for cluster {c} / {attr}")))?;
            if r.below_null() {
                s.cluster_ids.push(c);
                if r.low_annotation_flag {
                    s.discounted_count += 1;
                } else {
                    s.sensitive_count += 1;
                    *slot += 1;
                }
            }
        }
        summaries.push(s);
    }
    let mut hist = vec![0usize; attributes.len() + 1];
    for n in per_cluster {
        hist[n] += 1;
    }
    Ok(Summary {
        attributes: summaries,
        histogram: CrossAttributeHistogram {
            counts_by_num_attributes: hist,
        },
    })
}

/// Whether the sensitive-cluster counts follow the ordering
/// concreteness > aoa > valence > iconicity >= taboo.
///
/// `None` when any of those attributes is missing from the summary.
pub fn qualitative_ordering_holds(summary: &Summary) -> Option<bool> {
    use crate::norms::{AOA, CONCRETENESS, ICONICITY, TABOO, VALENCE};
    let n = |a: &str| summary.get(a).map(|s| s.sensitive_count);
    let (c, a, v, i, t) = (
        n(CONCRETENESS)?,
        n(AOA)?,
        n(VALENCE)?,
        n(ICONICITY)?,
        n(TABOO)?,
    );
    Some(c > a && a > v && v > i && i >= t)
}

pub fn write_summary(
    summary: &Summary,
    attributes_path: &Path,
    histogram_path: &Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        attribute: &'a str,
        sensitive_clusters: usize,
        discounted: usize,
        below_null_cluster_ids: String,
    }
    let mut w = csv_writer(attributes_path)?;
    for a in &summary.attributes {
        let ids: Vec<String> = a.cluster_ids.iter().map(usize::to_string).collect();
        w.serialize(Row {
            attribute: &a.attribute,
            sensitive_clusters: a.sensitive_count,
            discounted: a.discounted_count,
            below_null_cluster_ids: ids.join(" "),
        })
        .map_err(|e| Error::csv(attributes_path, e))?;
    }
    w.flush().map_err(|e| Error::io(attributes_path, e))?;

    let mut w = csv_writer(histogram_path)?;
    w.write_record(["attributes", "clusters"])
        .map_err(|e| Error::csv(histogram_path, e))?;
    for (n, count) in summary
        .histogram
        .counts_by_num_attributes
        .iter()
        .enumerate()
        .rev()
    {
        w.write_record([n.to_string(), count.to_string()])
            .map_err(|e| Error::csv(histogram_path, e))?;
    }
    w.flush().map_err(|e| Error::io(histogram_path, e))
}

/// One row per cluster: id, size and the `n_top` members nearest the centroid,
/// leading-space tokens shown with a `?` prefix.
pub fn emit_cluster_listing(
    model: &ClusterModel,
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
    n_top: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .flexible(false)
        .from_writer(create(path)?);
    let mut header = vec!["cluster_id".to_string(), "size".to_string()];
    header.extend((1..=n_top).map(|i| format!("term_{i}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for c in 0..model.k {
        let terms = top_terms(model, matrix, vocab, c, n_top)?;
        let mut row = vec![c.to_string(), model.sizes[c].to_string()];
        row.extend(terms.iter().map(|t| t.display()));
        row.resize(n_top + 2, String::new());
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write a small text file, creating parent directories.
pub fn write_text(path: &Path, body: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}
