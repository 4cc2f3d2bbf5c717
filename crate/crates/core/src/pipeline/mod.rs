//! The end-to-end run: `cluster`, then `annotate`, then `test` (which also
//! writes the reports). Every stage reads its inputs from the configuration
//! or from the output directory and records itself in the run manifest.

mod config;
mod manifest;

pub use config::{CdfPlots, NormSource, RunConfig};
pub use manifest::{sha256_file, Manifest, MANIFEST_FILE};

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cluster::{kmeans_fit, load_model, save_model, ClusterModel, KMeansParams};
use crate::corpus_io::{check_alignment, load_embeddings, load_vocabulary};
use crate::error::{Error, Result};
use crate::norms::{bin_values, load_norm_list, match_tokens, BinnedAttribute, MatchKind};
use crate::report::{
    self, csv_writer, emit_cluster_listing, emit_cluster_scatter, emit_cumulative_plot,
    ScatterOrder, Summary,
};
use crate::stats::{
    joint_distribution, mutual_information, test_all_clusters, InformationSummary,
    SensitivityResult,
};

pub const MODEL_FILE: &str = "model.bin";
pub const LISTING_FILE: &str = "clusters.csv";
pub const ANNOTATION_DIR: &str = "annotations";
pub const ANNOTATION_SUMMARY_FILE: &str = "annotation_summary.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const INFORMATION_FILE: &str = "information.csv";
pub const SUMMARY_ATTRIBUTES_FILE: &str = "summary_attributes.csv";
pub const SUMMARY_HISTOGRAM_FILE: &str = "summary_histogram.csv";
pub const PLOTS_DIR: &str = "plots";
pub const NULLS_DIR: &str = "nulls";

/// Null samples below this size get a warning.
const SMALL_NULL: usize = 1000;

pub fn annotation_path(out: &Path, attribute: &str) -> PathBuf {
    out.join(ANNOTATION_DIR)
        .join(format!("{attribute}.assigned.csv"))
}

pub fn scatter_path(out: &Path, attribute: &str, order: ScatterOrder) -> PathBuf {
    let suffix = match order {
        ScatterOrder::ByIndex => "by_index",
        ScatterOrder::BySize => "by_size",
    };
    out.join(PLOTS_DIR)
        .join(format!("{attribute}_{suffix}.svg"))
}

pub fn cdf_path(out: &Path, attribute: &str, cluster_id: usize) -> PathBuf {
    out.join(PLOTS_DIR)
        .join("cdf")
        .join(format!("{attribute}_cluster_{cluster_id}.svg"))
}

/// Size statistics of a fitted partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterSizeStats {
    pub largest: usize,
    pub smallest: usize,
    pub at_most_50: usize,
    pub at_most_10: usize,
    pub empty: usize,
}

impl ClusterSizeStats {
    pub fn of(model: &ClusterModel) -> Self {
        ClusterSizeStats {
            largest: model.sizes.iter().copied().max().unwrap_or(0),
            smallest: model.sizes.iter().copied().min().unwrap_or(0),
            at_most_50: model.sizes.iter().filter(|&&s| s <= 50).count(),
            at_most_10: model.sizes.iter().filter(|&&s| s <= 10).count(),
            empty: model.sizes.iter().filter(|&&s| s == 0).count(),
        }
    }
}

pub fn cmd_cluster(cfg: &RunConfig) -> Result<ClusterModel> {
    cfg.validate_cluster()?;
    let vocab_path = cfg.vocab_path()?;
    let emb_path = cfg.embeddings_path()?;
    let vocab = load_vocabulary(&vocab_path)?;
    let mut matrix = load_embeddings(&emb_path)?;
    check_alignment(&vocab, &matrix)?;
    if cfg.normalize {
        matrix = matrix.l2_normalized();
    }
    info!(
        "clustering {} x {} embeddings into {} clusters",
        matrix.rows(),
        matrix.dims(),
        cfg.k
    );
    let params = KMeansParams {
        k: cfg.k,
        seed: cfg.seed,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    };
    let model = kmeans_fit(&matrix, &params)?;
    save_model(&model, cfg.out.join(MODEL_FILE))?;
    emit_cluster_listing(
        &model,
        &matrix,
        &vocab,
        cfg.n_top,
        cfg.out.join(LISTING_FILE),
    )?;

    let sizes = ClusterSizeStats::of(&model);
    info!(
        "k-means: {} iterations, wcss {}, largest {}, smallest {}, {} clusters <= 50",
        model.iterations_run, model.wcss, sizes.largest, sizes.smallest, sizes.at_most_50
    );
    Manifest::record_stage(
        cfg,
        "cluster",
        &[&vocab_path, &emb_path],
        json!({
            "rows": matrix.rows(),
            "dims": matrix.dims(),
            "k": model.k,
            "iterations_run": model.iterations_run,
            "wcss": model.wcss,
            "sizes": sizes,
        }),
    )?;
    Ok(model)
}

/// Match statistics of one attribute, shaped like a row of the annotation summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub attribute: String,
    pub word_list_length: usize,
    pub tokens_assigned: usize,
    pub case_sensitive: usize,
    pub case_insensitive: usize,
    pub unmatched: usize,
    pub collisions: usize,
    pub bins: usize,
}

#[derive(Serialize, Deserialize)]
struct AssignedRow {
    token_id: u32,
    token: String,
    word: String,
    value: f64,
    bin: i64,
    #[serde(rename = "match")]
    kind: MatchKind,
}

pub fn cmd_annotate(cfg: &RunConfig) -> Result<Vec<AnnotationStats>> {
    cfg.validate_annotate()?;
    let vocab_path = cfg.vocab_path()?;
    let vocab = load_vocabulary(&vocab_path)?;
    let dir = cfg.out.join(ANNOTATION_DIR);
    let mut stats = Vec::new();
    let mut inputs: Vec<PathBuf> = vec![vocab_path];
    for (name, src) in &cfg.attributes {
        let norms = load_norm_list(&src.path, name, &src.columns())?;
        inputs.push(src.path.clone());
        let assignment = match_tokens(&vocab, &norms);
        let binned = bin_values(&assignment);
        if assignment.is_empty() {
            warn!(
                "{name}: no tokens matched ({} norm words)",
                norms.declared_length
            );
        }

        let path = annotation_path(&cfg.out, name);
        let mut w = csv_writer(&path)?;
        for (&token_id, a) in &assignment.assigned {
            w.serialize(AssignedRow {
                token_id,
                token: vocab.tokens[token_id as usize].display(),
                word: a.word.clone(),
                value: a.value,
                bin: a.value.floor() as i64,
                kind: a.kind,
            })
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(format!("{name}.bins.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["bin", "count", "p_cat"])
            .map_err(|e| Error::csv(&path, e))?;
        for ((label, count), p) in binned
            .bin_labels
            .iter()
            .zip(&binned.counts)
            .zip(&binned.p_cat)
        {
            w.write_record([label.to_string(), count.to_string(), p.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(format!("{name}.unmatched.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["word", "value"])
            .map_err(|e| Error::csv(&path, e))?;
        for (word, value) in &assignment.unmatched {
            w.write_record([word.clone(), value.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(format!("{name}.collisions.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["word", "value", "token_id"])
            .map_err(|e| Error::csv(&path, e))?;
        for (word, value, token) in &assignment.collisions {
            w.write_record([word.clone(), value.to_string(), token.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        info!(
            "{name}: {} of {} words assigned ({} case-sensitive, {} case-insensitive), {} bins",
            assignment.len(),
            norms.declared_length,
            assignment.case_sensitive_count,
            assignment.case_insensitive_count,
            binned.n_bins()
        );
        stats.push(AnnotationStats {
            attribute: name.clone(),
            word_list_length: norms.declared_length,
            tokens_assigned: assignment.len(),
            case_sensitive: assignment.case_sensitive_count,
            case_insensitive: assignment.case_insensitive_count,
            unmatched: assignment.unmatched.len(),
            collisions: assignment.collisions.len(),
            bins: binned.n_bins(),
        });
    }

    let path = cfg.out.join(ANNOTATION_SUMMARY_FILE);
    let mut w = csv_writer(&path)?;
    for s in &stats {
        w.serialize(s).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    Manifest::record_stage(cfg, "annotate", &input_refs, json!({ "attributes": stats }))?;
    Ok(stats)
}

/// Reload an attribute's token values written by `annotate` and rebin them.
pub fn read_annotation(out: &Path, attribute: &str) -> Result<BinnedAttribute> {
    let path = annotation_path(out, attribute);
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "missing annotations for {attribute} ({}); run `annotate` first",
            path.display()
        )));
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    let mut values = Vec::new();
    for row in r.deserialize::<AssignedRow>() {
        let row = row.map_err(|e| Error::csv(&path, e))?;
        values.push((row.token_id, row.value));
    }
    Ok(BinnedAttribute::from_values(attribute, values))
}

fn load_fitted_model(cfg: &RunConfig) -> Result<ClusterModel> {
    let path = cfg.out.join(MODEL_FILE);
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "missing model {}; run `cluster` first",
            path.display()
        )));
    }
    load_model(&path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeInformation {
    pub attribute: String,
    pub h_clust: f64,
    pub h_cat: f64,
    pub mutual_information: f64,
    pub nmi: f64,
}

impl AttributeInformation {
    fn new(attribute: &str, info: InformationSummary) -> Self {
        AttributeInformation {
            attribute: attribute.to_string(),
            h_clust: info.h_clust,
            h_cat: info.h_cat,
            mutual_information: info.mutual_information,
            nmi: info.nmi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub results: Vec<SensitivityResult>,
    pub summary: Summary,
    pub information: Vec<AttributeInformation>,
    pub warnings: Vec<String>,
}

pub fn cmd_test(cfg: &RunConfig) -> Result<TestOutcome> {
    cfg.validate_test()?;
    let model = load_fitted_model(cfg)?;
    let attributes = cfg.attribute_names();
    let binned: Vec<BinnedAttribute> = attributes
        .iter()
        .map(|a| read_annotation(&cfg.out, a))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    if cfg.n_samples < SMALL_NULL {
        let msg = format!(
            "only {} null samples per test; verdicts compare against a very small null",
            cfg.n_samples
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let keep_all = cfg.dump_null || cfg.cdf_plots == CdfPlots::All;
    let keep_sensitive = cfg.cdf_plots == CdfPlots::Sensitive;
    let keep = move |r: &SensitivityResult| keep_all || (keep_sensitive && r.below_null());

    let mut results = Vec::with_capacity(attributes.len() * model.k);
    let mut information = Vec::new();
    for b in &binned {
        if b.n_bins() == 0 {
            let msg = format!("{}: no annotated tokens", b.attribute);
            warn!("{msg}");
            warnings.push(msg);
        } else {
            let joint = joint_distribution(&model.assignments, model.k, b)?;
            information.push(AttributeInformation::new(
                &b.attribute,
                mutual_information(&joint),
            ));
        }
        info!("{}: testing {} clusters", b.attribute, model.k);
        let tested = test_all_clusters(
            &model.assignments,
            model.k,
            b,
            cfg.n_samples,
            cfg.seed,
            cfg.min_annotated,
            &keep,
        )?;
        for (r, null) in tested {
            if let Some(null) = null {
                if cfg.cdf_plots == CdfPlots::All
                    || (cfg.cdf_plots == CdfPlots::Sensitive && r.below_null())
                {
                    emit_cumulative_plot(
                        &null,
                        r.observed_log_p,
                        cdf_path(&cfg.out, &r.attribute, r.cluster_id),
                    )?;
                }
                if cfg.dump_null {
                    let path = cfg
                        .out
                        .join(NULLS_DIR)
                        .join(format!("{}_cluster_{}.csv", r.attribute, r.cluster_id));
                    let mut w = csv_writer(&path)?;
                    w.write_record(["log_p"])
                        .map_err(|e| Error::csv(&path, e))?;
                    for v in &null.log_p_samples {
                        w.write_record([v.to_string()])
                            .map_err(|e| Error::csv(&path, e))?;
                    }
                    w.flush().map_err(|e| Error::io(&path, e))?;
                }
            }
            results.push(r);
        }
    }

    report::write_results(cfg.out.join(RESULTS_FILE), &results)?;
    let path = cfg.out.join(INFORMATION_FILE);
    let mut w = csv_writer(&path)?;
    for row in &information {
        w.serialize(row).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let summary = write_reports(cfg, &model, &results)?;
    for a in &summary.attributes {
        info!(
            "{}: {} sensitive clusters ({} discounted)",
            a.attribute, a.sensitive_count, a.discounted_count
        );
    }
    Manifest::record_stage(
        cfg,
        "test",
        &[],
        json!({
            "n_samples": cfg.n_samples,
            "min_annotated": cfg.min_annotated,
            "sensitive": summary
                .attributes
                .iter()
                .map(|a| (a.attribute.clone(), a.sensitive_count))
                .collect::<std::collections::BTreeMap<_, _>>(),
            "histogram": summary.histogram.counts_by_num_attributes,
            "information": information,
            "warnings": warnings,
        }),
    )?;
    Ok(TestOutcome {
        results,
        summary,
        information,
        warnings,
    })
}

fn write_reports(
    cfg: &RunConfig,
    model: &ClusterModel,
    results: &[SensitivityResult],
) -> Result<Summary> {
    let attributes = cfg.attribute_names();
    let summary = report::summarize(results, &attributes, model.k)?;
    report::write_summary(
        &summary,
        &cfg.out.join(SUMMARY_ATTRIBUTES_FILE),
        &cfg.out.join(SUMMARY_HISTOGRAM_FILE),
    )?;
    for attr in &attributes {
        let subset: Vec<SensitivityResult> = results
            .iter()
            .filter(|r| &r.attribute == attr)
            .cloned()
            .collect();
        for order in [ScatterOrder::ByIndex, ScatterOrder::BySize] {
            emit_cluster_scatter(
                &subset,
                &model.sizes,
                order,
                scatter_path(&cfg.out, attr, order),
            )?;
        }
    }
    Ok(summary)
}

/// Rebuild summaries and scatter plots from an existing results file.
pub fn cmd_report(cfg: &RunConfig) -> Result<Summary> {
    let model = load_fitted_model(cfg)?;
    let path = cfg.out.join(RESULTS_FILE);
    if !path.is_file() {
        return Err(Error::InvalidArgument(format!(
            "missing {}; run `test` first",
            path.display()
        )));
    }
    let results = report::read_results(&path)?;
    write_reports(cfg, &model, &results)
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<TestOutcome> {
    cfg.validate_all()?;
    cmd_cluster(cfg)?;
    cmd_annotate(cfg)?;
    cmd_test(cfg)
}
