use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use lexprobe::pipeline::{CdfPlots, NormSource, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CdfChoice {
    None,
    Sensitive,
    All,
}

/// Flags shared by every subcommand. Any flag given overrides the config file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML run configuration; relative paths inside it resolve against its directory
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Vocabulary JSONL file
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Embedding matrix file
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Norm list as NAME=PATH; repeatable
    #[arg(long = "norm", value_name = "NAME=PATH", global = true)]
    pub norms: Vec<String>,
    /// Word column for norm lists given with --norm
    #[arg(long, global = true)]
    pub word_col: Option<String>,
    /// Value column for norm lists given with --norm
    #[arg(long, global = true)]
    pub value_col: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of clusters
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Null samples per (cluster, attribute) test
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Clusters with fewer annotated tokens are flagged and not counted
    #[arg(long, global = true)]
    pub min_annotated: Option<u64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Scale embeddings to unit length before clustering
    #[arg(long, global = true)]
    pub normalize: bool,
    /// Terms listed per cluster
    #[arg(long, global = true)]
    pub n_top: Option<usize>,
    /// Which clusters get a cumulative null plot
    #[arg(long, value_enum, global = true)]
    pub cdf_plots: Option<CdfChoice>,
    /// Write every null sample
    #[arg(long, global = true)]
    pub dump_null: bool,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

pub fn load_config_file(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let Some(p) = cfg.vocab.as_mut() {
        resolve(base, p);
    }
    if let Some(p) = cfg.embeddings.as_mut() {
        resolve(base, p);
    }
    resolve(base, &mut cfg.out);
    for src in cfg.attributes.values_mut() {
        resolve(base, &mut src.path);
    }
    Ok(cfg)
}

impl RunArgs {
    pub fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.vocab {
            cfg.vocab = Some(v);
        }
        if let Some(v) = self.embeddings {
            cfg.embeddings = Some(v);
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        let word = self.word_col.as_deref().unwrap_or("Word");
        let value = self.value_col.as_deref().unwrap_or("Value");
        for spec in &self.norms {
            let Some((name, path)) = spec.split_once('=') else {
                bail!("--norm expects NAME=PATH, got {spec:?}");
            };
            cfg.attributes
                .insert(name.to_string(), NormSource::new(path, word, value));
        }
        if self.norms.is_empty() && (self.word_col.is_some() || self.value_col.is_some()) {
            bail!("--word-col and --value-col apply only to norm lists given with --norm");
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.min_annotated {
            cfg.min_annotated = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if self.normalize {
            cfg.normalize = true;
        }
        if let Some(v) = self.n_top {
            cfg.n_top = v;
        }
        if let Some(v) = self.cdf_plots {
            cfg.cdf_plots = match v {
                CdfChoice::None => CdfPlots::None,
                CdfChoice::Sensitive => CdfPlots::Sensitive,
                CdfChoice::All => CdfPlots::All,
            };
        }
        if self.dump_null {
            cfg.dump_null = true;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(
            &p,
            "vocab = \"v.jsonl\"\nembeddings = \"/abs/e.bin\"\nk = 7\n[attributes.taboo]\npath = \"n/taboo.csv\"\nvalue_col = \"Mean\"\n",
        )
        .unwrap();
        let cfg = load_config_file(&p).unwrap();
        assert_eq!(cfg.vocab.unwrap(), dir.path().join("v.jsonl"));
        assert_eq!(cfg.embeddings.unwrap(), PathBuf::from("/abs/e.bin"));
        assert_eq!(cfg.out, dir.path().join("lexprobe-out"));
        assert_eq!(cfg.k, 7);
        let t = &cfg.attributes["taboo"];
        assert_eq!(t.path, dir.path().join("n/taboo.csv"));
        assert_eq!(
            (t.word_col.as_str(), t.value_col.as_str()),
            ("Word", "Mean")
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "clusters = 3\n").unwrap();
        assert!(load_config_file(&p).is_err());
    }

    #[test]
    fn flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "k = 7\nseed = 1\nn_samples = 10\n").unwrap();
        let args = RunArgs {
            config: Some(p),
            k: Some(3),
            samples: Some(99),
            norms: vec!["aoa=x.csv".into()],
            value_col: Some("Rating".into()),
            ..RunArgs::default()
        };
        let cfg = args.into_config().unwrap();
        assert_eq!((cfg.k, cfg.seed, cfg.n_samples), (3, 1, 99));
        assert_eq!(cfg.attributes["aoa"].value_col, "Rating");
    }

    #[test]
    fn malformed_norm_flag() {
        let args = RunArgs {
            norms: vec!["aoa".into()],
            ..RunArgs::default()
        };
        assert!(args.into_config().is_err());
    }
}
