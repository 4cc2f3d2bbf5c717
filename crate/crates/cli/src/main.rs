mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use lexprobe::pipeline::{self, ClusterSizeStats, TestOutcome};
use lexprobe::report::{qualitative_ordering_holds, Summary};

use config::RunArgs;

/// Cluster a static token-embedding space and test clusters for sensitivity
/// to lexical norms.
///
/// Set LEXPROBE_THREADS to bound the worker threads; results do not depend on it.
#[derive(Debug, Parser)]
#[command(name = "lexprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit k-means and write the model and cluster listing
    Cluster,
    /// Match norm lists to tokens and bin the values
    Annotate,
    /// Run every (cluster, attribute) test and write results and plots
    Test,
    /// Rebuild summaries and scatter plots from an existing results file
    Report,
    /// cluster, annotate and test in sequence
    Pipeline,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("LEXPROBE_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("LEXPROBE_THREADS={v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn print_summary(summary: &Summary) {
    for a in &summary.attributes {
        println!(
            "{:<14} sensitive {:>4}  discounted {:>4}",
            a.attribute, a.sensitive_count, a.discounted_count
        );
    }
    let hist = &summary.histogram.counts_by_num_attributes;
    for (n, count) in hist.iter().enumerate().rev() {
        println!("clusters sensitive to {n} attributes: {count}");
    }
    if let Some(holds) = qualitative_ordering_holds(summary) {
        println!("concreteness > aoa > valence > iconicity >= taboo: {holds}");
    }
}

fn print_test(outcome: &TestOutcome) {
    print_summary(&outcome.summary);
    for i in &outcome.information {
        println!(
            "{:<14} NMI {:.6}  I {:.6}",
            i.attribute, i.nmi, i.mutual_information
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = cli.run.into_config()?;
    match cli.command {
        Command::Cluster => {
            let model = pipeline::cmd_cluster(&cfg)?;
            let s = ClusterSizeStats::of(&model);
            println!(
                "k {}  iterations {}  wcss {}  largest {}  smallest {}  <=50 {}",
                model.k, model.iterations_run, model.wcss, s.largest, s.smallest, s.at_most_50
            );
        }
        Command::Annotate => {
            for s in pipeline::cmd_annotate(&cfg)? {
                println!(
                    "{:<14} {} words  {} assigned ({} case-sensitive, {} case-insensitive)  {} bins",
                    s.attribute, s.word_list_length, s.tokens_assigned, s.case_sensitive, s.case_insensitive, s.bins
                );
            }
        }
        Command::Test => print_test(&pipeline::cmd_test(&cfg)?),
        Command::Report => print_summary(&pipeline::cmd_report(&cfg)?),
        Command::Pipeline => print_test(&pipeline::cmd_pipeline(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
