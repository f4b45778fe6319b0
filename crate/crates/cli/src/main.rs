use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pfm_core::clustering::{confusion_matrix, misclustering_rate, write_clustering_csv, write_confusion_csv, KmeansOptions};
use pfm_core::config::write_matrix_csv;
use pfm_core::harness::{
    analyze_model, cluster_graph, evaluate_bound, load_model_config, reproduce_sec42, run_experiment,
    ComparisonRow, ExperimentConfig, RunOptions, SolverSettings,
};
use pfm_core::sampling::{read_edge_list, sample_adjacency, write_edge_list};
use pfm_core::spectral::write_spectrum_csv;
use pfm_core::theory::TheoryConstants;
use pfm_core::Execution;
use serde_json::json;

#[derive(Parser)]
#[command(name = "pfm", version, about = "Preference frame model experiments")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Worker thread limit.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ConfigArg {
    /// Model or experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model and write its summary (and, with --format csv, S).
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one graph from a model.
    Sample {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral clustering of an edge list.
    Cluster {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Model config supplying the true partition for scoring.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Structural checks on the expected model.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assumptions and misclustering bound for a model.
    Bound {
        #[command(flatten)]
        config: ConfigArg,
        /// Sampled graph providing the observed minimum degree.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated end-to-end experiment.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cluster the expected embedding instead of sampled graphs.
        #[arg(long)]
        expected_model: bool,
    },
    /// Built-in five-community experiment with its comparison table.
    #[command(name = "reproduce-sec42")]
    ReproduceSec42 {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the wider weight distribution.
        #[arg(long)]
        variant: bool,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn print_table(rows: &[ComparisonRow], format: Format) -> Result<()> {
    match format {
        Format::Json => print_json(&rows),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["quantity", "published", "observed", "verdict"])?;
            for r in rows {
                w.write_record([
                    r.quantity.as_str(),
                    r.published.as_str(),
                    &r.observed.to_string(),
                    r.verdict.as_deref().unwrap_or(""),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run_opts = RunOptions {
        execution: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        jobs: cli.jobs,
    };
    let solver = SolverSettings::default();

    match cli.command {
        Command::Generate { config, out } => {
            let model = load_model_config(&config.config)?.build()?;
            std::fs::create_dir_all(&out)?;
            if cli.format == Format::Csv {
                write_matrix_csv(&model, &out.join("S.csv"))?;
            }
            let analysis = analyze_model(model, &solver)?;
            write_spectrum_csv(&analysis.summary.expected_eigenvalues, &out.join("spectrum.csv"))?;
            write_json(&out.join("model.json"), &analysis.summary)?;
            print_json(&json!({
                "n": analysis.summary.n,
                "k": analysis.summary.k,
                "d_min": analysis.summary.d_min,
                "model_hash": analysis.summary.model_hash,
            }))?;
        }
        Command::Sample { config, seed, out } => {
            let model = load_model_config(&config.config)?.build()?;
            let graph = sample_adjacency(&model, seed);
            write_edge_list(&graph, &out)?;
            print_json(&json!({
                "n": graph.n(),
                "edges": graph.edge_count(),
                "d_hat_min": graph.d_hat_min,
                "seed": seed,
                "model_hash": graph.model_hash,
            }))?;
        }
        Command::Cluster {
            graph,
            k,
            seed,
            config,
            restarts,
            out,
        } => {
            let graph = read_edge_list(&graph, None)?;
            let opts = KmeansOptions {
                restarts,
                seed,
                execution: run_opts.execution,
                ..KmeansOptions::default()
            };
            let (emb, clustering) = cluster_graph(&graph, k, &opts, &solver)?;
            std::fs::create_dir_all(&out)?;
            write_clustering_csv(&clustering.labels, &out.join("clustering.csv"))?;
            write_spectrum_csv(&emb.eigenvalues, &out.join("spectrum.csv"))?;
            let mut summary = json!({
                "n": graph.n(),
                "k": k,
                "objective": clustering.objective,
                "eigenvalues": emb.eigenvalues,
                "sigma_hat": emb.eigengap_sigma,
            });
            if let Some(path) = config {
                let model = load_model_config(&path)?.build()?;
                if model.n() != graph.n() {
                    bail!("graph has {} nodes, model has {}", graph.n(), model.n());
                }
                let confusion = confusion_matrix(&clustering.labels, &model.partition)?;
                write_confusion_csv(&confusion, &out.join("confusion.csv"))?;
                summary["p_err"] = json!(misclustering_rate(&clustering.labels, &model.partition)?);
            }
            print_json(&summary)?;
        }
        Command::Verify { config, out } => {
            let model = load_model_config(&config.config)?.build()?;
            let analysis = analyze_model(model, &solver)?;
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                write_json(&out.join("verify.json"), &analysis.summary)?;
            }
            print_json(&analysis.summary)?;
        }
        Command::Bound { config, graph, out } => {
            let text = std::fs::read_to_string(&config.config)?;
            let (constants, variant) = match ExperimentConfig::from_json(&text) {
                Ok(exp) => (exp.constants, exp.bound_variant),
                Err(_) => (TheoryConstants::default(), None),
            };
            let model = load_model_config(&config.config)?.build()?;
            let d_hat_min = match &graph {
                Some(path) => Some(read_edge_list(path, Some(model.n()))?.d_hat_min),
                None => None,
            };
            let analysis = analyze_model(model, &solver)?;
            let eval = evaluate_bound(&analysis, &constants, variant, d_hat_min, None)?;
            if let Some(out) = out {
                std::fs::create_dir_all(&out)?;
                write_json(&out.join("bound.json"), &eval)?;
            }
            print_json(&eval)?;
        }
        Command::Run {
            config,
            seed,
            replicates,
            out,
            expected_model,
        } => {
            let mut exp = ExperimentConfig::load(&config.config)?;
            if let Some(seed) = seed {
                exp.seed = seed;
            }
            if let Some(r) = replicates {
                exp.replicates = r;
            }
            if out.is_some() {
                exp.out_dir = out;
            }
            exp.expected_model |= expected_model;
            let result = run_experiment(&exp, run_opts)?;
            match cli.format {
                Format::Json => print_json(&result.aggregate)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    w.write_record(["replicate", "seed", "p_err", "norm_diff", "d_hat_min"])?;
                    for r in &result.replicates {
                        w.write_record([
                            r.index.to_string(),
                            r.seed.to_string(),
                            r.p_err.to_string(),
                            r.norm_diff.to_string(),
                            r.d_hat_min.to_string(),
                        ])?;
                    }
                    w.flush()?;
                }
            }
        }
        Command::ReproduceSec42 {
            seed,
            replicates,
            out,
            variant,
        } => {
            let (_, table) = reproduce_sec42(seed, replicates, variant, out.as_deref(), run_opts)?;
            print_table(&table, cli.format)?;
        }
    }
    Ok(())
}
