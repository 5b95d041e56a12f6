//! `glad`: command-line front end for graph-level anomaly detection.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use glad_core::features::DEFAULT_DEGREE_CAP;
use glad_core::graph::SplitTag;
use glad_core::grid::{read_pool, run_grid, write_pool, GridSpec};
use glad_core::metrics::{mean_std, roc_auc};
use glad_core::mixhop::MixhopBenchmark;
use glad_core::par::{self, Execution};
use glad_core::pipeline::{render_report, run_pipeline, FeatureChoice, PipelineConfig};
use glad_core::selection::{read_id_column, select, write_selection, Method};
use glad_core::seed::{self, Stage};
use glad_core::tu::{load_tu_dataset, write_tu_dataset};

const TRAIN_NAME: &str = "TRAIN";
const TEST_NAME: &str = "TEST";
const FLAGS_FILE: &str = "test_flags.csv";

#[derive(Parser)]
#[command(name = "glad", version, about = "Graph-level anomaly detection with GIN one-class models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train/test benchmark in TU format.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: usize,
        #[arg(long)]
        n_test: usize,
        #[arg(long)]
        anomaly_rate: f64,
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        ba_m: usize,
        #[arg(long)]
        labels: usize,
        #[arg(long)]
        homophily_in: f64,
        #[arg(long)]
        homophily_out: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Train the candidate pool on DATA/TRAIN_* and score DATA/TEST_*.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pick a model (or ensemble) from a trained pool.
    Select {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC-AUC of a score file against a `graph_id,flag` file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        flags: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a TOML config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: glad_core::Error| e.to_string())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            out,
            n_train,
            n_test,
            anomaly_rate,
            nodes,
            ba_m,
            labels,
            homophily_in,
            homophily_out,
            seed,
        } => {
            let bench = MixhopBenchmark {
                n_train,
                n_test,
                anomaly_rate,
                nodes,
                ba_m,
                labels,
                homophily_in,
                homophily_out,
            };
            generate(&bench, seed, &out)
        }
        Command::Train {
            data,
            grid,
            out,
            workers,
            seed,
        } => train(&data, &grid, &out, workers, seed),
        Command::Select { pool, method, out } => {
            let pool = read_pool(&pool)?;
            let result = select(&pool, method)?;
            write_selection(&result, &pool, &out)?;
            println!(
                "{method}: selected model {} of {}",
                pool.model_ids[result.selected_model],
                pool.num_models()
            );
            Ok(())
        }
        Command::Evaluate { scores, flags, out } => evaluate(&scores, &flags, &out),
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::load(&config)?;
            let outcome = run_pipeline(&cfg)?;
            print!("{}", render_report(&outcome));
            Ok(())
        }
    }
}

fn generate(bench: &MixhopBenchmark, seed: u64, out: &Path) -> Result<()> {
    let (train, test) = bench.generate(seed::stage_seed(seed, Stage::Generate))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_tu_dataset(&train, out, TRAIN_NAME)?;
    write_tu_dataset(&test, out, TEST_NAME)?;
    let mut flags = String::from("graph_id,flag\n");
    for (g, f) in test.graphs.iter().zip(test.anomaly_flags.as_deref().unwrap_or_default()) {
        let _ = writeln!(flags, "{},{}", g.graph_id, u8::from(*f));
    }
    let path = out.join(FLAGS_FILE);
    fs::write(&path, flags).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote {} training and {} test graphs to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

fn train(data: &Path, grid: &Path, out: &Path, workers: Option<usize>, seed: u64) -> Result<()> {
    let spec = GridSpec::load(grid)?;
    let mut train = load_tu_dataset(data, TRAIN_NAME)?;
    let mut test = load_tu_dataset(data, TEST_NAME)?;
    train.split_tag = SplitTag::Train;
    test.split_tag = SplitTag::Test;
    let kind = FeatureChoice::Auto.resolve(&train, &test);
    let (train, test) = glad_core::features::derive_features_pair(&train, &test, kind, DEFAULT_DEGREE_CAP)?;
    train.validate()?;
    let base = seed::stage_seed(seed, Stage::Training);
    let pool = par::with_workers(workers, || run_grid(&train, &test, &spec, base, Execution::Parallel))?;
    write_pool(&pool, out)?;
    println!(
        "trained {} candidates ({} dropped) on {} graphs; scored {} test graphs",
        pool.num_models(),
        pool.dropped,
        train.len(),
        pool.num_graphs()
    );
    Ok(())
}

fn evaluate(scores: &Path, flags: &Path, out: &Path) -> Result<()> {
    let flag_map: HashMap<usize, bool> = read_id_column(flags)?
        .into_iter()
        .map(|(g, f)| (g, f != 0.0))
        .collect();
    let header = fs::read_to_string(scores)
        .with_context(|| format!("reading {}", scores.display()))?
        .lines()
        .next()
        .unwrap_or_default()
        .to_string();
    let lookup = |ids: &[usize]| -> Result<Vec<bool>> {
        ids.iter()
            .map(|g| flag_map.get(g).copied().with_context(|| format!("no flag for graph {g}")))
            .collect()
    };
    let mut report = String::new();
    if header.starts_with("model_id") {
        let pool = read_pool(scores.parent().unwrap_or(Path::new(".")))?;
        let labels = lookup(&pool.graph_ids)?;
        let aucs = pool
            .score_matrix
            .rows()
            .into_iter()
            .map(|r| roc_auc(&r.to_vec(), &labels))
            .collect::<glad_core::Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&aucs);
        let _ = writeln!(report, "models = {}", aucs.len());
        let _ = writeln!(report, "pool_mean_auc = {mean:.6}");
        let _ = writeln!(report, "pool_std_auc = {std:.6}");
        for (id, auc) in pool.model_ids.iter().zip(&aucs) {
            let _ = writeln!(report, "model_{id}.auc = {auc:.6}");
        }
    } else if header.starts_with("graph_id") {
        let rows = read_id_column(scores)?;
        let ids: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let auc = roc_auc(&s, &lookup(&ids)?)?;
        let _ = writeln!(report, "graphs = {}", ids.len());
        let _ = writeln!(report, "auc = {auc:.6}");
    } else {
        bail!("{}: unrecognised score file header `{header}`", scores.display());
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, &report).with_context(|| format!("writing {}", out.display()))?;
    print!("{report}");
    Ok(())
}
