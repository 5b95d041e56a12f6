//! End-to-end orchestration: dataset, candidate sweep, selection, and
//! evaluation, driven by a TOML configuration.
//!
//! Every stage draws its randomness from `seed::stage_seed(master, stage)`,
//! so the whole run is a function of the configuration and the master seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::features::{derive_features_pair, DEFAULT_DEGREE_CAP};
use crate::graph::{FeatureKind, GraphDatabase};
use crate::grid::{run_grid, write_pool, CandidatePool, GridSpec};
use crate::metrics::{mean_std, roc_auc, wilcoxon_one_sided, WILCOXON_MIN_N};
use crate::mixhop::MixhopBenchmark;
use crate::par::{self, Execution};
use crate::selection::{select, write_selection, Method, SelectionResult};
use crate::seed::{self, Stage};
use crate::split::make_split;
use crate::tu::load_tu_dataset;

pub const REPORT_FILE: &str = "report.txt";
pub const SELECTED_FILE: &str = "selected.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChoice {
    /// Node labels when every graph has them, otherwise capped degrees.
    #[default]
    Auto,
    OneHotLabel,
    Attributes,
    OneHotDegree,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Tu {
        directory: PathBuf,
        name: String,
        inlier_class: i64,
        #[serde(default = "default_rate")]
        anomaly_rate: f64,
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
    },
    Generator {
        #[serde(default = "default_n_train")]
        n_train: usize,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default = "default_rate")]
        anomaly_rate: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
        #[serde(default = "default_ba_m")]
        ba_m: usize,
        #[serde(default = "default_labels")]
        labels: usize,
        #[serde(default = "default_h_in")]
        homophily_in: f64,
        #[serde(default = "default_h_out")]
        homophily_out: f64,
    },
}

fn default_rate() -> f64 {
    0.05
}
fn default_train_fraction() -> f64 {
    0.5
}
fn default_n_train() -> usize {
    150
}
fn default_n_test() -> usize {
    100
}
fn default_nodes() -> usize {
    50
}
fn default_ba_m() -> usize {
    2
}
fn default_labels() -> usize {
    5
}
fn default_h_in() -> f64 {
    0.7
}
fn default_h_out() -> f64 {
    0.3
}
fn default_repetitions() -> usize {
    1
}

impl DatasetSource {
    pub fn generator(b: &MixhopBenchmark) -> Self {
        DatasetSource::Generator {
            n_train: b.n_train,
            n_test: b.n_test,
            anomaly_rate: b.anomaly_rate,
            nodes: b.nodes,
            ba_m: b.ba_m,
            labels: b.labels,
            homophily_in: b.homophily_in,
            homophily_out: b.homophily_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub features: FeatureChoice,
    #[serde(default = "default_degree_cap")]
    pub degree_cap: usize,
    /// Grid file path.
    #[serde(default)]
    pub grid_file: Option<PathBuf>,
    /// Inline grid text; used when no file is given.
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub methods: Vec<String>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Independent repetitions; repetition `r > 0` uses `seed::derive(seed, r)`.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

fn default_degree_cap() -> usize {
    DEFAULT_DEGREE_CAP
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        if let Some(g) = cfg.grid_file.as_mut() {
            fix(g);
        }
        if let DatasetSource::Tu { directory, .. } = &mut cfg.dataset {
            fix(directory);
        }
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        match (&self.grid_file, &self.grid) {
            (Some(p), _) => GridSpec::load(p),
            (None, Some(text)) => GridSpec::parse(text),
            (None, None) => Ok(GridSpec::default()),
        }
    }

    pub fn selection_methods(&self) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = self.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
        out.dedup();
        Ok(out)
    }
}

impl FeatureChoice {
    /// The concrete feature kind for a train/test pair.
    pub fn resolve(self, train: &GraphDatabase, test: &GraphDatabase) -> FeatureKind {
        match self {
            FeatureChoice::OneHotLabel => FeatureKind::OneHotLabel,
            FeatureChoice::Attributes => FeatureKind::Attributes,
            FeatureChoice::OneHotDegree => FeatureKind::OneHotDegree,
            FeatureChoice::Auto => {
                let labelled = train.graphs.iter().chain(&test.graphs).all(|g| g.node_labels.is_some());
                if labelled {
                    FeatureKind::OneHotLabel
                } else {
                    FeatureKind::OneHotDegree
                }
            }
        }
    }
}

/// Evaluation of one run against ground-truth flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_model_auc: Vec<f64>,
    pub pool_mean_auc: f64,
    pub pool_std: f64,
    pub selected_auc: BTreeMap<Method, f64>,
    /// Keyed `"<method> > pool_mean"`; only filled across repetitions.
    pub wilcoxon_p: Option<BTreeMap<String, f64>>,
}

impl EvalReport {
    pub fn evaluate(pool: &CandidatePool, selections: &[SelectionResult], flags: &[bool]) -> Result<Self> {
        let per_model_auc = pool
            .score_matrix
            .rows()
            .into_iter()
            .map(|r| roc_auc(r.as_slice().expect("standard layout"), flags))
            .collect::<Result<Vec<_>>>()?;
        let (pool_mean_auc, pool_std) = mean_std(&per_model_auc);
        let selected_auc = selections
            .iter()
            .map(|s| Ok((s.method, roc_auc(&s.final_scores, flags)?)))
            .collect::<Result<_>>()?;
        Ok(EvalReport {
            per_model_auc,
            pool_mean_auc,
            pool_std,
            selected_auc,
            wilcoxon_p: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub pool: CandidatePool,
    pub selections: Vec<SelectionResult>,
    pub eval: Option<EvalReport>,
    pub notices: Vec<String>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub runs: Vec<RunOutcome>,
    /// Across-repetition one-sided tests of each method against the pool mean.
    pub wilcoxon_p: BTreeMap<String, f64>,
    pub notices: Vec<String>,
}

/// Builds the featurized train/test databases for one master seed.
pub fn prepare_data(cfg: &PipelineConfig, master_seed: u64) -> Result<(GraphDatabase, GraphDatabase)> {
    let (train, test) = match &cfg.dataset {
        DatasetSource::Tu {
            directory,
            name,
            inlier_class,
            anomaly_rate,
            train_fraction,
        } => {
            let db = load_tu_dataset(directory, name)?;
            make_split(
                &db,
                *inlier_class,
                *anomaly_rate,
                *train_fraction,
                seed::stage_seed(master_seed, Stage::Split),
            )?
        }
        DatasetSource::Generator {
            n_train,
            n_test,
            anomaly_rate,
            nodes,
            ba_m,
            labels,
            homophily_in,
            homophily_out,
        } => MixhopBenchmark {
            n_train: *n_train,
            n_test: *n_test,
            anomaly_rate: *anomaly_rate,
            nodes: *nodes,
            ba_m: *ba_m,
            labels: *labels,
            homophily_in: *homophily_in,
            homophily_out: *homophily_out,
        }
        .generate(seed::stage_seed(master_seed, Stage::Generate))?,
    };
    let kind = cfg.features.resolve(&train, &test);
    derive_features_pair(&train, &test, kind, cfg.degree_cap)
}

/// One full run into `out_dir`.
pub fn run_once(cfg: &PipelineConfig, master_seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut notices = Vec::new();
    let grid = cfg.grid_spec().map_err(|e| e.in_stage("config"))?;
    let methods = cfg.selection_methods().map_err(|e| e.in_stage("config"))?;
    let (train, test) = prepare_data(cfg, master_seed).map_err(|e| e.in_stage("dataset"))?;

    let train_seed = seed::stage_seed(master_seed, Stage::Training);
    let pool = par::with_workers(cfg.workers, || run_grid(&train, &test, &grid, train_seed, Execution::Parallel))
        .map_err(|e| e.in_stage("train"))?;
    write_pool(&pool, out_dir).map_err(|e| e.in_stage("train"))?;
    if pool.dropped > 0 {
        notices.push(format!("{} diverged candidates dropped", pool.dropped));
    }

    let mut selections = Vec::new();
    for &m in &methods {
        let r = select(&pool, m).map_err(|e| e.in_stage("select"))?;
        write_selection(&r, &pool, &out_dir.join(m.name()).join(SELECTED_FILE)).map_err(|e| e.in_stage("select"))?;
        selections.push(r);
    }

    let eval = match &test.anomaly_flags {
        Some(flags) => Some(EvalReport::evaluate(&pool, &selections, flags).map_err(|e| e.in_stage("evaluate"))?),
        None => {
            notices.push("test set has no anomaly flags; evaluation skipped".into());
            None
        }
    };
    Ok(RunOutcome {
        master_seed,
        output_dir: out_dir.to_path_buf(),
        pool,
        selections,
        eval,
        notices,
        elapsed: start.elapsed(),
    })
}

/// Runs every repetition, writes artifacts and `report.txt`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()).in_stage("config"));
    }
    let mut runs = Vec::with_capacity(cfg.repetitions);
    for r in 0..cfg.repetitions {
        let (s, dir) = if cfg.repetitions == 1 {
            (cfg.seed, cfg.output_dir.clone())
        } else {
            (seed::derive(cfg.seed, r as u64), cfg.output_dir.join(format!("rep_{r}")))
        };
        runs.push(run_once(cfg, s, &dir)?);
    }

    let mut notices = Vec::new();
    let mut wilcoxon_p = BTreeMap::new();
    let evals: Vec<&EvalReport> = runs.iter().filter_map(|r| r.eval.as_ref()).collect();
    if evals.len() == runs.len() && runs.len() > 1 {
        let base: Vec<f64> = evals.iter().map(|e| e.pool_mean_auc).collect();
        for m in cfg.selection_methods()? {
            let y: Vec<f64> = evals.iter().map(|e| e.selected_auc[&m]).collect();
            match wilcoxon_one_sided(&base, &y) {
                Ok(p) => {
                    wilcoxon_p.insert(format!("{m} > pool_mean"), p);
                }
                Err(_) => notices.push(format!(
                    "{m}: Wilcoxon test skipped (needs {WILCOXON_MIN_N} nonzero paired differences)"
                )),
            }
        }
    }
    let mut outcome = PipelineOutcome {
        runs,
        wilcoxon_p,
        notices,
    };
    if !outcome.wilcoxon_p.is_empty() {
        for r in &mut outcome.runs {
            if let Some(e) = r.eval.as_mut() {
                e.wilcoxon_p = Some(outcome.wilcoxon_p.clone());
            }
        }
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e).in_stage("report"))?;
    let path = cfg.output_dir.join(REPORT_FILE);
    fs::write(&path, render_report(&outcome)).map_err(|e| Error::io(&path, e).in_stage("report"))?;
    Ok(outcome)
}

pub fn render_report(outcome: &PipelineOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# graph-level anomaly detection report");
    let _ = writeln!(s, "# repetitions: {}", outcome.runs.len());
    if outcome.runs.len() > 1 {
        let _ = writeln!(
            s,
            "# significance tests pair repetitions over generator seeds, not datasets"
        );
    }
    for r in &outcome.runs {
        let _ = writeln!(s);
        let _ = writeln!(s, "[run seed={}]", r.master_seed);
        let _ = writeln!(s, "output = {}", r.output_dir.display());
        let _ = writeln!(s, "models = {}", r.pool.num_models());
        let _ = writeln!(s, "dropped = {}", r.pool.dropped);
        let _ = writeln!(s, "test_graphs = {}", r.pool.num_graphs());
        let _ = writeln!(s, "elapsed_s = {:.2}", r.elapsed.as_secs_f64());
        for sel in &r.selections {
            let _ = writeln!(
                s,
                "{}.selected_model_id = {}",
                sel.method,
                r.pool.model_ids[sel.selected_model]
            );
        }
        match &r.eval {
            Some(e) => {
                let _ = writeln!(s, "pool_mean_auc = {:.4}", e.pool_mean_auc);
                let _ = writeln!(s, "pool_std_auc = {:.4}", e.pool_std);
                let best = e.per_model_auc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(s, "pool_best_auc = {best:.4}");
                for (m, auc) in &e.selected_auc {
                    let _ = writeln!(s, "{m}.auc = {auc:.4}");
                }
            }
            None => {
                let _ = writeln!(s, "evaluation = skipped");
            }
        }
        for n in &r.notices {
            let _ = writeln!(s, "notice = {n}");
        }
    }
    if !outcome.wilcoxon_p.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "[wilcoxon one-sided]");
        for (k, p) in &outcome.wilcoxon_p {
            let _ = writeln!(s, "{k} : p = {p:.4}");
        }
    }
    for n in &outcome.notices {
        let _ = writeln!(s, "notice = {n}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY_GRID: &str = "[mean]\nlayers = 1\nweight_decay = 1e-4\nlr = 1e-2\nseed = 0, 1\nepochs = 2\nd_hidden = 4\n";

    fn tiny(dir: &Path, methods: &[&str]) -> PipelineConfig {
        PipelineConfig {
            dataset: DatasetSource::Generator {
                n_train: 12,
                n_test: 10,
                anomaly_rate: 0.2,
                nodes: 8,
                ba_m: 2,
                labels: 3,
                homophily_in: 0.8,
                homophily_out: 0.2,
            },
            features: FeatureChoice::Auto,
            degree_cap: DEFAULT_DEGREE_CAP,
            grid_file: None,
            grid: Some(TINY_GRID.into()),
            methods: methods.iter().map(|s| s.to_string()).collect(),
            output_dir: dir.to_path_buf(),
            seed: 3,
            workers: None,
            repetitions: 1,
        }
    }

    #[test]
    fn parse_toml() {
        let text = r#"
            output_dir = "out"
            methods = ["hits-ens", "mc"]
            seed = 9
            grid = """
            [mean]
            layers = 1
            """
            [dataset]
            kind = "generator"
            n_train = 20
        "#;
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.selection_methods().unwrap(), vec![Method::HitsEns, Method::Mc]);
        assert!(matches!(cfg.dataset, DatasetSource::Generator { n_train: 20, nodes: 50, .. }));
        assert!(PipelineConfig::parse("output_dir = 1").is_err());
    }

    #[test]
    fn no_methods_writes_pool_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&tiny(dir.path(), &[])).unwrap();
        assert!(dir.path().join("pool_scores.csv").exists());
        assert!(dir.path().join(REPORT_FILE).exists());
        assert!(!dir.path().join("hits-ens").exists());
        assert!(out.runs[0].eval.is_some());
    }

    #[test]
    fn selection_outputs_per_method() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&tiny(dir.path(), &["hits", "hits-ens", "mc", "udr"])).unwrap();
        for m in ["hits", "hits-ens", "mc", "udr"] {
            assert!(dir.path().join(m).join(SELECTED_FILE).exists(), "{m}");
        }
        let e = out.runs[0].eval.as_ref().unwrap();
        assert_eq!(e.selected_auc.len(), 4);
        assert!(e.per_model_auc.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path(), &[]);
        cfg.dataset = DatasetSource::Tu {
            directory: dir.path().join("nowhere"),
            name: "X".into(),
            inlier_class: 0,
            anomaly_rate: 0.05,
            train_fraction: 0.5,
        };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "dataset", .. }), "{err}");
    }
}
