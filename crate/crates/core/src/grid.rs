//! Hyperparameter grids, the candidate sweep, and pool persistence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::GraphDatabase;
use crate::par::{self, Execution};
use crate::trainer::{train_candidate, ModelConfig, Pooling, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_HIDDEN};

pub const POOL_CONFIGS_FILE: &str = "pool_configs.csv";
pub const POOL_SCORES_FILE: &str = "pool_scores.csv";
const CONFIG_HEADER: &str = "model_id,pooling,layers,weight_decay,lr,seed,nystrom_k,epochs,batch_size,d_hidden";

/// Landmark count, either absolute or `c * ln N` of the training size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NystromSize {
    Fixed(usize),
    LogN(f64),
}

impl NystromSize {
    /// `LogN(c)` resolves to `ceil(c ln n)` clamped to `[4, n]`.
    pub fn resolve(self, n_train: usize) -> usize {
        match self {
            NystromSize::Fixed(k) => k,
            NystromSize::LogN(c) => {
                let k = (c * (n_train.max(1) as f64).ln()).ceil().max(0.0) as usize;
                k.max(4).min(n_train.max(1))
            }
        }
    }

    fn parse(token: &str) -> Result<Self> {
        if let Some(c) = token.strip_suffix("logn") {
            let c = if c.is_empty() { 1.0 } else { parse_num::<f64>(c, "nystrom_k")? };
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Config(format!("nystrom_k multiplier must be positive: `{token}`")));
            }
            return Ok(NystromSize::LogN(c));
        }
        Ok(NystromSize::Fixed(parse_num(token, "nystrom_k")?))
    }
}

/// Value sets for one pooling family; the sweep takes their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyGrid {
    pub layers: Vec<usize>,
    pub weight_decay: Vec<f64>,
    pub lr: Vec<f64>,
    pub seeds: Vec<u64>,
    pub nystrom_k: Vec<NystromSize>,
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub d_hidden: Vec<usize>,
}

impl FamilyGrid {
    pub fn default_for(pooling: Pooling) -> Self {
        let (lr, nystrom_k) = match pooling {
            Pooling::Mean => (vec![1e-4, 1e-3], Vec::new()),
            Pooling::Mmd => (
                vec![0.01, 0.1],
                vec![NystromSize::LogN(4.0), NystromSize::LogN(8.0), NystromSize::LogN(16.0)],
            ),
        };
        FamilyGrid {
            layers: vec![1, 2, 4],
            weight_decay: vec![1e-5, 1e-4, 1e-3],
            lr,
            seeds: vec![0, 1, 2],
            nystrom_k,
            epochs: vec![DEFAULT_EPOCHS],
            batch_size: vec![DEFAULT_BATCH_SIZE],
            d_hidden: vec![DEFAULT_HIDDEN],
        }
    }

    fn set(&mut self, key: &str, values: &str) -> Result<()> {
        let tokens: Vec<&str> = values.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return Err(Error::Config(format!("no values for `{key}`")));
        }
        fn all<T: std::str::FromStr>(tokens: &[&str], key: &str) -> Result<Vec<T>> {
            tokens.iter().map(|t| parse_num(t, key)).collect()
        }
        match key {
            "layers" => self.layers = all(&tokens, key)?,
            "weight_decay" => self.weight_decay = all(&tokens, key)?,
            "lr" => self.lr = all(&tokens, key)?,
            "seed" | "seeds" => self.seeds = all(&tokens, key)?,
            "nystrom_k" => self.nystrom_k = tokens.iter().map(|t| NystromSize::parse(t)).collect::<Result<_>>()?,
            "epochs" => self.epochs = all(&tokens, key)?,
            "batch_size" => self.batch_size = all(&tokens, key)?,
            "d_hidden" => self.d_hidden = all(&tokens, key)?,
            other => return Err(Error::Config(format!("unknown grid key `{other}`"))),
        }
        Ok(())
    }

    fn len(&self, pooling: Pooling) -> usize {
        let k = if pooling == Pooling::Mmd { self.nystrom_k.len() } else { 1 };
        self.layers.len()
            * self.weight_decay.len()
            * self.lr.len()
            * self.seeds.len()
            * k
            * self.epochs.len()
            * self.batch_size.len()
            * self.d_hidden.len()
    }

    /// Configurations in deterministic order; seeds vary fastest.
    pub fn expand(&self, pooling: Pooling, n_train: usize) -> Vec<ModelConfig> {
        let ks: Vec<Option<usize>> = match pooling {
            Pooling::Mean => vec![None],
            Pooling::Mmd => self.nystrom_k.iter().map(|k| Some(k.resolve(n_train))).collect(),
        };
        let mut out = Vec::with_capacity(self.len(pooling));
        for &layers in &self.layers {
            for &weight_decay in &self.weight_decay {
                for &lr in &self.lr {
                    for &nystrom_k in &ks {
                        for &epochs in &self.epochs {
                            for &batch_size in &self.batch_size {
                                for &d_hidden in &self.d_hidden {
                                    for &seed in &self.seeds {
                                        out.push(ModelConfig {
                                            pooling,
                                            layers,
                                            weight_decay,
                                            lr,
                                            seed,
                                            nystrom_k,
                                            epochs,
                                            batch_size,
                                            d_hidden,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(token: &str, key: &str) -> Result<T> {
    token
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{token}` for `{key}`")))
}

/// A grid over the mean and MMD families. A missing family is skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub mean: Option<FamilyGrid>,
    pub mmd: Option<FamilyGrid>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            mean: Some(FamilyGrid::default_for(Pooling::Mean)),
            mmd: Some(FamilyGrid::default_for(Pooling::Mmd)),
        }
    }
}

impl GridSpec {
    /// Parses `key = v1, v2` lines under `[mean]`, `[mmd]` and `[common]`.
    /// Keys absent from a family section come from `[common]`, then from the
    /// built-in defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<&str, Vec<(String, String, usize)>> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let name = match name {
                    "mean" => "mean",
                    "mmd" => "mmd",
                    "common" => "common",
                    other => return Err(Error::Config(format!("grid line {}: unknown section `{other}`", i + 1))),
                };
                sections.entry(name).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid line {}: expected `key = values`", i + 1)))?;
            let section =
                current.ok_or_else(|| Error::Config(format!("grid line {}: entry outside a section", i + 1)))?;
            sections
                .get_mut(section)
                .expect("section registered")
                .push((key.trim().to_string(), value.trim().to_string(), i + 1));
        }
        let common = sections.get("common").cloned().unwrap_or_default();
        let build = |name: &str, pooling: Pooling| -> Result<Option<FamilyGrid>> {
            let Some(entries) = sections.get(name) else {
                return Ok(None);
            };
            let mut grid = FamilyGrid::default_for(pooling);
            for (k, v, line) in common.iter().chain(entries) {
                if pooling == Pooling::Mean && k == "nystrom_k" {
                    continue;
                }
                grid.set(k, v)
                    .map_err(|e| Error::Config(format!("grid line {line}: {e}")))?;
            }
            Ok(Some(grid))
        };
        let spec = GridSpec {
            mean: build("mean", Pooling::Mean)?,
            mmd: build("mmd", Pooling::Mmd)?,
        };
        if spec.is_empty() {
            return Err(Error::Config("grid defines no candidates".into()));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GridSpec::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.mean.as_ref().map_or(0, |g| g.len(Pooling::Mean)) + self.mmd.as_ref().map_or(0, |g| g.len(Pooling::Mmd))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All configurations, mean family first.
    pub fn expand(&self, n_train: usize) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        if let Some(g) = &self.mean {
            out.extend(g.expand(Pooling::Mean, n_train));
        }
        if let Some(g) = &self.mmd {
            out.extend(g.expand(Pooling::Mmd, n_train));
        }
        out
    }
}

/// Anomaly scores of every surviving candidate on every test graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    /// `M x N`; row `i` belongs to `configs[i]`.
    pub score_matrix: Array2<f64>,
    pub configs: Vec<ModelConfig>,
    /// Position of each row's configuration in the expanded grid.
    pub model_ids: Vec<usize>,
    pub graph_ids: Vec<usize>,
    /// Candidates that diverged during training.
    pub dropped: usize,
}

impl CandidatePool {
    pub fn num_models(&self) -> usize {
        self.configs.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_ids.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.score_matrix.row(i).to_vec()
    }

    /// Index of the row with the given model id.
    pub fn index_of(&self, model_id: usize) -> Option<usize> {
        self.model_ids.iter().position(|&m| m == model_id)
    }
}

/// Trains every grid candidate on `train_db` and scores `test_db`.
/// Candidates run concurrently under `exec`; rows keep grid order.
pub fn run_grid(
    train_db: &GraphDatabase,
    test_db: &GraphDatabase,
    spec: &GridSpec,
    base_seed: u64,
    exec: Execution,
) -> Result<CandidatePool> {
    if spec.is_empty() {
        return Err(Error::Config("grid defines no candidates".into()));
    }
    if test_db.is_empty() {
        return Err(Error::Config("empty test database".into()));
    }
    if train_db.feature_dim() != test_db.feature_dim() {
        return Err(Error::Config(format!(
            "train and test feature widths differ ({} vs {})",
            train_db.feature_dim(),
            test_db.feature_dim()
        )));
    }
    let configs = spec.expand(train_db.len());
    let results: Vec<Result<Vec<f64>>> = par::map(exec, &configs, |cfg| {
        let cand = train_candidate(train_db, cfg, base_seed, Execution::Sequential)?;
        let scores = cand.score_database(test_db, Execution::Sequential);
        if scores.iter().all(|s| s.is_finite()) {
            Ok(scores)
        } else {
            Err(Error::Diverged("non-finite test score".into()))
        }
    });
    let mut rows = Vec::new();
    let mut kept = Vec::new();
    let mut model_ids = Vec::new();
    let mut dropped = 0;
    for (id, (cfg, res)) in configs.into_iter().zip(results).enumerate() {
        match res {
            Ok(scores) => {
                rows.extend(scores);
                kept.push(cfg);
                model_ids.push(id);
            }
            Err(Error::Diverged(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate(format!("all {dropped} candidates diverged")));
    }
    let n = test_db.len();
    Ok(CandidatePool {
        score_matrix: Array2::from_shape_vec((kept.len(), n), rows).expect("row lengths match"),
        configs: kept,
        model_ids,
        graph_ids: test_db.graph_ids(),
        dropped,
    })
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    format_sig(x, 9)
}

pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `pool_configs.csv` and `pool_scores.csv` into `dir`.
pub fn write_pool(pool: &CandidatePool, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cfg = String::from(CONFIG_HEADER);
    cfg.push('\n');
    for (id, c) in pool.model_ids.iter().zip(&pool.configs) {
        let k = c.nystrom_k.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(
            cfg,
            "{id},{},{},{},{},{},{k},{},{},{}",
            c.pooling, c.layers, c.weight_decay, c.lr, c.seed, c.epochs, c.batch_size, c.d_hidden
        );
    }
    let mut scores = String::from("model_id");
    for g in &pool.graph_ids {
        let _ = write!(scores, ",{g}");
    }
    scores.push('\n');
    for (id, row) in pool.model_ids.iter().zip(pool.score_matrix.rows()) {
        let _ = write!(scores, "{id}");
        for v in row {
            let _ = write!(scores, ",{}", format_sig9(*v));
        }
        scores.push('\n');
    }
    let p = dir.join(POOL_CONFIGS_FILE);
    fs::write(&p, cfg).map_err(|e| Error::io(&p, e))?;
    let p = dir.join(POOL_SCORES_FILE);
    fs::write(&p, scores).map_err(|e| Error::io(&p, e))?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn field<T: std::str::FromStr>(file: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(file, line, format!("bad {name} `{s}`")))
}

/// Reads a pool written by [`write_pool`]. The dropped count is not stored
/// and reads back as zero.
pub fn read_pool(dir: &Path) -> Result<CandidatePool> {
    let cpath = dir.join(POOL_CONFIGS_FILE);
    let spath = dir.join(POOL_SCORES_FILE);
    let clines = read_lines(&cpath)?;
    let slines = read_lines(&spath)?;
    if clines.first().map(|h| h.trim()) != Some(CONFIG_HEADER) {
        return Err(Error::format(&cpath, 1, "unexpected header"));
    }
    let mut configs = BTreeMap::new();
    for (i, line) in clines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::format(&cpath, ln, format!("expected 10 fields, got {}", f.len())));
        }
        let id: usize = field(&cpath, ln, "model_id", f[0])?;
        let pooling: Pooling = f[1].parse().map_err(|_| Error::format(&cpath, ln, format!("bad pooling `{}`", f[1])))?;
        let nystrom_k = if f[6].trim().is_empty() {
            None
        } else {
            Some(field(&cpath, ln, "nystrom_k", f[6])?)
        };
        let cfg = ModelConfig {
            pooling,
            layers: field(&cpath, ln, "layers", f[2])?,
            weight_decay: field(&cpath, ln, "weight_decay", f[3])?,
            lr: field(&cpath, ln, "lr", f[4])?,
            seed: field(&cpath, ln, "seed", f[5])?,
            nystrom_k,
            epochs: field(&cpath, ln, "epochs", f[7])?,
            batch_size: field(&cpath, ln, "batch_size", f[8])?,
            d_hidden: field(&cpath, ln, "d_hidden", f[9])?,
        };
        if configs.insert(id, cfg).is_some() {
            return Err(Error::format(&cpath, ln, format!("duplicate model_id {id}")));
        }
    }
    let header = slines.first().ok_or_else(|| Error::format(&spath, 1, "empty file"))?;
    let mut cols = header.split(',');
    if cols.next().map(str::trim) != Some("model_id") {
        return Err(Error::format(&spath, 1, "header must start with model_id"));
    }
    let graph_ids: Vec<usize> = cols.map(|c| field(&spath, 1, "graph id", c)).collect::<Result<_>>()?;
    let n = graph_ids.len();
    let mut rows = Vec::new();
    let mut model_ids = Vec::new();
    let mut kept = Vec::new();
    for (i, line) in slines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let ln = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != n + 1 {
            return Err(Error::format(&spath, ln, format!("expected {} fields, got {}", n + 1, f.len())));
        }
        let id: usize = field(&spath, ln, "model_id", f[0])?;
        let cfg = configs
            .get(&id)
            .ok_or_else(|| Error::format(&spath, ln, format!("model_id {id} missing from {POOL_CONFIGS_FILE}")))?;
        for v in &f[1..] {
            let s: f64 = field(&spath, ln, "score", v)?;
            if !s.is_finite() || s < 0.0 {
                return Err(Error::format(&spath, ln, format!("score `{v}` must be finite and nonnegative")));
            }
            rows.push(s);
        }
        model_ids.push(id);
        kept.push(cfg.clone());
    }
    if kept.is_empty() {
        return Err(Error::format(&spath, 1, "pool has no models"));
    }
    Ok(CandidatePool {
        score_matrix: Array2::from_shape_vec((kept.len(), n), rows).expect("row lengths checked"),
        configs: kept,
        model_ids,
        graph_ids,
        dropped: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        let g = GridSpec::default();
        let cfgs = g.expand(150);
        assert_eq!(cfgs.iter().filter(|c| c.pooling == Pooling::Mean).count(), 54);
        assert_eq!(cfgs.iter().filter(|c| c.pooling == Pooling::Mmd).count(), 162);
        assert_eq!(g.len(), 216);
    }

    #[test]
    fn nystrom_log_sizes() {
        // ln 150 = 5.0106
        assert_eq!(NystromSize::LogN(4.0).resolve(150), 21);
        assert_eq!(NystromSize::LogN(8.0).resolve(150), 41);
        assert_eq!(NystromSize::LogN(16.0).resolve(150), 81);
        assert_eq!(NystromSize::LogN(16.0).resolve(20), 20);
        assert_eq!(NystromSize::LogN(1.0).resolve(10), 4);
    }

    #[test]
    fn parse_sections_and_common() {
        let text = "# grid\n[common]\nepochs = 3\nd_hidden = 8\n\n[mmd]\nlr = 0.1\nseed = 0, 1\nnystrom_k = 4logn, 6\n";
        let g = GridSpec::parse(text).unwrap();
        assert!(g.mean.is_none());
        let mmd = g.mmd.unwrap();
        assert_eq!(mmd.epochs, vec![3]);
        assert_eq!(mmd.lr, vec![0.1]);
        assert_eq!(mmd.nystrom_k, vec![NystromSize::LogN(4.0), NystromSize::Fixed(6)]);
        assert_eq!(mmd.len(Pooling::Mmd), 3 * 3 * 2 * 2);
    }

    #[test]
    fn single_config_grid() {
        let text = "[mean]\nlayers = 2\nweight_decay = 1e-4\nlr = 1e-3\nseed = 0\n";
        assert_eq!(GridSpec::parse(text).unwrap().expand(10).len(), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(GridSpec::parse("").is_err());
        assert!(GridSpec::parse("[common]\nepochs = 2\n").is_err());
        assert!(GridSpec::parse("[mean]\nlayers = two\n").is_err());
        assert!(GridSpec::parse("[mean]\nfoo = 1\n").is_err());
        assert!(GridSpec::parse("[oops]\n").is_err());
        assert!(GridSpec::parse("layers = 1\n").is_err());
    }

    #[test]
    fn sig9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (1.234567891234, "1.23456789"),
            (2.0 / 3.0, "0.666666667"),
            (999999999.5, "1e+09"),
            (1e100, "1e+100"),
            (-2.5, "-2.5"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig9(x), want, "{x}");
        }
    }

    #[test]
    fn pool_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut mmd = ModelConfig::new(Pooling::Mmd);
        mmd.nystrom_k = Some(7);
        let pool = CandidatePool {
            score_matrix: ndarray::array![[0.5, 1.25, 3.0], [0.125, 2.0, 0.0]],
            configs: vec![ModelConfig::new(Pooling::Mean), mmd],
            model_ids: vec![0, 2],
            graph_ids: vec![4, 8, 9],
            dropped: 1,
        };
        write_pool(&pool, dir.path()).unwrap();
        let back = read_pool(dir.path()).unwrap();
        assert_eq!(back, CandidatePool { dropped: 0, ..pool });
        let text = fs::read_to_string(dir.path().join(POOL_SCORES_FILE)).unwrap();
        assert_eq!(text, "model_id,4,8,9\n0,0.5,1.25,3\n2,0.125,2,0\n");
    }
}
