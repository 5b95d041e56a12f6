//! Label-free model selection over a candidate pool: HITS hub/authority
//! scores, the HITS authority ensemble, model centrality, and UDR.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::grid::{format_sig9, CandidatePool};
use crate::metrics::midranks;

pub const HITS_TOL: f64 = 1e-9;
pub const HITS_MAX_ITERS: usize = 1000;
pub const SELECTION_META_FILE: &str = "selection_meta.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Hits,
    HitsEns,
    Mc,
    Udr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hits, Method::HitsEns, Method::Mc, Method::Udr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hits => "hits",
            Method::HitsEns => "hits-ens",
            Method::Mc => "mc",
            Method::Udr => "udr",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "hits" => Ok(Method::Hits),
            "hits-ens" => Ok(Method::HitsEns),
            "mc" => Ok(Method::Mc),
            "udr" => Ok(Method::Udr),
            other => Err(Error::Config(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: Method,
    /// HITS hub vector, or per-model reliability for MC and UDR.
    pub hub_scores: Vec<f64>,
    /// HITS authority vector; `None` for MC and UDR.
    pub authority_scores: Option<Vec<f64>>,
    /// Row index into the pool.
    pub selected_model: usize,
    pub final_scores: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Per-row min-max scaling to `[0, 1]`; constant rows become 0.5.
pub fn normalize_rows(scores: ArrayView2<f64>) -> Array2<f64> {
    let mut out = scores.to_owned();
    for mut row in out.rows_mut() {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            row.mapv_inplace(|v| (v - lo) / (hi - lo));
        } else {
            row.fill(0.5);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitsOutput {
    pub hub: Array1<f64>,
    pub authority: Array1<f64>,
    pub iterations: usize,
    /// Largest absolute change of either vector in the last iteration.
    pub residual: f64,
}

fn unit(v: &mut Array1<f64>) {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
}

/// Hub/authority iteration on the bipartite model-graph weights `w`.
pub fn hits(w: ArrayView2<f64>, tol: f64, max_iters: usize) -> Result<HitsOutput> {
    let (m, n) = w.dim();
    if m == 0 || n == 0 {
        return Err(Error::Degenerate("HITS needs a nonempty weight matrix".into()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Parameter("HITS weights must be finite and nonnegative".into()));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("HITS weight matrix is all zero".into()));
    }
    let mut a = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut h = Array1::zeros(m);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut h_new = w.dot(&a);
        unit(&mut h_new);
        let mut a_new = w.t().dot(&h_new);
        unit(&mut a_new);
        let dh = (&h_new - &h).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let da = (&a_new - &a).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        residual = dh.max(da);
        h = h_new;
        a = a_new;
        if residual < tol {
            break;
        }
    }
    Ok(HitsOutput {
        hub: h,
        authority: a,
        iterations,
        residual,
    })
}

/// First index of the maximum; NaN never wins.
pub fn argmax_lowest(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x.is_nan() {
            continue;
        }
        if best.is_none_or(|b| x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn check_pool(pool: &CandidatePool) -> Result<()> {
    if pool.num_models() == 0 || pool.num_graphs() == 0 {
        return Err(Error::Degenerate("empty candidate pool".into()));
    }
    Ok(())
}

fn hits_common(pool: &CandidatePool, method: Method) -> Result<SelectionResult> {
    check_pool(pool)?;
    let w = normalize_rows(pool.score_matrix.view());
    let out = hits(w.view(), HITS_TOL, HITS_MAX_ITERS)?;
    let hub = out.hub.to_vec();
    let selected = argmax_lowest(&hub).expect("nonempty hub vector");
    let final_scores = match method {
        Method::HitsEns => out.authority.to_vec(),
        _ => pool.row(selected),
    };
    Ok(SelectionResult {
        method,
        hub_scores: hub,
        authority_scores: Some(out.authority.to_vec()),
        selected_model: selected,
        final_scores,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// The model with the largest hub score.
pub fn hits_select(pool: &CandidatePool) -> Result<SelectionResult> {
    hits_common(pool, Method::Hits)
}

/// Authority scores as the ensemble anomaly ranking.
pub fn hits_ens(pool: &CandidatePool) -> Result<SelectionResult> {
    hits_common(pool, Method::HitsEns)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::MetricUndefined("rank correlation needs at least 2 points".into()));
    }
    pearson(&midranks(x), &midranks(y))
        .ok_or_else(|| Error::MetricUndefined("rank correlation of a constant vector".into()))
}

fn ranked_rows(pool: &CandidatePool) -> Vec<Option<Vec<f64>>> {
    pool.score_matrix
        .rows()
        .into_iter()
        .map(|r| {
            let r = r.to_vec();
            let constant = r.iter().all(|&v| v == r[0]);
            (!constant).then(|| midranks(&r))
        })
        .collect()
}

fn pick(pool: &CandidatePool, method: Method, reliability: Vec<f64>) -> Result<SelectionResult> {
    let selected = argmax_lowest(&reliability)
        .filter(|&i| reliability[i] > f64::NEG_INFINITY)
        .ok_or_else(|| Error::Degenerate(format!("{method}: no model has a defined reliability")))?;
    Ok(SelectionResult {
        method,
        final_scores: pool.row(selected),
        hub_scores: reliability,
        authority_scores: None,
        selected_model: selected,
        iterations: 0,
        residual: 0.0,
    })
}

/// Model centrality: mean rank correlation with every other model.
/// Constant rows are left out of all pairs.
pub fn mc_select(pool: &CandidatePool) -> Result<SelectionResult> {
    check_pool(pool)?;
    if pool.num_models() < 2 {
        return Err(Error::MethodInapplicable("mc needs at least 2 models".into()));
    }
    let ranks = ranked_rows(pool);
    let live: Vec<usize> = (0..ranks.len()).filter(|&i| ranks[i].is_some()).collect();
    if live.len() < 2 {
        return Err(Error::Degenerate("mc: fewer than 2 non-constant score rows".into()));
    }
    let m = ranks.len();
    let mut sim = Array2::<f64>::zeros((m, m));
    for (p, &i) in live.iter().enumerate() {
        for &j in &live[p + 1..] {
            let r = pearson(ranks[i].as_ref().unwrap(), ranks[j].as_ref().unwrap()).unwrap_or(0.0);
            sim[[i, j]] = r;
            sim[[j, i]] = r;
        }
    }
    let reliability = (0..m)
        .map(|i| {
            if ranks[i].is_none() {
                f64::NEG_INFINITY
            } else {
                live.iter().filter(|&&j| j != i).map(|&j| sim[[i, j]]).sum::<f64>() / (live.len() - 1) as f64
            }
        })
        .collect();
    pick(pool, Method::Mc, reliability)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// UDR: median rank correlation with same-configuration runs under other seeds.
pub fn udr_select(pool: &CandidatePool) -> Result<SelectionResult> {
    check_pool(pool)?;
    let keys: Vec<_> = pool.configs.iter().map(|c| c.without_seed()).collect();
    let siblings = |i: usize| -> Vec<usize> {
        (0..keys.len())
            .filter(|&j| j != i && keys[j] == keys[i] && pool.configs[j].seed != pool.configs[i].seed)
            .collect()
    };
    if (0..keys.len()).all(|i| siblings(i).is_empty()) {
        return Err(Error::MethodInapplicable(
            "udr needs at least one configuration trained under 2 or more seeds".into(),
        ));
    }
    let ranks = ranked_rows(pool);
    let reliability = (0..keys.len())
        .map(|i| {
            let Some(ri) = &ranks[i] else {
                return f64::NEG_INFINITY;
            };
            let vals: Vec<f64> = siblings(i)
                .into_iter()
                .filter_map(|j| ranks[j].as_ref().and_then(|rj| pearson(ri, rj)))
                .collect();
            if vals.is_empty() {
                f64::NEG_INFINITY
            } else {
                median(vals)
            }
        })
        .collect();
    pick(pool, Method::Udr, reliability)
}

pub fn select(pool: &CandidatePool, method: Method) -> Result<SelectionResult> {
    match method {
        Method::Hits => hits_select(pool),
        Method::HitsEns => hits_ens(pool),
        Method::Mc => mc_select(pool),
        Method::Udr => udr_select(pool),
    }
}

/// Writes `selected.csv` to `path` and `selection_meta.txt` beside it.
pub fn write_selection(result: &SelectionResult, pool: &CandidatePool, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::from("graph_id,score\n");
    for (g, s) in pool.graph_ids.iter().zip(&result.final_scores) {
        let _ = writeln!(out, "{g},{}", format_sig9(*s));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta_path = path.with_file_name(SELECTION_META_FILE);
    let meta = format!(
        "method = {}\nselected_model_id = {}\niterations = {}\nresidual = {}\n",
        result.method,
        pool.model_ids[result.selected_model],
        result.iterations,
        format_sig9(result.residual)
    );
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Reads a `graph_id,<value>` CSV with a header row.
pub fn read_id_column(path: &Path) -> Result<Vec<(usize, f64)>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, v) = line
            .split_once(',')
            .ok_or_else(|| Error::format(path, i + 1, "expected two columns"))?;
        let id = id
            .trim()
            .parse()
            .map_err(|_| Error::format(path, i + 1, format!("bad graph id `{id}`")))?;
        let v = v
            .trim()
            .parse()
            .map_err(|_| Error::format(path, i + 1, format!("bad value `{v}`")))?;
        out.push((id, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{ModelConfig, Pooling};
    use ndarray::array;

    pub(crate) fn pool_of(rows: Array2<f64>, seeds: &[u64]) -> CandidatePool {
        let m = rows.nrows();
        let configs = (0..m)
            .map(|i| ModelConfig {
                seed: seeds.get(i).copied().unwrap_or(0),
                ..ModelConfig::new(Pooling::Mean)
            })
            .collect();
        CandidatePool {
            graph_ids: (0..rows.ncols()).collect(),
            score_matrix: rows,
            configs,
            model_ids: (0..m).collect(),
            dropped: 0,
        }
    }

    #[test]
    fn normalize_cases() {
        let n = normalize_rows(array![[0.0, 5.0, 10.0], [3.0, 3.0, 3.0]].view());
        assert_eq!(n, array![[0.0, 0.5, 1.0], [0.5, 0.5, 0.5]]);
    }

    #[test]
    fn hits_single_and_identical_rows() {
        let out = hits(array![[1.0, 2.0, 2.0]].view(), 1e-12, 1000).unwrap();
        assert!((out.hub[0] - 1.0).abs() < 1e-12);
        assert!((&out.authority - &array![1.0, 2.0, 2.0].mapv(|v| v / 3.0)).iter().all(|d| d.abs() < 1e-9));
        let out = hits(array![[1.0, 0.0, 2.0], [1.0, 0.0, 2.0]].view(), 1e-12, 1000).unwrap();
        let s = 0.5f64.sqrt();
        assert!((out.hub[0] - s).abs() < 1e-12 && (out.hub[1] - s).abs() < 1e-12);
        assert!(hits(Array2::zeros((2, 2)).view(), 1e-9, 10).is_err());
    }

    #[test]
    fn hits_select_ties_and_reversal() {
        let p = pool_of(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], &[]);
        assert_eq!(hits_select(&p).unwrap().selected_model, 0);
        let p = pool_of(array![[1.0, 2.0, 3.0, 4.0], [1.5, 2.5, 3.0, 4.5], [4.0, 3.0, 2.0, 1.0]], &[]);
        let r = hits_select(&p).unwrap();
        assert_ne!(r.selected_model, 2);
        assert_eq!(r.final_scores, p.row(r.selected_model));
    }

    #[test]
    fn hits_ens_single_model_keeps_ranking() {
        let p = pool_of(array![[0.3, 0.9, 0.1, 0.5]], &[]);
        let r = hits_ens(&p).unwrap();
        let order = |v: &[f64]| {
            let mut i: Vec<usize> = (0..v.len()).collect();
            i.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            i
        };
        assert_eq!(order(&r.final_scores), order(&p.row(0)));
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mc_cases() {
        let p = pool_of(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [3.0, 2.0, 1.0]], &[]);
        assert_eq!(mc_select(&p).unwrap().selected_model, 0);
        let p = pool_of(array![[1.0, 2.0, 3.0], [2.0, 1.0, 3.0]], &[]);
        let r = mc_select(&p).unwrap();
        assert_eq!(r.hub_scores[0], r.hub_scores[1]);
        assert_eq!(r.selected_model, 0);
        let p = pool_of(array![[1.0, 1.0, 1.0], [2.0, 1.0, 3.0]], &[]);
        assert!(mc_select(&p).is_err());
    }

    #[test]
    fn udr_cases() {
        let p = pool_of(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], &[0, 1, 2]);
        let r = udr_select(&p).unwrap();
        assert_eq!(r.hub_scores, vec![1.0; 3]);
        assert_eq!(r.selected_model, 0);

        let p = pool_of(array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]], &[0, 0]);
        assert!(matches!(udr_select(&p), Err(Error::MethodInapplicable(_))));
    }

    #[test]
    fn udr_prefers_agreeing_config() {
        // Config B (rows 0, 1) disagrees across seeds, config A (rows 2, 3) agrees.
        let mut p = pool_of(
            array![[1.0, 2.0, 3.0, 4.0], [4.0, 1.0, 3.0, 2.0], [1.0, 3.0, 2.0, 4.0], [1.0, 3.0, 2.0, 4.0]],
            &[0, 1, 0, 1],
        );
        p.configs[0].layers = 4;
        p.configs[1].layers = 4;
        let r = udr_select(&p).unwrap();
        assert!(r.selected_model == 2 || r.selected_model == 3);
        assert_eq!(r.hub_scores[2], 1.0);
        assert!(r.hub_scores[0] < 1.0);
    }

    #[test]
    fn selection_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = pool_of(array![[0.25, 0.5], [1.0, 2.0]], &[]);
        let r = hits_ens(&p).unwrap();
        let path = dir.path().join("selected.csv");
        write_selection(&r, &p, &path).unwrap();
        let back = read_id_column(&path).unwrap();
        assert_eq!(back.len(), 2);
        let meta = fs::read_to_string(dir.path().join(SELECTION_META_FILE)).unwrap();
        assert!(meta.starts_with("method = hits-ens\n"));
    }
}
