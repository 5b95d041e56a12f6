//! Per-candidate Deep-SVDD training.
//!
//! A candidate is one deterministic function of its [`ModelConfig`], the
//! training graphs, and a base seed. For MMD pooling the bandwidth and the
//! Nyström eigen-factor are refit at the start of every epoch and treated as
//! constants inside gradients; landmark node embeddings are recomputed from
//! the current parameters at every loss evaluation.

use std::fmt;

use ndarray::{Array1, Array2};
use rand::seq::{index, SliceRandom};

use crate::encoder::{gin_backward, gin_forward, gin_forward_traced, EmbeddingSet};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDatabase};
use crate::numkit::{init_params, sgd_step, GradSet, ParamSet};
use crate::objective::{distance_score, init_center, squared_distance};
use crate::par::{self, Execution};
use crate::pooling::{
    cross_kernel, mean_pool, median_heuristic, nystrom_fit, set_kernel_backward, BandwidthRule, KernelConfig,
    NystromMap, DEFAULT_MEDIAN_SAMPLE_CAP,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pooling {
    Mean,
    Mmd,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Mmd => "mmd",
        })
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "mmd" => Ok(Pooling::Mmd),
            other => Err(Error::Config(format!("unknown pooling `{other}`"))),
        }
    }
}

pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub pooling: Pooling,
    pub layers: usize,
    pub weight_decay: f64,
    pub lr: f64,
    pub seed: u64,
    /// Landmark count; only used with MMD pooling.
    pub nystrom_k: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub d_hidden: usize,
}

impl ModelConfig {
    pub fn new(pooling: Pooling) -> Self {
        ModelConfig {
            pooling,
            layers: 2,
            weight_decay: 1e-4,
            lr: if pooling == Pooling::Mean { 1e-3 } else { 1e-2 },
            seed: 0,
            nystrom_k: (pooling == Pooling::Mmd).then_some(8),
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            d_hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.epochs == 0 || self.batch_size == 0 || self.d_hidden == 0 {
            return Err(Error::Config("layers, epochs, batch size and width must be positive".into()));
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("need lr > 0 and weight decay >= 0".into()));
        }
        if self.pooling == Pooling::Mmd && self.nystrom_k.is_none_or(|k| k == 0) {
            return Err(Error::Config("MMD pooling needs a positive nystrom_k".into()));
        }
        Ok(())
    }

    /// Same configuration with the seed ignored; identifies seed siblings.
    pub fn without_seed(&self) -> ModelConfig {
        ModelConfig { seed: 0, ..self.clone() }
    }
}

/// Pooling state that is constant within a loss evaluation.
#[derive(Debug, Clone)]
pub enum PoolingState {
    Mean,
    Mmd {
        /// Indices into the training graphs.
        landmarks: Vec<usize>,
        gamma: f64,
        /// `k x k` aligned Nyström factor.
        factor: Array2<f64>,
    },
}

/// The training loss over a fixed set of graphs with its analytic gradient.
#[derive(Debug, Clone)]
pub struct LossContext<'a> {
    pub graphs: &'a [Graph],
    pub pooling: PoolingState,
    pub center: Array1<f64>,
    pub weight_decay: f64,
}

struct GraphGrad {
    loss: f64,
    grads: GradSet,
    landmark_grads: Vec<Array2<f64>>,
}

impl LossContext<'_> {
    /// Pooled representation of `graphs[i]` under this context.
    pub fn pooled(&self, params: &ParamSet, i: usize) -> Array1<f64> {
        self.pooled_graph(params, &self.graphs[i], &self.landmark_sets(params))
    }

    fn landmark_sets(&self, params: &ParamSet) -> Vec<EmbeddingSet> {
        match &self.pooling {
            PoolingState::Mean => Vec::new(),
            PoolingState::Mmd { landmarks, .. } => {
                landmarks.iter().map(|&b| gin_forward(&self.graphs[b], params)).collect()
            }
        }
    }

    fn pooled_graph(&self, params: &ParamSet, graph: &Graph, landmark_sets: &[EmbeddingSet]) -> Array1<f64> {
        let emb = gin_forward(graph, params);
        match &self.pooling {
            PoolingState::Mean => mean_pool(&emb),
            PoolingState::Mmd { gamma, factor, .. } => {
                let row: Array1<f64> = landmark_sets
                    .iter()
                    .map(|b| crate::pooling::set_kernel(emb.vectors.view(), b.vectors.view(), *gamma))
                    .collect();
                row.dot(factor)
            }
        }
    }

    /// Full objective (data term plus weight decay) on `batch`.
    pub fn loss(&self, params: &ParamSet, batch: &[usize]) -> f64 {
        let lm = self.landmark_sets(params);
        let data: f64 = batch
            .iter()
            .map(|&i| squared_distance(&self.pooled_graph(params, &self.graphs[i], &lm), &self.center))
            .sum::<f64>()
            / batch.len() as f64;
        data + 0.5 * self.weight_decay * params.squared_norm()
    }

    /// Full objective on `batch` and the gradient of its data term. The
    /// weight-decay gradient is left to [`sgd_step`].
    pub fn loss_and_grad(&self, params: &ParamSet, batch: &[usize], exec: Execution) -> (f64, GradSet) {
        assert!(!batch.is_empty(), "empty batch");
        let scale = 1.0 / batch.len() as f64;
        let landmark_traces = match &self.pooling {
            PoolingState::Mean => Vec::new(),
            PoolingState::Mmd { landmarks, .. } => {
                par::map(exec, landmarks, |&b| gin_forward_traced(&self.graphs[b], params))
            }
        };

        let per_graph: Vec<GraphGrad> = par::map(exec, batch, |&i| {
            let graph = &self.graphs[i];
            let (emb, trace) = gin_forward_traced(graph, params);
            let mut grads = GradSet::zeros_like(params);
            match &self.pooling {
                PoolingState::Mean => {
                    let h = mean_pool(&emb);
                    let diff = &h - &self.center;
                    let loss = diff.dot(&diff) * scale;
                    let row = diff * (2.0 * scale / emb.len() as f64);
                    let d_out = Array2::from_shape_fn(emb.vectors.raw_dim(), |(_, j)| row[j]);
                    gin_backward(graph, params, &trace, d_out, &mut grads);
                    GraphGrad {
                        loss,
                        grads,
                        landmark_grads: Vec::new(),
                    }
                }
                PoolingState::Mmd { gamma, factor, .. } => {
                    let kernels: Vec<Array2<f64>> = landmark_traces
                        .iter()
                        .map(|(b, _)| cross_kernel(emb.vectors.view(), b.vectors.view(), *gamma))
                        .collect();
                    let row: Array1<f64> = kernels.iter().map(|k| k.mean().unwrap_or(0.0)).collect();
                    let h = row.dot(factor);
                    let diff = &h - &self.center;
                    let loss = diff.dot(&diff) * scale;
                    let d_row = factor.dot(&(diff * (2.0 * scale)));
                    let mut d_emb = Array2::zeros(emb.vectors.raw_dim());
                    let mut landmark_grads = Vec::with_capacity(kernels.len());
                    for ((k, (b, _)), &w) in kernels.iter().zip(&landmark_traces).zip(d_row.iter()) {
                        let (da, db) = set_kernel_backward(emb.vectors.view(), b.vectors.view(), k, *gamma, w);
                        d_emb += &da;
                        landmark_grads.push(db);
                    }
                    gin_backward(graph, params, &trace, d_emb, &mut grads);
                    GraphGrad {
                        loss,
                        grads,
                        landmark_grads,
                    }
                }
            }
        });

        // Ordered reduction keeps the result independent of scheduling.
        let mut loss = 0.5 * self.weight_decay * params.squared_norm();
        let mut grads = GradSet::zeros_like(params);
        let mut landmark_d: Vec<Array2<f64>> = landmark_traces
            .iter()
            .map(|(e, _)| Array2::zeros(e.vectors.raw_dim()))
            .collect();
        for g in &per_graph {
            loss += g.loss;
            grads.add_assign(&g.grads);
            for (acc, d) in landmark_d.iter_mut().zip(&g.landmark_grads) {
                *acc += d;
            }
        }
        if let PoolingState::Mmd { landmarks, .. } = &self.pooling {
            let lm_grads: Vec<GradSet> = par::map_range(exec, landmarks.len(), |j| {
                let mut g = GradSet::zeros_like(params);
                let (_, trace) = &landmark_traces[j];
                gin_backward(&self.graphs[landmarks[j]], params, trace, landmark_d[j].clone(), &mut g);
                g
            });
            for g in &lm_grads {
                grads.add_assign(g);
            }
        }
        (loss, grads)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedCandidate {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub center: Array1<f64>,
    /// Frozen map used for scoring (MMD pooling only).
    pub nystrom: Option<NystromMap>,
    /// Objective over all training graphs at initialization.
    pub initial_loss: f64,
    /// Mean batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

impl TrainedCandidate {
    pub fn pooled(&self, graph: &Graph) -> Array1<f64> {
        let emb = gin_forward(graph, &self.params);
        match &self.nystrom {
            None => mean_pool(&emb),
            Some(map) => map.mmd_pool_aligned(&emb),
        }
    }

    /// Distance of the graph's pooled representation to the center.
    pub fn score(&self, graph: &Graph) -> f64 {
        distance_score(&self.pooled(graph), &self.center)
    }

    pub fn score_database(&self, db: &GraphDatabase, exec: Execution) -> Vec<f64> {
        par::map(exec, &db.graphs, |g| self.score(g))
    }
}

/// Score of one graph under a trained candidate.
pub fn score(graph: &Graph, candidate: &TrainedCandidate) -> f64 {
    candidate.score(graph)
}

/// Effective landmark count for `n_train` graphs.
pub fn effective_landmarks(requested: usize, n_train: usize) -> usize {
    requested.clamp(1, n_train)
}

fn refit_nystrom(
    graphs: &[Graph],
    landmarks: &[usize],
    params: &ParamSet,
    rng: &mut seed::Rng,
    exec: Execution,
    previous: Option<f64>,
    rule: BandwidthRule,
) -> Result<NystromMap> {
    let sets: Vec<EmbeddingSet> = par::map(exec, landmarks, |&b| gin_forward(&graphs[b], params));
    let gamma = match (rule, previous) {
        (BandwidthRule::Fixed, Some(g)) => g,
        _ => {
            let views: Vec<_> = sets.iter().map(|s| s.vectors.view()).collect();
            median_heuristic(&views, DEFAULT_MEDIAN_SAMPLE_CAP, rng)
        }
    };
    let config = KernelConfig {
        bandwidth: gamma,
        bandwidth_rule: rule,
        ..KernelConfig::default()
    };
    let mut map = nystrom_fit(sets, config)?;
    map.landmark_ids = landmarks.iter().map(|&b| graphs[b].graph_id).collect();
    Ok(map)
}

struct Setup<'a> {
    ctx: LossContext<'a>,
    params: ParamSet,
    landmarks: Vec<usize>,
    map: Option<NystromMap>,
    kernel_rng: seed::Rng,
    shuffle_rng: seed::Rng,
    initial_loss: f64,
}

fn setup<'a>(train_db: &'a GraphDatabase, config: &ModelConfig, base_seed: u64, exec: Execution) -> Result<Setup<'a>> {
    config.validate()?;
    if train_db.is_empty() {
        return Err(Error::Config("empty training database".into()));
    }
    let d_in = train_db.feature_dim();
    if d_in == 0 {
        return Err(Error::Config("training graphs have no features; derive them first".into()));
    }
    let graphs = &train_db.graphs[..];
    let n = graphs.len();
    let cand_seed = seed::derive(base_seed, config.seed);
    let params = init_params(d_in, config.d_hidden, config.layers, seed::derive(cand_seed, 1));
    let mut kernel_rng = seed::rng(seed::derive(cand_seed, 4));

    let landmarks: Vec<usize> = match config.pooling {
        Pooling::Mean => Vec::new(),
        Pooling::Mmd => {
            let k = effective_landmarks(config.nystrom_k.unwrap_or(1), n);
            let mut rng = seed::rng(seed::derive(cand_seed, 2));
            let mut idx = index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let map = match config.pooling {
        Pooling::Mean => None,
        Pooling::Mmd => Some(refit_nystrom(
            graphs,
            &landmarks,
            &params,
            &mut kernel_rng,
            exec,
            None,
            BandwidthRule::MedianHeuristic,
        )?),
    };
    let mut ctx = LossContext {
        graphs,
        pooling: pooling_state(&map, &landmarks),
        center: Array1::zeros(0),
        weight_decay: config.weight_decay,
    };
    let lm = ctx.landmark_sets(&params);
    let pooled: Vec<Array1<f64>> = par::map(exec, graphs, |g| ctx.pooled_graph(&params, g, &lm));
    ctx.center = init_center(&pooled);
    if !ctx.center.iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged(format!(
            "{} candidate (seed {}): non-finite center",
            config.pooling, config.seed
        )));
    }
    let initial_loss = pooled.iter().map(|h| squared_distance(h, &ctx.center)).sum::<f64>() / n as f64
        + 0.5 * config.weight_decay * params.squared_norm();
    Ok(Setup {
        ctx,
        params,
        landmarks,
        map,
        kernel_rng,
        shuffle_rng: seed::rng(seed::derive(cand_seed, 3)),
        initial_loss,
    })
}

fn pooling_state(map: &Option<NystromMap>, landmarks: &[usize]) -> PoolingState {
    match map {
        None => PoolingState::Mean,
        Some(m) => PoolingState::Mmd {
            landmarks: landmarks.to_vec(),
            gamma: m.gamma(),
            factor: m.aligned_factor.clone(),
        },
    }
}

/// The loss and initial parameters exactly as the first training step of
/// `config` sees them.
pub fn initial_context<'a>(
    train_db: &'a GraphDatabase,
    config: &ModelConfig,
    base_seed: u64,
) -> Result<(LossContext<'a>, ParamSet)> {
    let s = setup(train_db, config, base_seed, Execution::Sequential)?;
    Ok((s.ctx, s.params))
}

/// Trains one candidate on `train_db`. The candidate's random stream is
/// `seed::derive(base_seed, config.seed)`.
pub fn train_candidate(
    train_db: &GraphDatabase,
    config: &ModelConfig,
    base_seed: u64,
    exec: Execution,
) -> Result<TrainedCandidate> {
    let Setup {
        mut ctx,
        mut params,
        landmarks,
        mut map,
        mut kernel_rng,
        mut shuffle_rng,
        initial_loss,
    } = setup(train_db, config, base_seed, exec)?;
    let graphs = &train_db.graphs[..];
    let n = graphs.len();
    let rule = BandwidthRule::MedianHeuristic;
    let diverged = |what: String| Error::Diverged(format!("{} candidate (seed {}): {what}", config.pooling, config.seed));

    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if epoch > 0 && config.pooling == Pooling::Mmd {
            let prev = map.as_ref().map(NystromMap::gamma);
            let m = refit_nystrom(graphs, &landmarks, &params, &mut kernel_rng, exec, prev, rule)
                .map_err(|e| diverged(format!("epoch {epoch}: {e}")))?;
            map = Some(m);
            ctx.pooling = pooling_state(&map, &landmarks);
        }
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = ctx.loss_and_grad(&params, batch, exec);
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss in epoch {epoch}")));
            }
            total += loss * batch.len() as f64;
            sgd_step(&mut params, &grads, config.lr, config.weight_decay);
        }
        if !params.is_finite() {
            return Err(diverged(format!("non-finite parameters after epoch {epoch}")));
        }
        epoch_losses.push(total / n as f64);
    }

    if config.pooling == Pooling::Mmd {
        let prev = map.as_ref().map(NystromMap::gamma);
        map = Some(
            refit_nystrom(graphs, &landmarks, &params, &mut kernel_rng, exec, prev, rule)
                .map_err(|e| diverged(format!("final refit: {e}")))?,
        );
    }
    let final_loss = *epoch_losses.last().unwrap_or(&initial_loss);
    Ok(TrainedCandidate {
        config: config.clone(),
        params,
        center: ctx.center,
        nystrom: map,
        initial_loss,
        epoch_losses,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::derive_features;
    use crate::graph::FeatureKind;
    use crate::mixhop::{generate_mixhop, MixhopParams};

    fn toy_db(n: usize, seed: u64) -> GraphDatabase {
        let p = MixhopParams {
            nodes_per_graph: 12,
            ba_m: 2,
            homophily: 0.7,
            n_labels: 3,
        };
        derive_features(&generate_mixhop(n, &p, seed).unwrap(), FeatureKind::OneHotLabel, 10).unwrap()
    }

    fn quick(pooling: Pooling) -> ModelConfig {
        ModelConfig {
            epochs: 5,
            batch_size: 8,
            d_hidden: 8,
            nystrom_k: (pooling == Pooling::Mmd).then_some(4),
            ..ModelConfig::new(pooling)
        }
    }

    fn grad_check(pooling: Pooling) {
        let db = toy_db(3, 7);
        let cfg = quick(pooling);
        let params = init_params(db.feature_dim(), 4, 2, 11);
        let state = match pooling {
            Pooling::Mean => PoolingState::Mean,
            Pooling::Mmd => {
                let landmarks = vec![0, 2];
                let sets: Vec<_> = landmarks.iter().map(|&b| gin_forward(&db.graphs[b], &params)).collect();
                let map = nystrom_fit(sets, KernelConfig::fixed(0.05)).unwrap();
                PoolingState::Mmd {
                    landmarks,
                    gamma: 0.05,
                    factor: map.aligned_factor,
                }
            }
        };
        let mut ctx = LossContext {
            graphs: &db.graphs,
            pooling: state,
            center: Array1::zeros(0),
            weight_decay: 0.0,
        };
        let dim = ctx.pooled(&params, 0).len();
        ctx.center = Array1::from_shape_fn(dim, |i| 0.1 * i as f64);
        let batch = [0, 1, 2];
        let (_, g) = ctx.loss_and_grad(&params, &batch, Execution::Sequential);
        let fd = crate::numkit::finite_diff_grad(|p| ctx.loss(p, &batch), &params, 1e-6);
        let _ = cfg;
        for (a, b) in g.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-5 * (1e-3 + a.abs().max(b.abs())), "{pooling}: {a} vs {b}");
        }
    }

    #[test]
    fn mean_gradient_matches_finite_differences() {
        grad_check(Pooling::Mean);
    }

    #[test]
    fn mmd_gradient_matches_finite_differences() {
        grad_check(Pooling::Mmd);
    }

    #[test]
    fn deterministic_given_seed() {
        let db = toy_db(12, 1);
        for pooling in [Pooling::Mean, Pooling::Mmd] {
            let a = train_candidate(&db, &quick(pooling), 5, Execution::Parallel).unwrap();
            let b = train_candidate(&db, &quick(pooling), 5, Execution::Sequential).unwrap();
            assert_eq!(a.params, b.params);
            assert_eq!(a.center, b.center);
        }
    }

    #[test]
    fn mean_training_reduces_loss() {
        let db = toy_db(20, 2);
        let cfg = ModelConfig {
            lr: 0.01,
            layers: 1,
            epochs: 30,
            weight_decay: 1e-5,
            ..quick(Pooling::Mean)
        };
        let c = train_candidate(&db, &cfg, 0, Execution::Parallel).unwrap();
        assert!(c.final_loss < c.initial_loss, "{} !< {}", c.final_loss, c.initial_loss);
    }

    #[test]
    fn center_is_frozen() {
        let db = toy_db(10, 3);
        let short = ModelConfig { epochs: 1, ..quick(Pooling::Mean) };
        let long = ModelConfig { epochs: 6, ..quick(Pooling::Mean) };
        let a = train_candidate(&db, &short, 0, Execution::Sequential).unwrap();
        let b = train_candidate(&db, &long, 0, Execution::Sequential).unwrap();
        assert_eq!(a.center, b.center);
        assert_ne!(a.params, b.params);
    }

    #[test]
    fn scores_nonnegative_and_seed_sensitive() {
        let db = toy_db(10, 4);
        let a = train_candidate(&db, &quick(Pooling::Mmd), 0, Execution::Parallel).unwrap();
        let b = train_candidate(&db, &ModelConfig { seed: 1, ..quick(Pooling::Mmd) }, 0, Execution::Parallel).unwrap();
        let sa = a.score_database(&db, Execution::Parallel);
        let sb = b.score_database(&db, Execution::Parallel);
        assert!(sa.iter().all(|s| s.is_finite() && *s >= 0.0));
        assert_ne!(sa, sb);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let db = toy_db(10, 5);
        let cfg = ModelConfig {
            lr: 1e6,
            epochs: 20,
            ..quick(Pooling::Mean)
        };
        assert!(matches!(train_candidate(&db, &cfg, 0, Execution::Sequential), Err(Error::Diverged(_))));
    }
}
