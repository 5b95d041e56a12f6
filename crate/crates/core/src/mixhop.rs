//! Synthetic labelled Barabási–Albert graphs with tunable label homophily.
//!
//! Each graph starts from `ba_m` isolated seed nodes. Every arriving node
//! draws a label uniformly and attaches `ba_m` distinct edges. For each edge,
//! with probability `homophily` the target pool is the existing nodes sharing
//! the newcomer's label, otherwise the nodes with a different label; an empty
//! pool falls back to all existing nodes. Within the pool the target is drawn
//! proportionally to degree (uniformly when every degree is zero).

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDatabase, SplitTag};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixhopParams {
    pub nodes_per_graph: usize,
    pub ba_m: usize,
    pub homophily: f64,
    pub n_labels: usize,
}

impl MixhopParams {
    fn check(&self) -> Result<()> {
        if self.ba_m < 1 || self.nodes_per_graph <= self.ba_m {
            return Err(Error::Parameter(format!(
                "need nodes_per_graph > ba_m >= 1 (got {} and {})",
                self.nodes_per_graph, self.ba_m
            )));
        }
        if self.n_labels < 1 {
            return Err(Error::Parameter("need at least one label".into()));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::Parameter(format!("homophily {} outside [0, 1]", self.homophily)));
        }
        Ok(())
    }
}

/// Grows a single graph.
pub fn mixhop_graph(graph_id: usize, p: &MixhopParams, rng: &mut Rng) -> Result<Graph> {
    p.check()?;
    let n = p.nodes_per_graph;
    let labels: Vec<i64> = (0..n).map(|_| rng.random_range(0..p.n_labels) as i64).collect();
    let mut degree = vec![0usize; n];
    let mut edges = Vec::with_capacity((n - p.ba_m) * p.ba_m);
    let mut pool = Vec::with_capacity(n);
    let mut chosen = Vec::with_capacity(p.ba_m);

    for v in p.ba_m..n {
        chosen.clear();
        for _ in 0..p.ba_m {
            let same = rng.random::<f64>() < p.homophily;
            pool.clear();
            pool.extend((0..v).filter(|u| !chosen.contains(u) && (labels[*u] == labels[v]) == same));
            if pool.is_empty() {
                pool.extend((0..v).filter(|u| !chosen.contains(u)));
            }
            let total: usize = pool.iter().map(|&u| degree[u]).sum();
            let target = if total == 0 {
                pool[rng.random_range(0..pool.len())]
            } else {
                let mut r = rng.random_range(0..total);
                let mut pick = pool[pool.len() - 1];
                for &u in &pool {
                    if r < degree[u] {
                        pick = u;
                        break;
                    }
                    r -= degree[u];
                }
                pick
            };
            chosen.push(target);
        }
        for &u in &chosen {
            degree[u] += 1;
            degree[v] += 1;
            edges.push((u, v, 1.0));
        }
    }
    let mut g = Graph::new(graph_id, n, &edges)?;
    g.node_labels = Some(labels);
    Ok(g)
}

/// Generates `n_graphs` graphs with ids `0..n_graphs`.
pub fn generate_mixhop(n_graphs: usize, p: &MixhopParams, seed: u64) -> Result<GraphDatabase> {
    p.check()?;
    let mut rng = seed::rng(seed);
    let graphs = (0..n_graphs)
        .map(|i| mixhop_graph(i, p, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(GraphDatabase::new(graphs))
}

/// Fraction of edges joining nodes with equal labels.
pub fn same_label_fraction(db: &GraphDatabase) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for g in &db.graphs {
        let Some(labels) = &g.node_labels else { continue };
        for &(u, v, _) in g.edges() {
            total += 1;
            same += usize::from(labels[u] == labels[v]);
        }
    }
    if total == 0 {
        0.0
    } else {
        same as f64 / total as f64
    }
}

/// Parameters of a train/test benchmark: inliers use `homophily_in`,
/// planted anomalies `homophily_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixhopBenchmark {
    pub n_train: usize,
    pub n_test: usize,
    pub anomaly_rate: f64,
    pub nodes: usize,
    pub ba_m: usize,
    pub labels: usize,
    pub homophily_in: f64,
    pub homophily_out: f64,
}

impl MixhopBenchmark {
    /// 150 training inliers, 100 test graphs at 5% anomalies, 50-node graphs
    /// with 5 labels, homophily 0.7 against 0.3.
    pub fn standard() -> Self {
        MixhopBenchmark {
            n_train: 150,
            n_test: 100,
            anomaly_rate: 0.05,
            nodes: 50,
            ba_m: 2,
            labels: 5,
            homophily_in: 0.7,
            homophily_out: 0.3,
        }
    }

    pub fn test_anomalies(&self) -> usize {
        ((self.anomaly_rate * self.n_test as f64).round() as usize).clamp(1, self.n_test.saturating_sub(1).max(1))
    }

    /// Builds the split. Class label 0 marks inliers, 1 anomalies; test
    /// anomalies sit at seeded random positions.
    pub fn generate(&self, seed: u64) -> Result<(GraphDatabase, GraphDatabase)> {
        if self.n_train == 0 || self.n_test < 2 {
            return Err(Error::Parameter("need n_train >= 1 and n_test >= 2".into()));
        }
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 0.5) {
            return Err(Error::Parameter(format!("anomaly rate {} outside (0, 0.5)", self.anomaly_rate)));
        }
        let base = MixhopParams {
            nodes_per_graph: self.nodes,
            ba_m: self.ba_m,
            homophily: self.homophily_in,
            n_labels: self.labels,
        };
        let anomalous = MixhopParams {
            homophily: self.homophily_out,
            ..base
        };
        let mut rng = seed::rng(seed);

        let train_graphs = (0..self.n_train)
            .map(|i| {
                let mut g = mixhop_graph(i, &base, &mut rng)?;
                g.class_label = Some(0);
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;

        let n_anom = self.test_anomalies();
        let mut flags: Vec<bool> = (0..self.n_test).map(|i| i < n_anom).collect();
        flags.shuffle(&mut rng);
        let test_graphs = flags
            .iter()
            .enumerate()
            .map(|(i, &anom)| {
                let p = if anom { &anomalous } else { &base };
                let mut g = mixhop_graph(i, p, &mut rng)?;
                g.class_label = Some(i64::from(anom));
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;

        let train = GraphDatabase {
            anomaly_flags: Some(vec![false; self.n_train]),
            split_tag: SplitTag::Train,
            ..GraphDatabase::new(train_graphs)
        };
        let test = GraphDatabase {
            anomaly_flags: Some(flags),
            split_tag: SplitTag::Test,
            ..GraphDatabase::new(test_graphs)
        };
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, labels: usize) -> MixhopParams {
        MixhopParams {
            nodes_per_graph: 50,
            ba_m: 2,
            homophily: h,
            n_labels: labels,
        }
    }

    #[test]
    fn ba_edge_count() {
        let db = generate_mixhop(10, &params(0.5, 5), 1).unwrap();
        for g in &db.graphs {
            assert_eq!(g.node_count(), 50);
            assert_eq!(g.edge_count(), 2 * (50 - 2));
        }
    }

    #[test]
    fn single_label_full_homophily_is_connected() {
        let db = generate_mixhop(5, &params(1.0, 1), 2).unwrap();
        assert_eq!(same_label_fraction(&db), 1.0);
        for g in &db.graphs {
            let mut seen = vec![false; g.node_count()];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &(u, _) in g.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn homophily_controls_label_mixing() {
        let hi = same_label_fraction(&generate_mixhop(30, &params(0.7, 5), 3).unwrap());
        let lo = same_label_fraction(&generate_mixhop(30, &params(0.3, 5), 3).unwrap());
        assert!(hi > lo + 0.2, "hi {hi} lo {lo}");
    }

    #[test]
    fn rejects_small_graphs() {
        assert!(matches!(generate_mixhop(1, &params(0.5, 5).with_nodes(2), 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn benchmark_layout() {
        let (train, test) = MixhopBenchmark::standard().generate(4).unwrap();
        assert_eq!(train.len(), 150);
        assert_eq!(test.len(), 100);
        let flags = test.anomaly_flags.as_ref().unwrap();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 5);
        assert_eq!(MixhopBenchmark::standard().generate(4).unwrap().1, test);
    }

    impl MixhopParams {
        fn with_nodes(mut self, n: usize) -> Self {
            self.nodes_per_graph = n;
            self
        }
    }
}
