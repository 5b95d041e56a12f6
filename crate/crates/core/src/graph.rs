//! Graph data model.

use ndarray::Array2;

use crate::error::{Error, Result};

/// How node feature vectors were derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    OneHotLabel,
    Attributes,
    OneHotDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Unsplit,
    Train,
    Test,
}

/// An undirected graph with node features.
///
/// Edges are stored once per pair with `u < v`. Raw node labels and
/// attributes are kept next to the derived `features` matrix so features can
/// be re-derived without reloading.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub graph_id: usize,
    node_count: usize,
    edges: Vec<(usize, usize, f64)>,
    // CSR adjacency, both directions.
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
    pub features: Array2<f64>,
    pub node_labels: Option<Vec<i64>>,
    pub node_attributes: Option<Array2<f64>>,
    pub class_label: Option<i64>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate pairs (in either
    /// orientation) collapse to the first occurrence.
    pub fn new(graph_id: usize, node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Parameter(format!("graph {graph_id} has no nodes")));
        }
        let mut seen = std::collections::HashSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::Parameter(format!(
                    "graph {graph_id}: edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            if a == b {
                return Err(Error::Parameter(format!("graph {graph_id}: self-loop at node {a}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("graph {graph_id}: bad edge weight {w}")));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if seen.insert((u, v)) {
                stored.push((u, v, w));
            }
        }
        let mut degree = vec![0usize; node_count];
        for &(u, v, _) in &stored {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0usize; node_count + 1];
        for i in 0..node_count {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[node_count]];
        for &(u, v, w) in &stored {
            neighbors[fill[u]] = (v, w);
            fill[u] += 1;
            neighbors[fill[v]] = (u, w);
            fill[v] += 1;
        }
        Ok(Graph {
            graph_id,
            node_count,
            edges: stored,
            offsets,
            neighbors,
            features: Array2::zeros((node_count, 0)),
            node_labels: None,
            node_attributes: None,
            class_label: None,
        })
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Self {
        assert_eq!(features.nrows(), self.node_count, "feature rows must match node count");
        self.features = features;
        self
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Weighted neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

/// A collection of graphs sharing one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDatabase {
    pub graphs: Vec<Graph>,
    pub feature_kind: Option<FeatureKind>,
    pub anomaly_flags: Option<Vec<bool>>,
    pub split_tag: SplitTag,
}

impl GraphDatabase {
    pub fn new(graphs: Vec<Graph>) -> Self {
        GraphDatabase {
            graphs,
            feature_kind: None,
            anomaly_flags: None,
            split_tag: SplitTag::Unsplit,
        }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, Graph::feature_dim)
    }

    pub fn graph_ids(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.graph_id).collect()
    }

    /// Checks the database-wide invariants.
    pub fn validate(&self) -> Result<()> {
        let d = self.feature_dim();
        if let Some(g) = self.graphs.iter().find(|g| g.feature_dim() != d) {
            return Err(Error::Parameter(format!(
                "graph {} has {} feature columns, expected {d}",
                g.graph_id,
                g.feature_dim()
            )));
        }
        if let Some(flags) = &self.anomaly_flags {
            if flags.len() != self.graphs.len() {
                return Err(Error::Parameter("anomaly flag count differs from graph count".into()));
            }
            if self.split_tag == SplitTag::Train && flags.iter().any(|&f| f) {
                return Err(Error::Parameter("training database contains flagged anomalies".into()));
            }
        }
        Ok(())
    }
}
