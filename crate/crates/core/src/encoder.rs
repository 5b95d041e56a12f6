//! GIN message passing.
//!
//! Layer `l` computes `h_v = MLP_l((1 + eps_l) h_v + sum_{u in N(v)} w_uv h_u)`
//! with `MLP_l(x) = relu(x W1) W2`. Neighbor sums are raw (no degree
//! normalization); isolated nodes receive a zero message.

use ndarray::{Array2, ArrayView2, Zip};

use crate::graph::Graph;
use crate::numkit::{GradSet, ParamSet};

/// Node embeddings of one graph, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub graph_id: usize,
    pub vectors: Array2<f64>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// `(1 + eps) h_v + sum_u w_uv h_u` for every node.
pub fn aggregate(graph: &Graph, h: ArrayView2<f64>, eps: f64) -> Array2<f64> {
    let mut out = h.to_owned();
    out *= 1.0 + eps;
    // Symmetric adjacency: the same routine is its own adjoint.
    for v in 0..graph.node_count() {
        let mut row = out.row_mut(v);
        for &(u, w) in graph.neighbors(v) {
            row.scaled_add(w, &h.row(u));
        }
    }
    out
}

/// Cached activations of one forward pass, consumed by [`gin_backward`].
#[derive(Debug, Clone)]
pub struct GinTrace {
    layers: Vec<LayerTrace>,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    aggregated: Array2<f64>,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
}

impl GinTrace {
    /// Pre-MLP aggregated input of layer `l`.
    pub fn aggregated(&self, l: usize) -> &Array2<f64> {
        &self.layers[l].aggregated
    }
}

fn check_dims(graph: &Graph, params: &ParamSet) {
    assert_eq!(
        graph.feature_dim(),
        params.d_in,
        "graph {} has {} feature columns but the encoder expects {}",
        graph.graph_id,
        graph.feature_dim(),
        params.d_in
    );
}

pub fn gin_forward(graph: &Graph, params: &ParamSet) -> EmbeddingSet {
    check_dims(graph, params);
    let mut h = graph.features.clone();
    for (layer, &eps) in params.layers.iter().zip(&params.epsilons) {
        let a = aggregate(graph, h.view(), eps);
        let mut z = a.dot(&layer.w1);
        z.mapv_inplace(|x| x.max(0.0));
        h = z.dot(&layer.w2);
    }
    EmbeddingSet {
        graph_id: graph.graph_id,
        vectors: h,
    }
}

pub fn gin_forward_traced(graph: &Graph, params: &ParamSet) -> (EmbeddingSet, GinTrace) {
    check_dims(graph, params);
    let mut h = graph.features.clone();
    let mut layers = Vec::with_capacity(params.num_layers());
    for (layer, &eps) in params.layers.iter().zip(&params.epsilons) {
        let aggregated = aggregate(graph, h.view(), eps);
        let pre_relu = aggregated.dot(&layer.w1);
        let hidden = pre_relu.mapv(|x| x.max(0.0));
        h = hidden.dot(&layer.w2);
        layers.push(LayerTrace {
            aggregated,
            pre_relu,
            hidden,
        });
    }
    (
        EmbeddingSet {
            graph_id: graph.graph_id,
            vectors: h,
        },
        GinTrace { layers },
    )
}

/// Accumulates into `grads` the gradient of a scalar loss whose derivative
/// with respect to the output embeddings is `d_out`.
pub fn gin_backward(graph: &Graph, params: &ParamSet, trace: &GinTrace, d_out: Array2<f64>, grads: &mut GradSet) {
    let mut dh = d_out;
    for l in (0..params.num_layers()).rev() {
        let lt = &trace.layers[l];
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        // h = hidden W2
        g.w2 += &lt.hidden.t().dot(&dh);
        let mut dz = dh.dot(&layer.w2.t());
        Zip::from(&mut dz).and(&lt.pre_relu).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        // z = aggregated W1
        g.w1 += &lt.aggregated.t().dot(&dz);
        if l > 0 {
            let da = dz.dot(&layer.w1.t());
            dh = aggregate(graph, da.view(), params.epsilons[l]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_grad, init_params};
    use ndarray::array;

    fn path3() -> Graph {
        Graph::new(0, 3, &[(0, 1, 1.0), (1, 2, 1.0)])
            .unwrap()
            .with_features(array![[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]])
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let p = crate::numkit::ParamSet::zeros(2, 4, 2);
        let e = gin_forward(&path3(), &p);
        assert!(e.vectors.iter().all(|&x| x == 0.0));
        assert_eq!(e.vectors.dim(), (3, 4));
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let g = Graph::new(0, 1, &[]).unwrap().with_features(array![[0.5, -1.0]]);
        let p = init_params(2, 3, 1, 4);
        let e = gin_forward(&g, &p);
        let expected = g.features.dot(&p.layers[0].w1).mapv(|x| x.max(0.0)).dot(&p.layers[0].w2);
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn path_aggregation_by_hand() {
        let g = path3();
        let (_, trace) = gin_forward_traced(&g, &init_params(2, 3, 1, 0));
        let a = trace.aggregated(0);
        // b: X_b + X_a + X_c; a: X_a + X_b
        assert_eq!(a.row(1).to_vec(), vec![0.0 + 1.0 + 3.0, 2.0 + 0.0 + 1.0]);
        assert_eq!(a.row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn doubled_weight_equals_duplicated_neighbor() {
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        let g2 = Graph::new(0, 2, &[(0, 1, 2.0)]).unwrap();
        let a2 = aggregate(&g2, x.view(), 0.0);
        let g1 = Graph::new(0, 2, &[(0, 1, 1.0)]).unwrap();
        let mut a1 = aggregate(&g1, x.view(), 0.0);
        a1.row_mut(0).scaled_add(1.0, &x.row(1));
        a1.row_mut(1).scaled_add(1.0, &x.row(0));
        assert_eq!(a1, a2);
    }

    #[test]
    fn permutation_equivariance() {
        let g = path3();
        // relabel 0->2, 1->0, 2->1
        let perm = [2usize, 0, 1];
        let mut feats = Array2::zeros((3, 2));
        for (v, &pv) in perm.iter().enumerate() {
            feats.row_mut(pv).assign(&g.features.row(v));
        }
        let gp = Graph::new(0, 3, &[(perm[0], perm[1], 1.0), (perm[1], perm[2], 1.0)])
            .unwrap()
            .with_features(feats);
        let p = init_params(2, 4, 2, 8);
        let e = gin_forward(&g, &p).vectors;
        let ep = gin_forward(&gp, &p).vectors;
        for (v, &pv) in perm.iter().enumerate() {
            for k in 0..4 {
                assert!((e[[v, k]] - ep[[pv, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn locality_on_a_path() {
        let n = 6;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let mut feats = Array2::from_elem((n, 2), 0.5);
        let g = Graph::new(0, n, &edges).unwrap().with_features(feats.clone());
        feats[[0, 0]] += 1.0;
        let gp = Graph::new(0, n, &edges).unwrap().with_features(feats);
        let p = init_params(2, 8, 2, 3);
        let (e, ep) = (gin_forward(&g, &p).vectors, gin_forward(&gp, &p).vectors);
        for v in 3..n {
            assert_eq!(e.row(v), ep.row(v), "node {v} is beyond 2 hops");
        }
        assert_ne!(e.row(2), ep.row(2));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let g = path3();
        let p = init_params(2, 3, 2, 21);
        let target = init_params(3, 3, 1, 22).layers[0].w1.clone();
        let loss = |p: &ParamSet| {
            let e = gin_forward(&g, p).vectors;
            (&e - &target).mapv(|x| x * x).sum() / 2.0
        };
        let (e, trace) = gin_forward_traced(&g, &p);
        let mut grads = GradSet::zeros_like(&p);
        gin_backward(&g, &p, &trace, &e.vectors - &target, &mut grads);
        let fd = finite_diff_grad(loss, &p, 1e-6);
        for (a, b) in grads.iter().zip(fd.iter()) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
