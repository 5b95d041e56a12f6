use ndarray::Array2;
use rand::Rng as _;

use crate::seed;

/// Two no-bias weight matrices of one GIN layer's MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    /// `d_prev x d_hidden`, followed by ReLU.
    pub w1: Array2<f64>,
    /// `d_hidden x d_hidden`, linear output.
    pub w2: Array2<f64>,
}

impl GinLayer {
    fn zeros_like(&self) -> Self {
        GinLayer {
            w1: Array2::zeros(self.w1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
        }
    }
}

/// Parameters of an L-layer GIN encoder. There are no bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<GinLayer>,
    /// Per-layer self-weight offset; held fixed during training.
    pub epsilons: Vec<f64>,
    pub d_in: usize,
    pub d_hidden: usize,
}

impl ParamSet {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zeros(d_in: usize, d_hidden: usize, num_layers: usize) -> Self {
        let layers = (0..num_layers)
            .map(|l| GinLayer {
                w1: Array2::zeros((if l == 0 { d_in } else { d_hidden }, d_hidden)),
                w2: Array2::zeros((d_hidden, d_hidden)),
            })
            .collect();
        ParamSet {
            layers,
            epsilons: vec![0.0; num_layers],
            d_in,
            d_hidden,
        }
    }

    /// Sum of squared Frobenius norms over every weight matrix.
    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w1.iter().chain(l.w2.iter()).map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w1.len() + l.w2.len()).sum()
    }

    /// Flat view in the order layer, `w1` row-major, `w2` row-major.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w1.iter().chain(l.w2.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w1.iter_mut().chain(l.w2.iter_mut()))
    }

    pub fn get(&self, index: usize) -> f64 {
        *self.iter().nth(index).expect("parameter index out of range")
    }

    pub fn set(&mut self, index: usize, value: f64) {
        *self.iter_mut().nth(index).expect("parameter index out of range") = value;
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|w| w.is_finite())
    }
}

/// Gradient accumulator congruent with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub layers: Vec<GinLayer>,
}

impl GradSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradSet {
            layers: params.layers.iter().map(GinLayer::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradSet) {
        assert_eq!(self.layers.len(), other.layers.len(), "gradient shape mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w1 += &b.w1;
            a.w2 += &b.w2;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w1 *= s;
            l.w2 *= s;
        }
    }

    /// Adds `lambda * W` for every weight (the weight-decay gradient).
    pub fn add_decay(&mut self, params: &ParamSet, lambda: f64) {
        for (g, w) in self.layers.iter_mut().zip(&params.layers) {
            g.w1.scaled_add(lambda, &w.w1);
            g.w2.scaled_add(lambda, &w.w2);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w1.iter().chain(l.w2.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w1.iter_mut().chain(l.w2.iter_mut()))
    }

    pub fn is_congruent(&self, params: &ParamSet) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, w)| g.w1.dim() == w.w1.dim() && g.w2.dim() == w.w2.dim())
    }
}

/// Glorot-uniform initialization with every epsilon at zero.
pub fn init_params(d_in: usize, d_hidden: usize, num_layers: usize, seed: u64) -> ParamSet {
    assert!(d_in > 0 && d_hidden > 0 && num_layers > 0, "dimensions must be positive");
    let mut rng = seed::rng(seed);
    let mut params = ParamSet::zeros(d_in, d_hidden, num_layers);
    for layer in &mut params.layers {
        for w in [&mut layer.w1, &mut layer.w2] {
            let (fan_in, fan_out) = w.dim();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
    }
    params
}

/// `W <- W - lr * (g + weight_decay * W)` for every weight matrix.
pub fn sgd_step(params: &mut ParamSet, grads: &GradSet, lr: f64, weight_decay: f64) {
    assert!(grads.is_congruent(params), "gradient shape mismatch");
    for (w, g) in params.layers.iter_mut().zip(&grads.layers) {
        w.w1.zip_mut_with(&g.w1, |w, &g| *w -= lr * (g + weight_decay * *w));
        w.w2.zip_mut_with(&g.w2, |w, &g| *w -= lr * (g + weight_decay * *w));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_params(3, 4, 2, 11), init_params(3, 4, 2, 11));
        assert_ne!(init_params(3, 4, 2, 0), init_params(3, 4, 2, 1));
    }

    #[test]
    fn shapes_chain() {
        let p = init_params(3, 4, 2, 0);
        let shapes: Vec<_> = p.layers.iter().map(|l| (l.w1.dim(), l.w2.dim())).collect();
        assert_eq!(shapes, vec![((3, 4), (4, 4)), ((4, 4), (4, 4))]);
        assert_eq!(p.epsilons, vec![0.0, 0.0]);
    }

    #[test]
    fn init_respects_glorot_bound() {
        let p = init_params(5, 8, 1, 3);
        let b1 = (6.0f64 / 13.0).sqrt();
        assert!(p.layers[0].w1.iter().all(|w| w.abs() <= b1));
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut p = init_params(2, 3, 2, 5);
        let before = p.clone();
        sgd_step(&mut p, &GradSet::zeros_like(&before), 0.5, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn decay_only_scales() {
        let mut p = init_params(2, 3, 1, 5);
        let before = p.clone();
        sgd_step(&mut p, &GradSet::zeros_like(&before), 0.5, 0.1);
        for (a, b) in p.iter().zip(before.iter()) {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_descent_decreases_quadratic() {
        // f(W) = ||W - T||^2 / 2 has gradient W - T.
        let mut p = init_params(2, 2, 1, 1);
        let target = init_params(2, 2, 1, 2);
        let f = |p: &ParamSet| p.iter().zip(target.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
        let f0 = f(&p);
        let mut g = GradSet::zeros_like(&p);
        for ((gi, a), b) in g.iter_mut().zip(p.iter()).zip(target.iter()) {
            *gi = a - b;
        }
        sgd_step(&mut p, &g, 0.1, 0.0);
        assert!(f(&p) < f0);
    }

    proptest! {
        #[test]
        fn sgd_matches_elementwise(seed in 0u64..1000, lr in 1e-4f64..1.0, wd in 0.0f64..0.5) {
            let p0 = init_params(3, 2, 2, seed);
            let gsrc = init_params(3, 2, 2, seed + 1);
            let mut g = GradSet::zeros_like(&p0);
            for (gi, v) in g.iter_mut().zip(gsrc.iter()) {
                *gi = *v;
            }
            let mut p = p0.clone();
            sgd_step(&mut p, &g, lr, wd);
            let expected: Vec<f64> = p0.iter().zip(g.iter()).map(|(&w, &gi)| w - lr * (gi + wd * w)).collect();
            for (a, b) in p.iter().zip(&expected) {
                prop_assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
            }
        }
    }
}
