//! Gaussian node kernel, its set (mean-embedding) kernel, and MMD.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::seed::Rng;

pub const DEFAULT_MEDIAN_SAMPLE_CAP: usize = 1000;

/// `exp(-gamma * |x - y|^2)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    assert_eq!(x.len(), y.len(), "kernel arguments differ in dimension");
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

fn row_sq_norms(a: ArrayView2<f64>) -> Array1<f64> {
    a.map_axis(Axis(1), |r| r.dot(&r))
}

/// Node-by-node Gaussian kernel matrix between two sets.
pub fn cross_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> Array2<f64> {
    assert_eq!(a.ncols(), b.ncols(), "sets differ in embedding dimension");
    let na = row_sq_norms(a);
    let nb = row_sq_norms(b);
    let mut k = a.dot(&b.t());
    for (i, mut row) in k.axis_iter_mut(Axis(0)).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
            *v = (-gamma * d2).exp();
        }
    }
    k
}

/// Empirical mean-embedding inner product: the average kernel value over
/// all node pairs, self-pairs included.
pub fn set_kernel(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> f64 {
    assert!(a.nrows() > 0 && b.nrows() > 0, "set kernel of an empty set");
    cross_kernel(a, b, gamma).mean().expect("non-empty")
}

/// Biased (V-statistic) squared MMD.
pub fn mmd_squared(a: ArrayView2<f64>, b: ArrayView2<f64>, gamma: f64) -> f64 {
    set_kernel(a, a, gamma) + set_kernel(b, b, gamma) - 2.0 * set_kernel(a, b, gamma)
}

/// Gradients of `weight * set_kernel(a, b)` with respect to every row of
/// `a` and of `b`, with `gamma` held constant. `k` is the precomputed
/// [`cross_kernel`] of the pair.
pub fn set_kernel_backward(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    k: &Array2<f64>,
    gamma: f64,
    weight: f64,
) -> (Array2<f64>, Array2<f64>) {
    let scale = -2.0 * gamma * weight / (a.nrows() * b.nrows()) as f64;
    // d/da_u = scale * sum_v k_uv (a_u - b_v)
    let row_sums = k.sum_axis(Axis(1));
    let col_sums = k.sum_axis(Axis(0));
    let mut da = k.dot(&b);
    for (u, mut r) in da.axis_iter_mut(Axis(0)).enumerate() {
        let s = row_sums[u];
        for (x, &au) in r.iter_mut().zip(a.row(u)) {
            *x = scale * (s * au - *x);
        }
    }
    let mut db = k.t().dot(&a);
    for (v, mut r) in db.axis_iter_mut(Axis(0)).enumerate() {
        let s = col_sums[v];
        for (x, &bv) in r.iter_mut().zip(b.row(v)) {
            *x = scale * (s * bv - *x);
        }
    }
    (da, db)
}

/// Bandwidth `1 / median(|x - y|^2)` over node-vector pairs pooled from all
/// sets. Uses every pair when there are at most `sample_cap` of them and
/// `sample_cap` random pairs otherwise. Falls back to 1 when the median is
/// zero or fewer than two vectors exist.
pub fn median_heuristic(sets: &[ArrayView2<f64>], sample_cap: usize, rng: &mut Rng) -> f64 {
    let rows: Vec<_> = sets.iter().flat_map(|s| s.rows()).collect();
    let n = rows.len();
    if n < 2 {
        return 1.0;
    }
    let d2 = |i: usize, j: usize| {
        rows[i]
            .iter()
            .zip(rows[j].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let total_pairs = n * (n - 1) / 2;
    let mut dists: Vec<f64> = if total_pairs <= sample_cap {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d2(i, j)).collect()
    } else {
        (0..sample_cap.max(1))
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                d2(i, j)
            })
            .collect()
    };
    let median = median(&mut dists);
    if median > 0.0 && median.is_finite() {
        1.0 / median
    } else {
        1.0
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}
