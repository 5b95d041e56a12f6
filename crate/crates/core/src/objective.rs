//! Deep-SVDD objective: a fixed hypersphere center, the squared-distance
//! loss with weight decay, and distance-to-center anomaly scores.

use ndarray::Array1;

use crate::numkit::ParamSet;

/// Mean of the pooled graph representations.
pub fn init_center(pooled: &[Array1<f64>]) -> Array1<f64> {
    assert!(!pooled.is_empty(), "center of an empty collection");
    let mut c = Array1::zeros(pooled[0].len());
    for h in pooled {
        assert_eq!(h.len(), c.len(), "pooled vectors differ in dimension");
        c += h;
    }
    c / pooled.len() as f64
}

pub fn squared_distance(h: &Array1<f64>, c: &Array1<f64>) -> f64 {
    assert_eq!(h.len(), c.len(), "dimension mismatch against the center");
    h.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `mean_i |h_i - c|^2 + (lambda / 2) * sum_l |W_l|_F^2`.
pub fn svdd_loss(pooled_batch: &[Array1<f64>], center: &Array1<f64>, params: &ParamSet, weight_decay: f64) -> f64 {
    let data = if pooled_batch.is_empty() {
        0.0
    } else {
        pooled_batch.iter().map(|h| squared_distance(h, center)).sum::<f64>() / pooled_batch.len() as f64
    };
    data + 0.5 * weight_decay * params.squared_norm()
}

/// Anomaly score: Euclidean distance to the center.
pub fn distance_score(pooled: &Array1<f64>, center: &Array1<f64>) -> f64 {
    squared_distance(pooled, center).sqrt()
}
