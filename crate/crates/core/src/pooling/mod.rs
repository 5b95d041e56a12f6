//! Graph-level readouts: mean pooling for point anomalies and MMD pooling
//! (Gaussian set kernel plus Nyström feature map) for distribution anomalies.

mod kernel;
mod nystrom;

pub use kernel::{
    cross_kernel, gaussian_kernel, median_heuristic, mmd_squared, set_kernel, set_kernel_backward,
    DEFAULT_MEDIAN_SAMPLE_CAP,
};
pub use nystrom::{landmark_gram, nystrom_fit, BandwidthRule, KernelConfig, NystromMap, DEFAULT_EIGEN_CUTOFF};

use ndarray::{Array1, Axis};

use crate::encoder::EmbeddingSet;

/// Arithmetic mean of the node embeddings.
pub fn mean_pool(set: &EmbeddingSet) -> Array1<f64> {
    assert!(!set.is_empty(), "cannot pool an empty embedding set");
    set.vectors.mean_axis(Axis(0)).expect("non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(v: ndarray::Array2<f64>) -> EmbeddingSet {
        EmbeddingSet { graph_id: 0, vectors: v }
    }

    #[test]
    fn mean_of_identical_rows() {
        let s = set(array![[1.5, -2.0], [1.5, -2.0], [1.5, -2.0]]);
        assert_eq!(mean_pool(&s).to_vec(), vec![1.5, -2.0]);
    }

    #[test]
    fn mean_of_unit_vectors() {
        assert_eq!(mean_pool(&set(array![[1.0, 0.0], [0.0, 1.0]])).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let a = mean_pool(&set(array![[1.0, 2.0], [3.0, 5.0], [-1.0, 0.5]]));
        let b = mean_pool(&set(array![[3.0, 5.0], [-1.0, 0.5], [1.0, 2.0]]));
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    #[should_panic]
    fn empty_set_panics() {
        mean_pool(&set(ndarray::Array2::zeros((0, 2))));
    }
}
