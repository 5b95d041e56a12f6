//! Nyström feature map for the set kernel.
//!
//! Given landmark sets `B`, the Gram matrix `K_BB = V Λ Vᵀ` is factored and
//! every graph is embedded as `H_i = κ(S_i, B) V_r Λ_r^{-1/2}`, so that
//! `H Hᵀ = K_GB K_BB⁺ K_GBᵀ`. Eigenvalues at or below
//! `eigen_cutoff * λ_max` (or non-positive) are dropped.
//!
//! Training uses the *aligned* embedding `H_i V_rᵀ`, which lives in the
//! k-dimensional landmark coordinates. It is an isometric image of `H_i`
//! but does not depend on the eigenvector basis, so a center fixed once
//! stays meaningful when the factor is refit.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use super::kernel::set_kernel;
use crate::encoder::EmbeddingSet;
use crate::error::{Error, Result};

pub const DEFAULT_EIGEN_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthRule {
    Fixed,
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// Gaussian parameter `gamma` in `exp(-gamma |x - y|^2)`.
    pub bandwidth: f64,
    pub bandwidth_rule: BandwidthRule,
    /// Relative eigenvalue threshold in `[0, 1)`.
    pub eigen_cutoff: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: 1.0,
            bandwidth_rule: BandwidthRule::MedianHeuristic,
            eigen_cutoff: DEFAULT_EIGEN_CUTOFF,
        }
    }
}

impl KernelConfig {
    pub fn fixed(bandwidth: f64) -> Self {
        KernelConfig {
            bandwidth,
            bandwidth_rule: BandwidthRule::Fixed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NystromMap {
    pub landmark_ids: Vec<usize>,
    pub landmarks: Vec<EmbeddingSet>,
    /// `k x r` matrix `V_r Λ_r^{-1/2}`.
    pub factor: Array2<f64>,
    /// `k x k` matrix `V_r Λ_r^{-1/2} V_rᵀ`.
    pub aligned_factor: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub kernel_config: KernelConfig,
}

impl NystromMap {
    pub fn num_landmarks(&self) -> usize {
        self.landmarks.len()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.kernel_config.bandwidth
    }

    /// Set-kernel values of `set` against every landmark.
    pub fn kernel_row(&self, set: &EmbeddingSet) -> Array1<f64> {
        let d = self.landmarks.first().map_or(0, EmbeddingSet::dim);
        assert_eq!(set.dim(), d, "embedding dimension differs from the landmarks'");
        self.landmarks
            .iter()
            .map(|b| set_kernel(set.vectors.view(), b.vectors.view(), self.gamma()))
            .collect()
    }

    /// MMD pooling: the r-dimensional Nyström embedding of `set`.
    pub fn mmd_pool(&self, set: &EmbeddingSet) -> Array1<f64> {
        self.kernel_row(set).dot(&self.factor)
    }

    /// The same embedding expressed in landmark coordinates (k-dimensional).
    pub fn mmd_pool_aligned(&self, set: &EmbeddingSet) -> Array1<f64> {
        self.kernel_row(set).dot(&self.aligned_factor)
    }
}

/// Landmark Gram matrix under the set kernel.
pub fn landmark_gram(landmarks: &[EmbeddingSet], gamma: f64) -> Array2<f64> {
    let k = landmarks.len();
    let mut gram = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let v = set_kernel(landmarks[i].vectors.view(), landmarks[j].vectors.view(), gamma);
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
    }
    gram
}

pub fn nystrom_fit(landmarks: Vec<EmbeddingSet>, config: KernelConfig) -> Result<NystromMap> {
    if landmarks.is_empty() {
        return Err(Error::Parameter("Nyström map needs at least one landmark".into()));
    }
    assert!(config.bandwidth > 0.0, "bandwidth must be positive");
    let gram = landmark_gram(&landmarks, config.bandwidth);
    let (factor, aligned_factor, eigenvalues) = factorize(&gram, config.eigen_cutoff)?;
    Ok(NystromMap {
        landmark_ids: landmarks.iter().map(|s| s.graph_id).collect(),
        landmarks,
        factor,
        aligned_factor,
        eigenvalues,
        kernel_config: config,
    })
}

type Factors = (Array2<f64>, Array2<f64>, Vec<f64>);

fn factorize(gram: &Array2<f64>, cutoff: f64) -> Result<Factors> {
    let k = gram.nrows();
    let m = DMatrix::from_fn(k, k, |i, j| gram[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| {
            let l = eig.eigenvalues[j];
            l > 0.0 && l > cutoff * lmax
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("every landmark Gram eigenvalue was discarded".into()));
    }
    let r = kept.len();
    let mut vecs = Array2::zeros((k, r));
    for (c, &j) in kept.iter().enumerate() {
        let col = eig.eigenvectors.column(j);
        // fix the sign: largest-magnitude entry positive
        let pivot = (0..k).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            vecs[[i, c]] = sign * col[i];
        }
    }
    let eigenvalues: Vec<f64> = kept.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut factor = vecs.clone();
    for (c, &l) in eigenvalues.iter().enumerate() {
        factor.column_mut(c).mapv_inplace(|v| v / l.sqrt());
    }
    let aligned = factor.dot(&vecs.t());
    Ok((factor, aligned, eigenvalues))
}
