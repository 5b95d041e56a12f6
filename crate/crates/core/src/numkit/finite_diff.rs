use super::{GradSet, ParamSet};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `loss` at `params` for every weight.
pub fn finite_diff_grad(loss: impl Fn(&ParamSet) -> f64, params: &ParamSet, step: f64) -> GradSet {
    let idx: Vec<usize> = (0..params.param_count()).collect();
    let values = finite_diff_at(loss, params, &idx, step);
    let mut g = GradSet::zeros_like(params);
    for (gi, v) in g.iter_mut().zip(values) {
        *gi = v;
    }
    g
}

/// Central differences for the selected flat parameter indices only.
pub fn finite_diff_at(loss: impl Fn(&ParamSet) -> f64, params: &ParamSet, indices: &[usize], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut p = params.clone();
    indices
        .iter()
        .map(|&i| {
            let w = params.get(i);
            p.set(i, w + step);
            let up = loss(&p);
            p.set(i, w - step);
            let down = loss(&p);
            p.set(i, w);
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::init_params;

    #[test]
    fn half_squared_norm_gives_weights() {
        let p = init_params(3, 4, 2, 7);
        let g = finite_diff_grad(|p| p.squared_norm() / 2.0, &p, DEFAULT_FD_STEP);
        for (a, b) in g.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let p = init_params(2, 2, 1, 1);
        let g = finite_diff_grad(|_| 3.5, &p, DEFAULT_FD_STEP);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
