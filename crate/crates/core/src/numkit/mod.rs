//! Dense numerical core: GIN parameters, initialization, SGD with weight
//! decay, checkpoints, and a central-difference gradient oracle.

mod checkpoint;
mod finite_diff;
mod params;

pub use checkpoint::{load_params, save_params, CHECKPOINT_MAGIC};
pub use finite_diff::{finite_diff_at, finite_diff_grad, DEFAULT_FD_STEP};
pub use params::{init_params, sgd_step, GinLayer, GradSet, ParamSet};
