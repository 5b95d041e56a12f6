//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] fans work out
//! over the rayon pool; without it every call runs sequentially. Results are
//! always returned in input order so callers can reduce deterministically.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f` on a dedicated pool of `workers` threads (or the global pool when
/// `workers` is `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let xs: Vec<u64> = (0..100).collect();
        let a = map(Execution::Sequential, &xs, |x| x * x);
        let b = map(Execution::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(Execution::Parallel, 5, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
