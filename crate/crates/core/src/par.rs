//! Data-parallel helpers. With the `parallel` feature the batch kernels run
//! on rayon; without it they fall back to plain iterators. Results are always
//! collected in index order, and reductions are done sequentially on the
//! collected vector so that floating-point sums do not depend on scheduling.

/// Execution policy for batch kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Exec {
    /// Parallel when the crate is built with the `parallel` feature.
    pub const fn default_policy() -> Exec {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Default for Exec {
    fn default() -> Self {
        Exec::default_policy()
    }
}

/// `(0..n).map(f).collect()` under the given policy.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// `items.iter().map(f).collect()` under the given policy.
pub fn map_slice<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let a = map_range(Exec::Sequential, 100, |i| (i as f64).sin());
        let b = map_range(Exec::Parallel, 100, |i| (i as f64).sin());
        assert_eq!(a, b);
    }
}
