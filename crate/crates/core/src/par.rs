//! Data-parallel helpers. With the `parallel` feature the work is spread over
//! the rayon pool; without it the same closures run sequentially. Results are
//! returned in input order either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for batch work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[default]
    Auto,
    Sequential,
}

/// `items.map(f).collect()`, parallel when the feature is on and `exec`
/// allows it.
pub fn map_collect<T, R, F>(items: &[T], exec: Exec, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Auto => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Index-based variant of [`map_collect`].
pub fn map_range<R, F>(n: usize, exec: Exec, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Auto => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_collect(&xs, Exec::Auto, |x| x * x);
        let b = map_collect(&xs, Exec::Sequential, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(map_range(5, Exec::Auto, |i| i + 1), vec![1, 2, 3, 4, 5]);
    }
}
