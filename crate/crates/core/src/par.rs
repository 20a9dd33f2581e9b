//! Data-parallel helpers.
//!
//! With the `parallel` feature the helpers fan work out over rayon; without
//! it they run sequentially. Results are always collected in input order and
//! reduced sequentially, so output is bit-identical in both modes.

/// How a batch of independent work items is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
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

/// Maps `f` over `0..n`, preserving order.
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

/// Splits `0..n` into fixed chunks, runs `f` on each chunk to produce a
/// partial sum vector of length `dim`, then adds the partials in chunk order.
pub fn chunked_sum<F>(exec: Exec, n: usize, chunk: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    if n_chunks <= 1 {
        let mut acc = vec![0.0; dim];
        if n > 0 {
            f(0..n, &mut acc);
        }
        return acc;
    }
    let partials = map_range(exec, n_chunks, |c| {
        let mut acc = vec![0.0; dim];
        f(c * chunk..((c + 1) * chunk).min(n), &mut acc);
        acc
    });
    let mut total = vec![0.0; dim];
    for p in partials {
        crate::param::axpy(1.0, &p, &mut total);
    }
    total
}
