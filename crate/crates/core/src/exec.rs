//! Sequential / data-parallel execution switch.
//!
//! Hot loops (record parsing, baseline scoring, per-root BFS, per-cascade
//! generation, similarity matrices) go through [`Exec`]. Every parallel path
//! collects in input order, so results are identical to the sequential path
//! regardless of worker count.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] silently runs the
//! sequential path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when this mode actually fans out to a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Fold fixed-size chunks independently and merge the partial results
    /// left to right. Chunk boundaries do not depend on the thread count.
    pub fn fold_chunks<T, A, F, M>(self, items: &[T], chunk: usize, init: A, fold: F, merge: M) -> A
    where
        T: Sync,
        A: Clone + Send + Sync,
        F: Fn(A, &T) -> A + Sync + Send,
        M: Fn(A, A) -> A,
    {
        let chunk = chunk.max(1);
        let partials: Vec<A> = {
            let run = |c: &[T]| c.iter().fold(init.clone(), &fold);
            #[cfg(feature = "parallel")]
            {
                if self == Exec::Parallel {
                    items.par_chunks(chunk).map(run).collect()
                } else {
                    items.chunks(chunk).map(run).collect()
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.chunks(chunk).map(run).collect()
            }
        };
        partials.into_iter().fold(init, merge)
    }
}

/// Run `f` with at most `threads` workers. `None` uses the global pool.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..10_000).collect();
        let a = Exec::Sequential.map(&xs, |x| x * 3);
        let b = Exec::Parallel.map(&xs, |x| x * 3);
        assert_eq!(a, b);
        let s1 = Exec::Sequential.fold_chunks(&xs, 97, 0u64, |a, x| a + x, |a, b| a + b);
        let s2 = with_threads(Some(3), || {
            Exec::Parallel.fold_chunks(&xs, 97, 0u64, |a, x| a + x, |a, b| a + b)
        });
        assert_eq!(s1, s2);
        assert_eq!(s1, 10_000 * 9_999 / 2);
    }
}
