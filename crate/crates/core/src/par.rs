//! Index-parallel helpers. With the `parallel` feature they run on the
//! rayon pool; without it they are plain loops. Results never depend on
//! which path ran.

/// `(0..n).map(f)`, collected in index order.
#[cfg(feature = "parallel")]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Pairwise tree reduction by index: `[a, b, c, d, e]` folds as
/// `((a·b)·(c·d))·e`. The shape depends only on `items.len()`.
pub fn tree_reduce<T>(mut items: Vec<T>, mut combine: impl FnMut(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => combine(a, b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}

/// Whether work is dispatched to a thread pool.
pub const PARALLEL: bool = cfg!(feature = "parallel");
