//! Thin switch between rayon and plain loops.
//!
//! Every data-parallel inner loop in the engine goes through these helpers so
//! that a single runtime flag (and the `parallel` cargo feature) selects the
//! execution mode. Results must be identical either way; the helpers are only
//! used where iterations touch disjoint state.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when the crate was built with rayon support.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f(i)` for every `i in 0..n`, in parallel when requested and available.
pub fn for_each_index<F>(parallel: bool, n: usize, f: F)
where
    F: Fn(usize) + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        (0..n).into_par_iter().for_each(&f);
        return;
    }
    let _ = parallel;
    for i in 0..n {
        f(i);
    }
}

/// Maps `f` over `0..n` preserving index order in the output.
pub fn map_indices<T, F>(parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel && n > 1 {
        return (0..n).into_par_iter().map(&f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Runs `f` over mutable disjoint slices, one per entry.
pub fn for_each_slice<T, F>(parallel: bool, slices: Vec<&mut [T]>, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    #[cfg(feature = "parallel")]
    if parallel && slices.len() > 1 {
        slices
            .into_par_iter()
            .enumerate()
            .for_each(|(i, s)| f(i, s));
        return;
    }
    let _ = parallel;
    for (i, s) in slices.into_iter().enumerate() {
        f(i, s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    #[test]
    fn map_preserves_order() {
        let v = map_indices(true, 100, |i| i * 3);
        assert_eq!(v, (0..100).map(|i| i * 3).collect::<Vec<_>>());
    }

    #[test]
    fn for_each_visits_all() {
        let sum = AtomicU64::new(0);
        for_each_index(true, 1000, |i| {
            sum.fetch_add(i as u64, Ordering::Relaxed);
        });
        assert_eq!(sum.load(Ordering::Relaxed), 999 * 1000 / 2);
    }
}
