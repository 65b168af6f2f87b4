//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the rayon pool; without
//! it they run on the calling thread. Callers rely on the guarantee that the
//! output is identical either way: each element is produced independently
//! and collected in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this element count the work is not worth a parallel dispatch.
pub const MIN_PAR_LEN: usize = 1024;

/// Maps `0..n` to a vector, in parallel when `n` is large enough.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_PAR_LEN {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Maps a slice to a vector, in parallel when large enough.
pub fn map_slice<'a, S, T, F>(items: &'a [S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() >= 2 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}
