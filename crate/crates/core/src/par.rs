//! Order-preserving parallel map over task indices.
//!
//! With the `std` feature the work is spread over the current rayon pool;
//! without it the loop is sequential. Either way `out[i] = f(i)`, so callers
//! that derive all randomness from the index get schedule-independent output.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..len).map(f).collect()
}
