//! Row-parallel construction of dense matrices.
//!
//! Every row is produced by one closure call that writes its entries in index
//! order, so results are bitwise identical for any thread count.

use ndarray::Array2;
use rayon::prelude::*;

/// Environment variable capping the worker count of the global pool.
pub const THREADS_ENV: &str = "INFOOT_THREADS";

/// Fill an `rows × cols` matrix row by row in parallel.
pub fn build_rows<F>(rows: usize, cols: usize, fill: F) -> Array2<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut data = vec![0.0; rows * cols];
    if cols > 0 {
        data.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| fill(i, row));
    }
    Array2::from_shape_vec((rows, cols), data).expect("shape matches buffer length")
}

/// Configure the global rayon pool from `INFOOT_THREADS` if set.
///
/// Returns the thread count in effect. Calling it more than once is harmless;
/// the first successful configuration wins.
pub fn init_from_env() -> usize {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = requested {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    rayon::current_num_threads()
}
