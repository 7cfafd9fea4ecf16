//! Order-preserving trial fan-out.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Evaluates `f(0..n)` and returns the results in index order.
///
/// `threads = None` runs sequentially on the caller's thread; `Some(t)` runs
/// on a dedicated pool of `t` workers. Output order never depends on
/// scheduling.
pub fn map_indexed<T, F>(n: usize, threads: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match threads {
        None | Some(1) => Ok((0..n).map(f).collect()),
        Some(0) => Err(Error::InvalidParameter("thread count must be >= 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
        }
    }
}
