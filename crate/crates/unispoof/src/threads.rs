//! Worker pool for the block sweep, sized by `UNISPOOF_THREADS`.

use crate::error::{CliError, Result};

pub const ENV: &str = "UNISPOOF_THREADS";

pub enum Workers {
    /// Run on the calling thread.
    Sequential,
    Pool(rayon::ThreadPool),
}

/// `UNISPOOF_THREADS=0` or `1` runs sequentially; unset uses one worker per core.
pub fn worker_pool() -> Result<Workers> {
    let n = match std::env::var(ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{ENV}={v:?} is not a thread count")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if n <= 1 {
        return Ok(Workers::Sequential);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Workers::Pool)
        .map_err(|e| CliError::Failed(e.to_string()))
}
