pub mod continual;
pub mod fit;
pub mod ntk;
pub mod plot;
pub mod sweep;
pub mod td;

use rayon::prelude::*;

use crate::error::CliError;

/// Seeds to run: the `--seed` override, or the config list.
pub fn seeds(flag: Option<u64>, config: &[u64]) -> Result<Vec<u64>, CliError> {
    match flag {
        Some(s) => Ok(vec![s]),
        None if config.is_empty() => Err(CliError::Config("`seeds` must not be empty".into())),
        None => Ok(config.to_vec()),
    }
}

/// Runs `f` over `items` on `jobs` threads and returns results in input order.
pub fn parallel<I, T, F>(jobs: usize, items: Vec<I>, f: F) -> Result<Vec<T>, CliError>
where
    I: Send,
    T: Send,
    F: Fn(I) -> Result<T, CliError> + Sync + Send,
{
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    if jobs == 1 {
        return items.into_iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Shortest representation that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        f64::NAN
    } else {
        ratact_core::diagnostics::percentile_sorted(&s, 0.5)
    }
}
