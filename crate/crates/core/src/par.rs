//! Execution switch for the data-parallel inner loops.
//!
//! Batch work in this crate (record validation, batch revision, agreement
//! sums) goes through [`Exec`]. With the `parallel` feature the parallel arm
//! runs on rayon; without it both arms run sequentially, so callers never
//! need their own `cfg` gates.

/// How a batch operation should be executed.
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

impl Exec {
    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Order-preserving map with at most `max_in_flight` concurrent calls.
    pub fn map_bounded<T, U, F>(self, items: &[T], max_in_flight: usize, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(not(feature = "parallel"))]
        let _ = max_in_flight;
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if max_in_flight > 1 => {
                use rayon::prelude::*;
                match rayon::ThreadPoolBuilder::new()
                    .num_threads(max_in_flight)
                    .build()
                {
                    Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                    Err(err) => {
                        log::warn!("falling back to sequential execution: {err}");
                        items.iter().map(f).collect()
                    }
                }
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Sum of `f` over a slice.
    pub fn sum<T, F>(self, items: &[T], f: F) -> f64
    where
        T: Sync,
        F: Fn(&T) -> f64 + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).sum()
            }
            _ => items.iter().map(f).sum(),
        }
    }
}
