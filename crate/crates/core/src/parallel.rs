//! Order-preserving map over independent work items, run sequentially or on
//! the rayon pool when the `parallel` feature is enabled.

/// How independent reconstructions are scheduled. Results are identical
/// either way: each item owns its state and derives its own seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Data-parallel over items; falls back to sequential when the crate
    /// is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run items concurrently.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `items.iter().map(f)` collected in input order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

impl std::str::FromStr for Execution {
    type Err = crate::error::BcsError;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "sequential" => Ok(Execution::Sequential),
            "parallel" => Ok(Execution::Parallel),
            other => Err(crate::error::BcsError::InvalidHyperparameter(format!(
                "unknown execution mode '{other}' (expected sequential or parallel)"
            ))),
        }
    }
}
