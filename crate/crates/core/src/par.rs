//! Execution policy for data-parallel sweeps.
//!
//! Every sweep collects results in input order, and reductions are done
//! sequentially over the collected vector, so the output does not depend on
//! how the work was partitioned.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    /// Rayon work-stealing; same as `Sequential` when the `parallel`
    /// feature is off.
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

    pub fn try_map<T, U, F>(self, items: &[T], f: F) -> Result<Vec<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Result<U> + Sync + Send,
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

    /// Ordered sum of `f` over `items`.
    pub fn try_sum<T, F>(self, items: &[T], f: F) -> Result<f64>
    where
        T: Sync,
        F: Fn(&T) -> Result<f64> + Sync + Send,
    {
        Ok(self.try_map(items, f)?.into_iter().sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = Exec::Sequential.try_sum(&xs, |x| Ok(x * x)).unwrap();
        let b = Exec::Parallel.try_sum(&xs, |x| Ok(x * x)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
