//! Execution strategy for batch work: rayon data parallelism with a
//! sequential fallback, selectable at runtime and gated by the `parallel`
//! cargo feature.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

impl ExecMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sequential" | "seq" => Some(ExecMode::Sequential),
            "parallel" | "par" => Some(ExecMode::Parallel),
            _ => None,
        }
    }
}

/// Applies `f` to each item, preserving input order in the output.
///
/// `Parallel` requires the `parallel` feature; without it the call falls back
/// to the sequential path so mode selection stays valid in both builds.
pub fn map_items<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    match mode {
        ExecMode::Sequential => items.iter().map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let items: Vec<u64> = (0..64).collect();
        let seq = map_items(ExecMode::Sequential, &items, |x| x * x + 1);
        let par = map_items(ExecMode::Parallel, &items, |x| x * x + 1);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 101);
    }

    #[test]
    fn parse_accepts_aliases() {
        assert_eq!(ExecMode::parse("seq"), Some(ExecMode::Sequential));
        assert_eq!(ExecMode::parse("parallel"), Some(ExecMode::Parallel));
        assert_eq!(ExecMode::parse("gpu"), None);
    }
}
