//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) element-wise maps run on the rayon
//! pool once they are long enough to amortize the fork/join. Every element is
//! computed by the same scalar code on either path and there are no parallel
//! reductions, so results are bitwise identical across modes.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this length a parallel map is not worth the scheduling overhead.
pub const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the crate is built without `parallel`.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `out[k] = f(k)` for every slot.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && out.len() >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
            return;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = f(k);
        }
    }

    /// Ordered map over `0..n`, used for coarse-grained work (independent
    /// solver runs) where no length threshold applies.
    pub fn map_tasks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let n = PAR_THRESHOLD * 3 + 7;
        let f = |k: usize| ((k as f64) * 0.37).sin().exp();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        Execution::Sequential.fill(&mut a, f);
        Execution::Parallel.fill(&mut b, f);
        assert_eq!(a, b);
        assert_eq!(
            Execution::Sequential.map_tasks(10, |k| k * k),
            Execution::Parallel.map_tasks(10, |k| k * k)
        );
    }
}
