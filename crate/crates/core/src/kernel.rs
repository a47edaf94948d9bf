//! Gaussian kernel evaluation and an LRU cache of kernel rows.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { sigma: 1.0 }
    }
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        Ok(KernelParams { sigma })
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        kernel_value(a, b, self)
    }
}

/// `exp(-‖a − b‖² / (2σ²))`, in (0, 1].
#[inline]
pub fn kernel_value(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-d2 / (2.0 * p.sigma * p.sigma)).exp()
}

/// Row-major dense feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: impl IntoIterator<Item = R>) -> Self {
        let mut m = FeatureMatrix::new(dim);
        for r in rows {
            m.push(r.as_ref());
        }
        m
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "feature dimension mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Dense Gram matrix over `indices`, row-major.
pub fn gram_matrix(
    x: &FeatureMatrix,
    indices: &[usize],
    p: &KernelParams,
    exec: Execution,
) -> Vec<f64> {
    let n = indices.len();
    let mut k = vec![0.0; n * n];
    exec.fill(&mut k, |c| {
        let (r, s) = (c / n, c % n);
        kernel_value(x.row(indices[r]), x.row(indices[s]), p)
    });
    k
}

pub const DEFAULT_CACHE_ROWS: usize = 512;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    /// Individual kernel evaluations performed through the cache.
    pub evaluations: u64,
    pub hits: u64,
    pub misses: u64,
}

struct Entry {
    version: u64,
    values: Vec<f64>,
    last_used: u64,
}

/// LRU cache of kernel rows `k(x_i, x_s)` for `s` in an index set.
///
/// Rows are keyed by record index and tagged with the index-set version they
/// were computed against. Within one version the index set may only grow by
/// appending; a cached row that is shorter than the set is extended in place.
/// Any other change to the set (removal, reordering) must bump the version,
/// which makes every older row stale, unless the rows are carried over with
/// [`KernelCache::compact`].
pub struct KernelCache {
    capacity: usize,
    entries: HashMap<usize, Entry>,
    clock: u64,
    stats: CacheStats,
    scratch: Vec<f64>,
    exec: Execution,
}

impl Default for KernelCache {
    fn default() -> Self {
        KernelCache::new(DEFAULT_CACHE_ROWS)
    }
}

impl KernelCache {
    /// `capacity == 0` disables caching; rows are then recomputed per call.
    pub fn new(capacity: usize) -> Self {
        KernelCache {
            capacity,
            entries: HashMap::new(),
            clock: 0,
            stats: CacheStats::default(),
            scratch: Vec::new(),
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn cached_rows(&self) -> usize {
        self.entries.len()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Drops the row for `i`, if cached.
    pub fn forget(&mut self, i: usize) {
        self.entries.remove(&i);
    }

    /// Carries rows of version `from` over to version `to` after the set
    /// dropped every position with `keep[pos] == false`. Rows of other
    /// versions are discarded.
    pub fn compact(&mut self, keep: &[bool], from: u64, to: u64) {
        self.entries
            .retain(|_, e| e.version == from && e.values.len() <= keep.len());
        for e in self.entries.values_mut() {
            let mut w = 0;
            for (r, &k) in keep.iter().enumerate().take(e.values.len()) {
                if k {
                    e.values[w] = e.values[r];
                    w += 1;
                }
            }
            e.values.truncate(w);
            e.version = to;
        }
    }

    /// Complete cached row of `i` for a set of length `len` at `version`,
    /// without computing anything or touching recency.
    pub fn peek(&self, i: usize, len: usize, version: u64) -> Option<&[f64]> {
        match self.entries.get(&i) {
            Some(e) if e.version == version && e.values.len() == len => Some(&e.values),
            _ => None,
        }
    }

    /// Kernel row of record `i` against `set` (indices into `x`).
    pub fn row(
        &mut self,
        i: usize,
        set: &[usize],
        version: u64,
        x: &FeatureMatrix,
        p: &KernelParams,
    ) -> &[f64] {
        let exec = self.exec;
        let fill = |out: &mut [f64], offset: usize| {
            let xi = x.row(i);
            exec.fill(out, |k| kernel_value(xi, x.row(set[offset + k]), p));
        };

        if self.capacity == 0 {
            self.stats.misses += 1;
            self.stats.evaluations += set.len() as u64;
            self.scratch.resize(set.len(), 0.0);
            fill(&mut self.scratch, 0);
            return &self.scratch;
        }

        self.clock += 1;
        let reusable = matches!(
            self.entries.get(&i),
            Some(e) if e.version == version && e.values.len() <= set.len()
        );
        if reusable {
            let e = self.entries.get_mut(&i).expect("entry checked above");
            e.last_used = self.clock;
            let have = e.values.len();
            if have == set.len() {
                self.stats.hits += 1;
            } else {
                self.stats.misses += 1;
                self.stats.evaluations += (set.len() - have) as u64;
                e.values.resize(set.len(), 0.0);
                fill(&mut e.values[have..], have);
            }
            return &self.entries[&i].values;
        }

        self.stats.misses += 1;
        self.stats.evaluations += set.len() as u64;
        let mut values = match self.entries.remove(&i) {
            Some(old) => old.values,
            None => {
                if self.entries.len() >= self.capacity {
                    self.evict_lru();
                }
                Vec::new()
            }
        };
        values.resize(set.len(), 0.0);
        fill(&mut values, 0);
        self.entries.insert(
            i,
            Entry {
                version,
                values,
                last_used: self.clock,
            },
        );
        &self.entries[&i].values
    }

    fn evict_lru(&mut self) {
        if let Some((&victim, _)) = self.entries.iter().min_by_key(|(_, e)| e.last_used) {
            self.entries.remove(&victim);
        }
    }
}
