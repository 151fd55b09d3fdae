use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;

use super::{evaluate, CanonicalExpr, EvalError, Expr, Inputs};

pub const DEFAULT_CACHE_CAPACITY: usize = 100_000;

/// Evaluation counters accumulated on cache misses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounters {
    /// Feature evaluations over the full input set (cache misses).
    pub nfes: u64,
    /// Elementary node evaluations, `node_count * rows` per miss.
    pub node_evals: u64,
    pub hits: u64,
}

struct Entry {
    expr: Expr,
    values: Result<Arc<[f64]>, EvalError>,
}

/// LRU memo of feature evaluations for one fixed input matrix.
///
/// Keyed by structural hash; a hash collision between different canonical
/// forms is detected by comparing expressions and treated as a miss.
pub struct EvalCache {
    entries: LruCache<u64, Entry>,
    counters: EvalCounters,
}

impl EvalCache {
    pub fn new(capacity: usize) -> EvalCache {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        EvalCache {
            entries: LruCache::new(cap),
            counters: EvalCounters::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.entries.cap().get()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counters(&self) -> EvalCounters {
        self.counters
    }

    pub fn contains(&self, ce: &CanonicalExpr) -> bool {
        self.entries
            .peek(&ce.hash())
            .is_some_and(|e| &e.expr == ce.expr())
    }

    /// Returns the stored vector on a hit; evaluates, counts and inserts on a
    /// miss. `inputs` must be the same matrix for the cache's lifetime.
    pub fn evaluate(
        &mut self,
        ce: &CanonicalExpr,
        inputs: &Inputs,
    ) -> Result<Arc<[f64]>, EvalError> {
        if let Some(entry) = self.entries.get(&ce.hash()) {
            if &entry.expr == ce.expr() {
                self.counters.hits += 1;
                return entry.values.clone();
            }
        }
        let values = evaluate(ce.expr(), inputs).map(Arc::from);
        self.counters.nfes += 1;
        self.counters.node_evals += (ce.node_count() * inputs.n_rows()) as u64;
        self.entries.put(
            ce.hash(),
            Entry {
                expr: ce.expr().clone(),
                values: values.clone(),
            },
        );
        values
    }
}

impl Default for EvalCache {
    fn default() -> Self {
        EvalCache::new(DEFAULT_CACHE_CAPACITY)
    }
}
