//! Write-once memo table for evaluator results.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::mapref::entry::Entry;
use dashmap::DashMap;
use serde::Serialize;

use super::evaluator::{EvalError, EvalErrorKind, Evaluator};
use crate::space::PointRef;

/// Cache identity of a point: the raw value of every parameter and frozen
/// parameter, sorted by name. Coordinates of the same configuration in a
/// full and a projected space therefore share an entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    evaluator: String,
    valuation: Vec<(String, u64)>,
}

impl CacheKey {
    pub fn new(evaluator: &str, point: PointRef<'_>) -> Self {
        let mut valuation: Vec<(String, u64)> = point
            .parameter_values()
            .into_iter()
            .map(|(n, v)| (n, v.to_bits()))
            .collect();
        valuation.sort();
        Self {
            evaluator: evaluator.to_string(),
            valuation,
        }
    }
}

type Stored = Result<Vec<f64>, EvalError>;

#[derive(Default)]
struct Counter {
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Hit/miss counters. A miss is exactly one evaluator invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn since(self, earlier: CacheStats) -> CacheStats {
        CacheStats {
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
        }
    }
}

#[derive(Default)]
pub struct Cache {
    entries: DashMap<CacheKey, Stored>,
    totals: Counter,
    per_evaluator: DashMap<String, Counter>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cache")
            .field("entries", &self.entries.len())
            .field("stats", &self.stats())
            .finish()
    }
}

impl Cache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.totals.hits.load(Ordering::SeqCst),
            misses: self.totals.misses.load(Ordering::SeqCst),
        }
    }

    pub fn evaluator_stats(&self) -> BTreeMap<String, CacheStats> {
        self.per_evaluator
            .iter()
            .map(|e| {
                (
                    e.key().clone(),
                    CacheStats {
                        hits: e.value().hits.load(Ordering::SeqCst),
                        misses: e.value().misses.load(Ordering::SeqCst),
                    },
                )
            })
            .collect()
    }

    fn count(&self, evaluator: &str, hit: bool) {
        let bump = |c: &Counter| {
            if hit {
                c.hits.fetch_add(1, Ordering::SeqCst);
            } else {
                c.misses.fetch_add(1, Ordering::SeqCst);
            }
        };
        bump(&self.totals);
        if let Some(c) = self.per_evaluator.get(evaluator) {
            bump(&c);
            return;
        }
        bump(&self.per_evaluator.entry(evaluator.to_string()).or_default());
    }

    /// Returns the stored result for `(ev, point)`, invoking the evaluator
    /// on a miss. Stored errors are returned as-is.
    pub fn get_or_eval(&self, ev: &dyn Evaluator, point: PointRef<'_>) -> Stored {
        let key = CacheKey::new(ev.name(), point);
        if let Some(found) = self.entries.get(&key) {
            self.count(ev.name(), true);
            return found.clone();
        }
        self.count(ev.name(), false);
        let computed = invoke(ev, point);
        match self.entries.entry(key) {
            // Lost a race with a concurrent writer: the first write wins.
            Entry::Occupied(o) => {
                if ev.deterministic() && o.get() != &computed {
                    log::warn!(
                        "evaluator `{}` returned differing results for {:?}",
                        ev.name(),
                        point.point.coords()
                    );
                }
                o.get().clone()
            }
            Entry::Vacant(v) => {
                v.insert(computed.clone());
                computed
            }
        }
    }

    /// Re-runs the evaluator on a cached point and reports a
    /// `Nondeterministic` error when the fresh result differs from the
    /// stored one. Does not modify the cache.
    pub fn verify(&self, ev: &dyn Evaluator, point: PointRef<'_>) -> Result<(), EvalError> {
        let key = CacheKey::new(ev.name(), point);
        let Some(stored) = self.entries.get(&key).map(|e| e.clone()) else {
            return Ok(());
        };
        let fresh = invoke(ev, point);
        if fresh != stored {
            return Err(EvalError::new(
                EvalErrorKind::Nondeterministic,
                format!("evaluator `{}` is not reproducible", ev.name()),
            )
            .at(point.point.coords()));
        }
        Ok(())
    }
}

/// Calls the evaluator and checks the arity and finiteness contract.
pub(crate) fn invoke(ev: &dyn Evaluator, point: PointRef<'_>) -> Stored {
    let coords = point.point.coords();
    let values =
        ev.evaluate(point)
            .map_err(|e| if e.coords.is_empty() { e.at(coords) } else { e })?;
    if values.len() != ev.produces().len() {
        return Err(EvalError::new(
            EvalErrorKind::ParseFailure,
            format!(
                "evaluator `{}` produced {} values for {} metrics",
                ev.name(),
                values.len(),
                ev.produces().len()
            ),
        )
        .at(coords));
    }
    if let Some((name, _)) = ev
        .produces()
        .iter()
        .zip(&values)
        .find(|(_, v)| !v.is_finite())
    {
        return Err(EvalError::new(
            EvalErrorKind::NonFinite,
            format!("metric `{name}` is not finite"),
        )
        .at(coords));
    }
    Ok(values)
}
