//! Evaluators, the metric expression language, the evaluation cache and
//! the transform-application machinery with its failure policies.

mod cache;
mod evaluator;
pub mod expr;
pub mod external;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{Cache, CacheKey, CacheStats};
pub(crate) use evaluator::eval_formulas;
pub use evaluator::{
    EvalError, EvalErrorKind, Evaluator, EvaluatorRef, ExprEvaluator, FnEvaluator,
};
pub use expr::{ExprError, MetricExpr, Value};
pub use external::{CommandSpec, ExternalCommand};

use crate::exec::Executor;
use crate::space::{DesignSpace, MetricName, NamedMetric, Point, PointRef, Schema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metric `{0}` already exists on the points")]
    NameCollision(String),
    #[error("no worst value configured for metric `{0}`")]
    MissingWorst(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// What to do with a point whose evaluation fails.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailPolicy {
    /// Stop and report the first failure (in point order).
    #[default]
    Abort,
    /// Drop failing points.
    PruneFailed,
    /// Fill the failing evaluator's metrics with per-metric worst values and
    /// flag the point as degraded.
    AssignWorst(BTreeMap<String, f64>),
}

impl std::str::FromStr for FailPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(FailPolicy::Abort),
            "prune-failed" => Ok(FailPolicy::PruneFailed),
            other => Err(format!(
                "unknown fail policy `{other}` (expected `abort` or `prune-failed`)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PointOutcome {
    Ok(Point),
    Degraded(Point),
    Pruned(EvalError),
    Failed(EvalError),
}

impl PointOutcome {
    pub fn point(&self) -> Option<&Point> {
        match self {
            PointOutcome::Ok(p) | PointOutcome::Degraded(p) => Some(p),
            _ => None,
        }
    }
}

/// Per-call summary of failures handled by the policy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransformReport {
    pub pruned: Vec<EvalError>,
    pub degraded: usize,
}

impl TransformReport {
    pub(crate) fn absorb(&mut self, outcome: &PointOutcome) {
        match outcome {
            PointOutcome::Pruned(e) => self.pruned.push(e.clone()),
            PointOutcome::Degraded(_) => self.degraded += 1,
            _ => {}
        }
    }
}

/// Checks that the evaluators can be applied to the space: produced names
/// are fresh and, under `AssignWorst`, every produced metric has a worst
/// value.
pub fn check_transform(
    space: &DesignSpace,
    evs: &[EvaluatorRef],
    policy: &FailPolicy,
) -> Result<(), MetricsError> {
    let mut fresh = HashSet::new();
    for ev in evs {
        for name in ev.produces() {
            let n = name.as_str();
            if !fresh.insert(n)
                || space.schema().position(n).is_some()
                || space.points().iter().any(|p| p.has_name(n))
            {
                return Err(MetricsError::NameCollision(n.to_string()));
            }
            if let FailPolicy::AssignWorst(worst) = policy {
                if !worst.contains_key(n) {
                    return Err(MetricsError::MissingWorst(n.to_string()));
                }
            }
        }
    }
    Ok(())
}

/// Runs every evaluator, in order, on one point. Later evaluators see the
/// metrics produced by earlier ones.
pub fn evaluate_point(
    schema: &Schema,
    point: &Point,
    evs: &[EvaluatorRef],
    cache: &Cache,
    policy: &FailPolicy,
) -> PointOutcome {
    let mut p = point.clone();
    let mut degraded = false;
    for ev in evs {
        match cache.get_or_eval(ev.as_ref(), PointRef::new(schema, &p)) {
            Ok(values) => {
                p.push_metrics(
                    ev.produces()
                        .iter()
                        .zip(values)
                        .map(|(name, value)| NamedMetric {
                            name: name.clone(),
                            value,
                        }),
                )
            }
            Err(e) => match policy {
                FailPolicy::Abort => return PointOutcome::Failed(e),
                FailPolicy::PruneFailed => return PointOutcome::Pruned(e),
                FailPolicy::AssignWorst(worst) => {
                    p.push_metrics(ev.produces().iter().map(|name| NamedMetric {
                        name: name.clone(),
                        value: worst[name.as_str()],
                    }));
                    degraded = true;
                }
            },
        }
    }
    if degraded {
        p.mark_degraded();
        PointOutcome::Degraded(p)
    } else {
        PointOutcome::Ok(p)
    }
}

/// Evaluates the points at `positions` of `space` concurrently; outcomes
/// come back in `positions` order.
pub fn evaluate_positions(
    space: &DesignSpace,
    positions: &[usize],
    evs: &[EvaluatorRef],
    cache: &Cache,
    policy: &FailPolicy,
    exec: &Executor,
) -> Vec<PointOutcome> {
    exec.map(positions, |_, &pos| {
        evaluate_point(space.schema(), &space.points()[pos], evs, cache, policy)
    })
}

/// Enhances every point of `space` with the evaluators' metrics. Point
/// order is preserved; failures are handled per `policy`.
pub fn apply_transform(
    space: &DesignSpace,
    evs: &[EvaluatorRef],
    cache: &Cache,
    policy: &FailPolicy,
    exec: &Executor,
) -> Result<(DesignSpace, TransformReport), MetricsError> {
    check_transform(space, evs, policy)?;
    let positions: Vec<usize> = (0..space.len()).collect();
    let outcomes = evaluate_positions(space, &positions, evs, cache, policy, exec);
    let mut report = TransformReport::default();
    let mut points = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        report.absorb(&outcome);
        match outcome {
            PointOutcome::Ok(p) | PointOutcome::Degraded(p) => points.push(p),
            PointOutcome::Pruned(_) => {}
            PointOutcome::Failed(e) => return Err(MetricsError::Eval(e)),
        }
    }
    Ok((space.with_points(points), report))
}

/// Evaluates a numeric expression on a point.
pub fn eval_on(expr: &MetricExpr, point: PointRef<'_>) -> Result<f64, ExprError> {
    expr.eval_number(&|n| point.lookup(n))
}

/// Evaluates a predicate on a point.
pub fn test_on(expr: &MetricExpr, point: PointRef<'_>) -> Result<bool, ExprError> {
    expr.eval_bool(&|n| point.lookup(n))
}

pub(crate) fn names(list: &[&str]) -> Vec<MetricName> {
    list.iter()
        .map(|n| MetricName::new(*n).expect("valid metric name"))
        .collect()
}
