//! Exploration steps and their sequential composition.
//!
//! A [`Step`] maps a design space to a new one without touching its input.
//! Steps that need metrics pull them through the shared [`Cache`], so a
//! point is never evaluated twice by the same evaluator within a run.

mod exhaustive;
mod frame;
mod gradient;
mod pipeline;
mod quick_prune;

pub mod config;

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

pub use exhaustive::{ExhaustiveMap, ExhaustivePrune, ExhaustiveSort, Identity, ReduceDimension};
pub use frame::{two_decimals, Column, ColumnRole, FrameError, ResultFrame};
pub use gradient::GradientSort;
pub use pipeline::{
    run_pipeline, Pipeline, PipelineFailure, PipelineStep, Provenance, RunOutput, StepProvenance,
};
pub use quick_prune::{FrontierProbe, KeepSide, QuickPrune, SearchResult};

use crate::exec::Executor;
use crate::metrics::{
    apply_transform, Cache, EvaluatorRef, ExprError, FailPolicy, MetricExpr, MetricsError,
    TransformReport,
};
use crate::space::{DesignSpace, PointRef, SpaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("`{expr}` on point {coords:?}: {source}")]
    Expr {
        expr: String,
        coords: Vec<usize>,
        source: ExprError,
    },
    #[error("step `{0}` needs a nonempty input space")]
    EmptySpace(String),
}

impl StepError {
    pub fn is_evaluation_failure(&self) -> bool {
        matches!(self, StepError::Metrics(MetricsError::Eval(_)))
    }
}

/// Shared resources for one step execution.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub cache: &'a Cache,
    pub exec: &'a Executor,
    pub policy: &'a FailPolicy,
}

/// What a step did, for provenance.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepReport {
    /// Points dropped because an evaluator failed on them.
    pub failed: usize,
    /// Points carrying worst-value substitutes.
    pub degraded: usize,
    /// Distinct points on which the step ran its evaluators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points_evaluated: Option<usize>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Json>,
}

impl StepReport {
    fn from_transform(t: &TransformReport) -> Self {
        Self {
            failed: t.pruned.len(),
            degraded: t.degraded,
            ..Self::default()
        }
    }

    pub fn detail(mut self, key: &str, value: impl Into<Json>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug)]
pub struct StepOutput {
    pub space: DesignSpace,
    pub report: StepReport,
}

pub trait Step: Send + Sync {
    /// Step kind, as written in pipeline files.
    fn name(&self) -> &'static str;

    /// One-line human description (expressions, evaluators, options).
    fn describe(&self) -> String;

    fn evaluators(&self) -> &[EvaluatorRef] {
        &[]
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError>;
}

fn transform(
    space: &DesignSpace,
    evs: &[EvaluatorRef],
    ctx: &StepContext<'_>,
) -> Result<(DesignSpace, TransformReport), StepError> {
    if evs.is_empty() {
        return Ok((space.clone(), TransformReport::default()));
    }
    Ok(apply_transform(
        space, evs, ctx.cache, ctx.policy, ctx.exec,
    )?)
}

fn eval_number(expr: &MetricExpr, p: PointRef<'_>) -> Result<f64, StepError> {
    crate::metrics::eval_on(expr, p).map_err(|source| StepError::Expr {
        expr: expr.source().to_string(),
        coords: p.point.coords().to_vec(),
        source,
    })
}

fn eval_bool(expr: &MetricExpr, p: PointRef<'_>) -> Result<bool, StepError> {
    crate::metrics::test_on(expr, p).map_err(|source| StepError::Expr {
        expr: expr.source().to_string(),
        coords: p.point.coords().to_vec(),
        source,
    })
}

fn evaluator_names(evs: &[EvaluatorRef]) -> String {
    evs.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
}
