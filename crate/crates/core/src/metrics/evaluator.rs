use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::expr::{ExprError, MetricExpr};
use crate::space::{MetricName, PointRef};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalErrorKind {
    Timeout,
    ToolFailure(Option<i32>),
    ParseFailure,
    NameNotFound(String),
    DivByZero,
    Nondeterministic,
    Type,
    NonFinite,
}

impl fmt::Display for EvalErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalErrorKind::Timeout => f.write_str("timeout"),
            EvalErrorKind::ToolFailure(Some(c)) => write!(f, "tool failure (exit code {c})"),
            EvalErrorKind::ToolFailure(None) => f.write_str("tool failure (killed by signal)"),
            EvalErrorKind::ParseFailure => f.write_str("unparsable tool output"),
            EvalErrorKind::NameNotFound(n) => write!(f, "name `{n}` not found"),
            EvalErrorKind::DivByZero => f.write_str("division by zero"),
            EvalErrorKind::Nondeterministic => f.write_str("nondeterministic result"),
            EvalErrorKind::Type => f.write_str("type error"),
            EvalErrorKind::NonFinite => f.write_str("non-finite value"),
        }
    }
}

/// Failure of one evaluator on one point.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{kind} at {coords:?}: {detail}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub detail: String,
    /// Coordinates of the point being evaluated; filled in by the transform
    /// machinery when the evaluator itself does not know them.
    pub coords: Vec<usize>,
}

impl EvalError {
    pub fn new(kind: EvalErrorKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
            coords: Vec::new(),
        }
    }

    pub fn at(mut self, coords: &[usize]) -> Self {
        self.coords = coords.to_vec();
        self
    }
}

impl From<ExprError> for EvalError {
    fn from(e: ExprError) -> Self {
        let kind = match &e {
            ExprError::NameNotFound(n) => EvalErrorKind::NameNotFound(n.clone()),
            ExprError::DivByZero => EvalErrorKind::DivByZero,
            ExprError::Type(_) => EvalErrorKind::Type,
            ExprError::NonFinite => EvalErrorKind::NonFinite,
            ExprError::Syntax { .. } => EvalErrorKind::ParseFailure,
        };
        EvalError::new(kind, e.to_string())
    }
}

/// Produces a fixed list of named metrics for a point.
///
/// `evaluate` returns exactly one value per name in `produces`, in order.
/// Implementations must be deterministic in the point's parameters and
/// frozen parameters unless `deterministic` says otherwise.
pub trait Evaluator: Send + Sync {
    fn name(&self) -> &str;

    fn produces(&self) -> &[MetricName];

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError>;

    fn deterministic(&self) -> bool {
        true
    }
}

impl fmt::Debug for dyn Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Evaluator")
            .field("name", &self.name())
            .field("produces", &self.produces())
            .finish()
    }
}

pub type EvaluatorRef = Arc<dyn Evaluator>;

/// Cost functions written in the expression language.
///
/// Formulas are evaluated in order; later formulas may read metrics
/// produced by earlier ones.
pub struct ExprEvaluator {
    name: String,
    produces: Vec<MetricName>,
    formulas: Vec<MetricExpr>,
}

impl ExprEvaluator {
    pub fn new(name: impl Into<String>, formulas: Vec<(MetricName, MetricExpr)>) -> Self {
        let (produces, formulas) = formulas.into_iter().unzip();
        Self {
            name: name.into(),
            produces,
            formulas,
        }
    }

    /// Single-metric evaluator from expression text.
    pub fn single(name: &str, metric: &str, expr: &str) -> Result<Self, crate::Error> {
        Ok(Self::new(
            name,
            vec![(MetricName::new(metric)?, MetricExpr::parse(expr)?)],
        ))
    }

    pub fn formulas(&self) -> impl Iterator<Item = (&MetricName, &MetricExpr)> {
        self.produces.iter().zip(&self.formulas)
    }
}

/// Evaluates `formulas` in order over `lookup`, letting later formulas see
/// earlier results under `names`.
pub(crate) fn eval_formulas(
    names: &[MetricName],
    formulas: &[MetricExpr],
    lookup: &dyn Fn(&str) -> Option<f64>,
) -> Result<Vec<f64>, EvalError> {
    let mut out: Vec<f64> = Vec::with_capacity(formulas.len());
    for f in formulas {
        let done = &out;
        let scoped = |n: &str| {
            names
                .iter()
                .zip(done.iter())
                .find(|(m, _)| m.as_str() == n)
                .map(|(_, v)| *v)
                .or_else(|| lookup(n))
        };
        out.push(f.eval_number(&scoped)?);
    }
    Ok(out)
}

impl Evaluator for ExprEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        eval_formulas(&self.produces, &self.formulas, &|n| point.lookup(n))
    }
}

/// Host-code evaluator built from a closure.
pub struct FnEvaluator<F> {
    name: String,
    produces: Vec<MetricName>,
    f: F,
    deterministic: bool,
}

impl<F> FnEvaluator<F>
where
    F: Fn(PointRef<'_>) -> Result<Vec<f64>, EvalError> + Send + Sync,
{
    pub fn new(name: &str, produces: &[&str], f: F) -> Self {
        Self {
            name: name.to_string(),
            produces: produces
                .iter()
                .map(|p| MetricName::new(*p).expect("valid metric name"))
                .collect(),
            f,
            deterministic: true,
        }
    }

    pub fn nondeterministic(mut self) -> Self {
        self.deterministic = false;
        self
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(PointRef<'_>) -> Result<Vec<f64>, EvalError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        (self.f)(point)
    }

    fn deterministic(&self) -> bool {
        self.deterministic
    }
}
