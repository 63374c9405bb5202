use super::{
    eval_bool, eval_number, evaluator_names, transform, Step, StepContext, StepError, StepOutput,
    StepReport,
};
use crate::metrics::{EvaluatorRef, MetricExpr};
use crate::space::{project_space, DesignSpace};

/// Returns its input unchanged.
#[derive(Debug, Default)]
pub struct Identity;

impl Step for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn describe(&self) -> String {
        "identity".into()
    }

    fn apply(&self, space: &DesignSpace, _: &StepContext<'_>) -> Result<StepOutput, StepError> {
        Ok(StepOutput {
            space: space.clone(),
            report: StepReport::default(),
        })
    }
}

/// Applies evaluators to every point.
pub struct ExhaustiveMap {
    evs: Vec<EvaluatorRef>,
}

impl ExhaustiveMap {
    pub fn new(evs: Vec<EvaluatorRef>) -> Self {
        Self { evs }
    }
}

impl Step for ExhaustiveMap {
    fn name(&self) -> &'static str {
        "map"
    }

    fn describe(&self) -> String {
        format!("map [{}]", evaluator_names(&self.evs))
    }

    fn evaluators(&self) -> &[EvaluatorRef] {
        &self.evs
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError> {
        let (space, t) = transform(space, &self.evs, ctx)?;
        let mut report = StepReport::from_transform(&t);
        report.points_evaluated = Some(space.len() + t.pruned.len());
        Ok(StepOutput { space, report })
    }
}

/// Optionally applies evaluators, then stable-sorts by a key expression.
pub struct ExhaustiveSort {
    evs: Vec<EvaluatorRef>,
    key: MetricExpr,
    ascending: bool,
}

impl ExhaustiveSort {
    pub fn new(evs: Vec<EvaluatorRef>, key: MetricExpr, ascending: bool) -> Self {
        Self {
            evs,
            key,
            ascending,
        }
    }
}

impl Step for ExhaustiveSort {
    fn name(&self) -> &'static str {
        "sort"
    }

    fn describe(&self) -> String {
        let dir = if self.ascending { "asc" } else { "desc" };
        format!(
            "sort [{}] by `{}` {dir}",
            evaluator_names(&self.evs),
            self.key
        )
    }

    fn evaluators(&self) -> &[EvaluatorRef] {
        &self.evs
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError> {
        let (mapped, t) = transform(space, &self.evs, ctx)?;
        let keys = mapped
            .points()
            .iter()
            .map(|p| eval_number(&self.key, mapped.point_ref(p)))
            .collect::<Result<Vec<f64>, _>>()?;
        let mut order: Vec<usize> = (0..keys.len()).collect();
        if self.ascending {
            order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
        } else {
            order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
        }
        let points = order
            .into_iter()
            .map(|i| mapped.points()[i].clone())
            .collect();
        let mut report = StepReport::from_transform(&t);
        if !self.evs.is_empty() {
            report.points_evaluated = Some(mapped.len() + t.pruned.len());
        }
        Ok(StepOutput {
            space: mapped.with_points(points),
            report,
        })
    }
}

/// Optionally applies evaluators, then keeps the points satisfying a
/// predicate.
pub struct ExhaustivePrune {
    evs: Vec<EvaluatorRef>,
    keep: MetricExpr,
}

impl ExhaustivePrune {
    pub fn new(evs: Vec<EvaluatorRef>, keep: MetricExpr) -> Self {
        Self { evs, keep }
    }
}

impl Step for ExhaustivePrune {
    fn name(&self) -> &'static str {
        "prune"
    }

    fn describe(&self) -> String {
        format!(
            "prune [{}] keep `{}`",
            evaluator_names(&self.evs),
            self.keep
        )
    }

    fn evaluators(&self) -> &[EvaluatorRef] {
        &self.evs
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError> {
        let (mapped, t) = transform(space, &self.evs, ctx)?;
        let mut points = Vec::new();
        for p in mapped.points() {
            if eval_bool(&self.keep, mapped.point_ref(p))? {
                points.push(p.clone());
            }
        }
        let mut report = StepReport::from_transform(&t);
        if !self.evs.is_empty() {
            report.points_evaluated = Some(mapped.len() + t.pruned.len());
        }
        report = report.detail("rejected", mapped.len() - points.len());
        Ok(StepOutput {
            space: mapped.with_points(points),
            report,
        })
    }
}

/// Projects the space on the parameters tagged with a concern.
pub struct ReduceDimension {
    concern: String,
    project_to_min: bool,
}

impl ReduceDimension {
    pub fn new(concern: impl Into<String>, project_to_min: bool) -> Self {
        Self {
            concern: concern.into(),
            project_to_min,
        }
    }
}

impl Step for ReduceDimension {
    fn name(&self) -> &'static str {
        "reduce-dimension"
    }

    fn describe(&self) -> String {
        let at = if self.project_to_min { "min" } else { "max" };
        format!("reduce-dimension on `{}` at {at}", self.concern)
    }

    fn apply(&self, space: &DesignSpace, _: &StepContext<'_>) -> Result<StepOutput, StepError> {
        let out = project_space(space, &self.concern, self.project_to_min)?;
        let removed: Vec<String> = space
            .schema()
            .params()
            .iter()
            .filter(|p| out.schema().position(p.name.as_str()).is_none())
            .map(|p| p.name.to_string())
            .collect();
        let report = StepReport::default()
            .detail("removed", removed)
            .detail("cardinality", out.len());
        Ok(StepOutput { space: out, report })
    }
}
