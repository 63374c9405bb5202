use std::collections::HashMap;

use super::{eval_number, evaluator_names, Step, StepContext, StepError, StepOutput, StepReport};
use crate::metrics::{
    check_transform, evaluate_positions, EvaluatorRef, MetricExpr, MetricsError, PointOutcome,
};
use crate::space::{DesignSpace, Norm, Point};

/// Hill climbing over the L1 neighbourhood, starting at the head of the
/// input space.
///
/// Each round evaluates the unvisited neighbours of the current optimum and
/// moves to the best one if it strictly improves the objective; ties go to
/// the neighbour earliest in enumeration order. The output holds every
/// evaluated point, best first.
pub struct GradientSort {
    evs: Vec<EvaluatorRef>,
    objective: MetricExpr,
    maximize: bool,
}

impl GradientSort {
    pub fn new(evs: Vec<EvaluatorRef>, objective: MetricExpr, maximize: bool) -> Self {
        Self {
            evs,
            objective,
            maximize,
        }
    }

    fn better(&self, a: f64, b: f64) -> bool {
        if self.maximize {
            a > b
        } else {
            a < b
        }
    }
}

struct Visit {
    point: Point,
    cost: f64,
}

impl Step for GradientSort {
    fn name(&self) -> &'static str {
        "gradient"
    }

    fn describe(&self) -> String {
        let dir = if self.maximize { "max" } else { "min" };
        format!(
            "gradient [{}] {dir} `{}`",
            evaluator_names(&self.evs),
            self.objective
        )
    }

    fn evaluators(&self) -> &[EvaluatorRef] {
        &self.evs
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError> {
        if space.is_empty() {
            return Err(StepError::EmptySpace(self.name().into()));
        }
        check_transform(space, &self.evs, ctx.policy)?;

        // `None` marks a point dropped by the failure policy.
        let mut visited: HashMap<usize, Option<Visit>> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut report = StepReport::default();

        let mut visit = |positions: &[usize],
                         visited: &mut HashMap<usize, Option<Visit>>|
         -> Result<(), StepError> {
            let fresh: Vec<usize> = positions
                .iter()
                .copied()
                .filter(|p| !visited.contains_key(p))
                .collect();
            let outcomes =
                evaluate_positions(space, &fresh, &self.evs, ctx.cache, ctx.policy, ctx.exec);
            for (&pos, outcome) in fresh.iter().zip(outcomes) {
                let v = match outcome {
                    PointOutcome::Ok(point) | PointOutcome::Degraded(point) => {
                        if point.is_degraded() {
                            report.degraded += 1;
                        }
                        let cost = eval_number(&self.objective, space.point_ref(&point))?;
                        Some(Visit { point, cost })
                    }
                    PointOutcome::Pruned(_) => {
                        report.failed += 1;
                        None
                    }
                    PointOutcome::Failed(e) => return Err(MetricsError::Eval(e).into()),
                };
                visited.insert(pos, v);
                order.push(pos);
            }
            Ok(())
        };

        let mut current = None;
        for pos in 0..space.len() {
            visit(&[pos], &mut visited)?;
            if let Some(Some(v)) = visited.get(&pos) {
                current = Some((pos, v.cost));
                break;
            }
        }
        let mut moves = 0usize;
        if let Some((mut cur, mut cost)) = current {
            loop {
                let neighbours = space.neighbour_positions(cur, Norm::L1, 1);
                visit(&neighbours, &mut visited)?;
                let mut best: Option<(usize, f64)> = None;
                for &q in &neighbours {
                    if let Some(Some(v)) = visited.get(&q) {
                        if best.map_or(true, |(_, c)| self.better(v.cost, c)) {
                            best = Some((q, v.cost));
                        }
                    }
                }
                match best {
                    Some((q, c)) if self.better(c, cost) => {
                        cur = q;
                        cost = c;
                        moves += 1;
                    }
                    _ => break,
                }
            }
        }
        drop(visit);

        let mut evaluated: Vec<(f64, Point)> = order
            .iter()
            .filter_map(|pos| visited.remove(pos).flatten())
            .map(|v| (v.cost, v.point))
            .collect();
        if self.maximize {
            evaluated.sort_by(|a, b| b.0.total_cmp(&a.0));
        } else {
            evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        report.points_evaluated = Some(order.len());
        report = report.detail("moves", moves);
        Ok(StepOutput {
            space: space.with_points(evaluated.into_iter().map(|(_, p)| p).collect()),
            report,
        })
    }
}
