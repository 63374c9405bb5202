use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{eval_bool, evaluator_names, Step, StepContext, StepError, StepOutput, StepReport};
use crate::metrics::{
    check_transform, evaluate_positions, EvaluatorRef, MetricExpr, MetricsError, PointOutcome,
};
use crate::space::{project_space, DesignSpace, Norm, Point};

/// Which side of the frontier holds the kept region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeepSide {
    /// If `p` is kept, so is every `q >= p` (componentwise, index space).
    #[default]
    UpwardClosed,
    /// If `p` is kept, so is every `q <= p`.
    DownwardClosed,
}

/// How a kept point is tested for membership of the frontier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontierProbe {
    /// Looks only at the Chebyshev neighbour one step towards the pruned
    /// side in every coordinate. On a region closed towards `KeepSide` this
    /// neighbour is rejected whenever any neighbour is, so the answer is the
    /// same as `Exhaustive` at a fraction of the evaluations.
    #[default]
    Dominated,
    /// Looks at every Chebyshev neighbour.
    Exhaustive,
}

/// Frontier-tracing partition of a full grid.
///
/// Start: walk the diagonal from the pruned end and take the first kept
/// point; if it has no rejected neighbour, fall back to the first kept
/// neighbour that does. Frontier: grow the set of kept points having a
/// rejected Chebyshev neighbour, breadth first. Update: keep every point
/// that dominates (or is dominated by, for `DownwardClosed`) a frontier
/// point.
pub struct QuickPrune {
    evs: Vec<EvaluatorRef>,
    keep: MetricExpr,
    side: KeepSide,
    concern: Option<String>,
    probe: FrontierProbe,
    annotate: bool,
}

/// Outcome of the frontier search on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Kept positions, ascending.
    pub kept: Vec<usize>,
    /// Positions found on the frontier, ascending.
    pub frontier: Vec<usize>,
    pub seed: Option<usize>,
    /// Distinct points on which the predicate was evaluated.
    pub predicate_evaluations: usize,
}

enum Known {
    Kept(Point),
    Rejected(Point),
    Failed,
}

struct Search<'a> {
    grid: &'a DesignSpace,
    step: &'a QuickPrune,
    ctx: &'a StepContext<'a>,
    cards: Vec<usize>,
    known: HashMap<usize, Known>,
    failed: usize,
    degraded: usize,
}

impl<'a> Search<'a> {
    fn ensure(&mut self, positions: &[usize]) -> Result<(), StepError> {
        let mut fresh: Vec<usize> = positions
            .iter()
            .copied()
            .filter(|p| !self.known.contains_key(p))
            .collect();
        fresh.sort_unstable();
        fresh.dedup();
        let outcomes = evaluate_positions(
            self.grid,
            &fresh,
            &self.step.evs,
            self.ctx.cache,
            self.ctx.policy,
            self.ctx.exec,
        );
        for (pos, outcome) in fresh.into_iter().zip(outcomes) {
            let known = match outcome {
                PointOutcome::Ok(p) | PointOutcome::Degraded(p) => {
                    if p.is_degraded() {
                        self.degraded += 1;
                    }
                    if eval_bool(&self.step.keep, self.grid.point_ref(&p))? {
                        Known::Kept(p)
                    } else {
                        Known::Rejected(p)
                    }
                }
                PointOutcome::Pruned(_) => {
                    self.failed += 1;
                    Known::Failed
                }
                PointOutcome::Failed(e) => return Err(MetricsError::Eval(e).into()),
            };
            self.known.insert(pos, known);
        }
        Ok(())
    }

    fn is_kept(&self, pos: usize) -> bool {
        matches!(self.known.get(&pos), Some(Known::Kept(_)))
    }

    fn probes(&self, pos: usize) -> Vec<usize> {
        match self.step.probe {
            FrontierProbe::Exhaustive => self.grid.neighbour_positions(pos, Norm::Linf, 1),
            FrontierProbe::Dominated => {
                let c = self.grid.points()[pos].coords();
                let shifted: Vec<usize> = c
                    .iter()
                    .zip(&self.cards)
                    .map(|(&x, &n)| match self.step.side {
                        KeepSide::UpwardClosed => x.saturating_sub(1),
                        KeepSide::DownwardClosed => (x + 1).min(n - 1),
                    })
                    .collect();
                if shifted == c {
                    Vec::new()
                } else {
                    vec![self.grid.positions_at(&shifted)[0]]
                }
            }
        }
    }

    /// The kept candidates having a rejected neighbour.
    fn on_frontier(&mut self, candidates: &[usize]) -> Result<Vec<usize>, StepError> {
        let probes: Vec<usize> = candidates.iter().flat_map(|&c| self.probes(c)).collect();
        self.ensure(&probes)?;
        Ok(candidates
            .iter()
            .copied()
            .filter(|&c| self.probes(c).into_iter().any(|q| !self.is_kept(q)))
            .collect())
    }

    fn neighbours(&self, positions: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = positions
            .iter()
            .flat_map(|&p| self.grid.neighbour_positions(p, Norm::Linf, 1))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn dominates(&self, p: &[usize], f: &[usize]) -> bool {
        match self.step.side {
            KeepSide::UpwardClosed => p.iter().zip(f).all(|(a, b)| a >= b),
            KeepSide::DownwardClosed => p.iter().zip(f).all(|(a, b)| a <= b),
        }
    }

    fn run(&mut self) -> Result<SearchResult, StepError> {
        let mut diagonal = self.grid.diagonal_positions()?;
        if self.step.side == KeepSide::DownwardClosed {
            diagonal.reverse();
        }

        let mut seed = None;
        for d in diagonal {
            self.ensure(&[d])?;
            if self.is_kept(d) {
                seed = Some(d);
                break;
            }
        }
        let Some(mut seed) = seed else {
            return Ok(SearchResult {
                kept: Vec::new(),
                frontier: Vec::new(),
                seed: None,
                predicate_evaluations: self.known.len(),
            });
        };
        let mut seed_on_frontier = !self.on_frontier(&[seed])?.is_empty();
        if !seed_on_frontier {
            let around = self.grid.neighbour_positions(seed, Norm::Linf, 1);
            self.ensure(&around)?;
            let kept: Vec<usize> = around.into_iter().filter(|&q| self.is_kept(q)).collect();
            if let Some(&first) = self.on_frontier(&kept)?.first() {
                seed = first;
                seed_on_frontier = true;
            }
        }

        let mut frontier = BTreeSet::from([seed]);
        let mut current = vec![seed];
        while !current.is_empty() {
            let around = self.neighbours(&current);
            self.ensure(&around)?;
            let fresh: Vec<usize> = around
                .into_iter()
                .filter(|q| self.is_kept(*q) && !frontier.contains(q))
                .collect();
            current = self.on_frontier(&fresh)?;
            frontier.extend(current.iter().copied());
        }
        let predicate_evaluations = self.known.len();

        let anchors: Vec<&[usize]> = frontier
            .iter()
            .map(|&f| self.grid.points()[f].coords())
            .collect();
        let kept = (0..self.grid.len())
            .filter(|p| !matches!(self.known.get(p), Some(Known::Failed)))
            .filter(|&p| {
                let c = self.grid.points()[p].coords();
                anchors.iter().any(|f| self.dominates(c, f))
            })
            .collect();
        if !seed_on_frontier {
            frontier.remove(&seed);
        }
        Ok(SearchResult {
            kept,
            frontier: frontier.into_iter().collect(),
            seed: Some(seed),
            predicate_evaluations,
        })
    }
}

impl QuickPrune {
    pub fn new(evs: Vec<EvaluatorRef>, keep: MetricExpr) -> Self {
        Self {
            evs,
            keep,
            side: KeepSide::default(),
            concern: None,
            probe: FrontierProbe::default(),
            annotate: false,
        }
    }

    pub fn side(mut self, side: KeepSide) -> Self {
        self.side = side;
        self
    }

    /// Search on the grid projected on `concern`, then re-expand.
    pub fn concern(mut self, concern: Option<String>) -> Self {
        self.concern = concern;
        self
    }

    pub fn probe(mut self, probe: FrontierProbe) -> Self {
        self.probe = probe;
        self
    }

    /// Attach the evaluators' metrics to every kept point, evaluating the
    /// kept points the search did not reach.
    pub fn annotate(mut self, annotate: bool) -> Self {
        self.annotate = annotate;
        self
    }

    /// Runs Start/Frontier/Update on `grid` itself (no projection).
    pub fn search(
        &self,
        grid: &DesignSpace,
        ctx: &StepContext<'_>,
    ) -> Result<SearchResult, StepError> {
        if grid.is_empty() {
            return Ok(SearchResult {
                kept: Vec::new(),
                frontier: Vec::new(),
                seed: None,
                predicate_evaluations: 0,
            });
        }
        check_transform(grid, &self.evs, ctx.policy)?;
        self.searcher(grid, ctx).run()
    }

    fn searcher<'a>(&'a self, grid: &'a DesignSpace, ctx: &'a StepContext<'a>) -> Search<'a> {
        Search {
            grid,
            step: self,
            ctx,
            cards: grid.schema().cardinalities(),
            known: HashMap::new(),
            failed: 0,
            degraded: 0,
        }
    }
}

impl Step for QuickPrune {
    fn name(&self) -> &'static str {
        "quick-prune"
    }

    fn describe(&self) -> String {
        let side = match self.side {
            KeepSide::UpwardClosed => "upward-closed",
            KeepSide::DownwardClosed => "downward-closed",
        };
        let mut s = format!(
            "quick-prune [{}] keep `{}` {side}",
            evaluator_names(&self.evs),
            self.keep
        );
        if let Some(c) = &self.concern {
            s.push_str(&format!(" on `{c}`"));
        }
        s
    }

    fn evaluators(&self) -> &[EvaluatorRef] {
        &self.evs
    }

    fn apply(&self, space: &DesignSpace, ctx: &StepContext<'_>) -> Result<StepOutput, StepError> {
        let grid = match &self.concern {
            Some(c) => project_space(space, c, true)?,
            None => space.clone(),
        };
        if grid.is_empty() {
            return Ok(StepOutput {
                space: space.clone(),
                report: StepReport::default(),
            });
        }
        check_transform(&grid, &self.evs, ctx.policy)?;
        let mut search = self.searcher(&grid, ctx);
        let result = search.run()?;
        if self.annotate {
            search.ensure(&result.kept)?;
        }

        // Metrics produced during the search, keyed by grid position.
        let base = |pos: usize| grid.points()[pos].metrics().len();
        let annotated = |pos: usize| -> Option<&Point> {
            match search.known.get(&pos) {
                Some(Known::Kept(p)) | Some(Known::Rejected(p)) if self.annotate => Some(p),
                _ => None,
            }
        };
        let kept: HashSet<usize> = result.kept.iter().copied().collect();

        let mut points = Vec::with_capacity(kept.len());
        match &self.concern {
            None => {
                for &pos in &result.kept {
                    points.push(annotated(pos).unwrap_or(&grid.points()[pos]).clone());
                }
            }
            Some(_) => {
                let axes: Vec<usize> = grid
                    .schema()
                    .params()
                    .iter()
                    .map(|p| {
                        space
                            .schema()
                            .position(p.name.as_str())
                            .expect("projected axis")
                    })
                    .collect();
                for p in space.points() {
                    let coords: Vec<usize> = axes.iter().map(|&k| p.coords()[k]).collect();
                    let pos = grid.positions_at(&coords)[0];
                    if !kept.contains(&pos) {
                        continue;
                    }
                    let mut q = p.clone();
                    if let Some(e) = annotated(pos) {
                        q.push_metrics(e.metrics()[base(pos)..].iter().cloned());
                        if e.is_degraded() {
                            q.mark_degraded();
                        }
                    }
                    points.push(q);
                }
            }
        }

        let mut report = StepReport {
            failed: search.failed,
            degraded: search.degraded,
            points_evaluated: Some(search.known.len()),
            ..StepReport::default()
        };
        report = report
            .detail("grid_points", grid.len())
            .detail("predicate_evaluations", result.predicate_evaluations)
            .detail("frontier_points", result.frontier.len());
        if result.seed.is_none() {
            report = report.detail("no_kept_point", true);
        }
        Ok(StepOutput {
            space: space.with_points(points),
            report,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::exec::Executor;
    use crate::metrics::{Cache, ExprEvaluator, FailPolicy};
    use crate::space::build_space;
    use crate::space::test_support::{dummy_schema, grid};

    fn ctx_run<T>(f: impl FnOnce(&StepContext<'_>) -> T) -> T {
        let cache = Cache::new();
        let exec = Executor::sequential();
        let policy = FailPolicy::Abort;
        f(&StepContext {
            cache: &cache,
            exec: &exec,
            policy: &policy,
        })
    }

    fn pred(keep: &str) -> QuickPrune {
        QuickPrune::new(vec![], MetricExpr::parse(keep).unwrap())
    }

    fn brute(space: &DesignSpace, keep: &str) -> Vec<usize> {
        let e = MetricExpr::parse(keep).unwrap();
        (0..space.len())
            .filter(|&p| crate::metrics::test_on(&e, space.at(p)).unwrap())
            .collect()
    }

    #[test]
    fn anti_diagonal_half_plane() {
        let space = grid(&[10, 10]);
        let keep = "x0 + x1 >= 9";
        let r = ctx_run(|c| pred(keep).search(&space, c)).unwrap();
        assert_eq!(r.kept, brute(&space, keep));
        assert_eq!(r.kept.len(), 55);
        assert!(r.predicate_evaluations < 100);
    }

    #[test]
    fn tautology_keeps_everything() {
        let space = grid(&[4, 6]);
        let r = ctx_run(|c| pred("1 == 1").search(&space, c)).unwrap();
        assert_eq!(r.kept.len(), 24);
        assert_eq!(r.seed, Some(0));
        assert!(r.frontier.is_empty());
    }

    #[test]
    fn contradiction_keeps_nothing() {
        let space = grid(&[4, 6]);
        let out = ctx_run(|c| pred("1 == 0").apply(&space, c)).unwrap();
        assert!(out.space.is_empty());
        assert_eq!(out.report.details["no_kept_point"], serde_json::json!(true));
    }

    #[test]
    fn downward_closed() {
        let space = grid(&[8, 5, 3]);
        let keep = "2 * x0 + 3 * x1 + x2 <= 11";
        let r = ctx_run(|c| pred(keep).side(KeepSide::DownwardClosed).search(&space, c)).unwrap();
        assert_eq!(r.kept, brute(&space, keep));
    }

    #[test]
    fn dominated_probe_matches_exhaustive_probe() {
        let space = grid(&[9, 7]);
        let keep = "x0 * x1 >= 12";
        let a = ctx_run(|c| pred(keep).search(&space, c)).unwrap();
        let b = ctx_run(|c| {
            pred(keep)
                .probe(FrontierProbe::Exhaustive)
                .search(&space, c)
        })
        .unwrap();
        assert_eq!(a.kept, b.kept);
        assert_eq!(a.frontier, b.frontier);
        assert!(a.predicate_evaluations <= b.predicate_evaluations);
    }

    #[test]
    fn frontier_matches_definition() {
        let space = grid(&[9, 7]);
        let keep = "x0 * x1 >= 12";
        let k = brute(&space, keep);
        let expected: Vec<usize> = k
            .iter()
            .copied()
            .filter(|&p| {
                space
                    .neighbour_positions(p, Norm::Linf, 1)
                    .iter()
                    .any(|q| !k.contains(q))
            })
            .collect();
        let r = ctx_run(|c| pred(keep).search(&space, c)).unwrap();
        assert_eq!(r.frontier, expected);
    }

    #[test]
    fn concern_projection_reexpands() {
        let space = build_space(dummy_schema());
        let qos = Arc::new(ExprEvaluator::single("qos", "err", "10 - p1 - p3 / 3").unwrap());
        let step = QuickPrune::new(vec![qos], MetricExpr::parse("err <= 4").unwrap())
            .concern(Some("qos".into()))
            .annotate(true);
        let out = ctx_run(|c| step.apply(&space, c)).unwrap();
        let expected: Vec<&Point> = space
            .points()
            .iter()
            .filter(|p| {
                let v = space.point_ref(p).raw_values();
                10.0 - v[0] as f64 - v[2] as f64 / 3.0 <= 4.0
            })
            .collect();
        assert_eq!(out.space.len(), expected.len());
        for (got, want) in out.space.points().iter().zip(expected) {
            assert_eq!(got.coords(), want.coords());
            let v = space.point_ref(want).raw_values();
            assert_eq!(
                got.metric("err"),
                Some(10.0 - v[0] as f64 - v[2] as f64 / 3.0)
            );
        }
        assert!(out.report.details["grid_points"] == serde_json::json!(51));
    }

    #[test]
    fn requires_full_grid() {
        let space = grid(&[3, 3]);
        let partial = space.with_points(space.points()[1..].to_vec());
        let err = ctx_run(|c| pred("x0 >= 1").apply(&partial, c))
            .err()
            .unwrap();
        assert!(matches!(
            err,
            StepError::Space(crate::space::SpaceError::NotAFullGrid { .. })
        ));
    }
}
