use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{ResultFrame, Step, StepContext, StepError, StepReport};
use crate::exec::Executor;
use crate::metrics::{Cache, CacheStats, FailPolicy};
use crate::space::DesignSpace;

pub struct PipelineStep {
    pub step: Arc<dyn Step>,
    /// Overrides the pipeline's policy for this step.
    pub policy: Option<FailPolicy>,
}

impl PipelineStep {
    pub fn new(step: impl Step + 'static) -> Self {
        Self {
            step: Arc::new(step),
            policy: None,
        }
    }

    pub fn with_policy(mut self, policy: FailPolicy) -> Self {
        self.policy = Some(policy);
        self
    }
}

/// Steps applied in listed order, each consuming the previous output.
pub struct Pipeline {
    pub steps: Vec<PipelineStep>,
    pub parallelism: usize,
    pub fail_policy: FailPolicy,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepProvenance {
    pub index: usize,
    pub step: String,
    pub description: String,
    pub input_points: usize,
    pub output_points: usize,
    /// Evaluator invocations (cache misses) during the step.
    pub evaluations: u64,
    pub cache_hits: u64,
    pub wall_ms: f64,
    pub report: StepReport,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Provenance {
    pub steps: Vec<StepProvenance>,
    pub evaluations: u64,
    pub cache_hits: u64,
    pub wall_ms: f64,
}

pub struct RunOutput {
    pub space: DesignSpace,
    pub provenance: Provenance,
}

impl RunOutput {
    pub fn frame(&self) -> ResultFrame {
        ResultFrame::from_space(&self.space)
    }
}

#[derive(Debug)]
pub struct PipelineFailure {
    pub step: usize,
    pub error: StepError,
    /// Provenance of the steps that completed before the failure.
    pub provenance: Provenance,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} failed: {}", self.step, self.error)
    }
}

impl std::error::Error for PipelineFailure {}

impl Pipeline {
    pub fn new(steps: Vec<PipelineStep>) -> Self {
        Self {
            steps,
            parallelism: 1,
            fail_policy: FailPolicy::Abort,
        }
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn with_fail_policy(mut self, policy: FailPolicy) -> Self {
        self.fail_policy = policy;
        self
    }

    /// Runs every step against `cache`. A warm cache makes a re-run free of
    /// evaluator invocations.
    pub fn run(&self, space: &DesignSpace, cache: &Cache) -> Result<RunOutput, PipelineFailure> {
        let exec = Executor::new(self.parallelism);
        let started = Instant::now();
        let before_all = cache.stats();
        let mut provenance = Provenance::default();
        let mut current = space.clone();
        for (index, ps) in self.steps.iter().enumerate() {
            let policy = ps.policy.as_ref().unwrap_or(&self.fail_policy);
            let ctx = StepContext {
                cache,
                exec: &exec,
                policy,
            };
            let t0 = Instant::now();
            let before = cache.stats();
            log::info!("step {index}: {}", ps.step.describe());
            let out = match ps.step.apply(&current, &ctx) {
                Ok(out) => out,
                Err(error) => {
                    provenance.wall_ms = ms(started);
                    return Err(PipelineFailure {
                        step: index,
                        error,
                        provenance,
                    });
                }
            };
            let delta = cache.stats().since(before);
            log::info!(
                "step {index}: {} -> {} points, {} evaluations",
                current.len(),
                out.space.len(),
                delta.misses
            );
            provenance.steps.push(StepProvenance {
                index,
                step: ps.step.name().to_string(),
                description: ps.step.describe(),
                input_points: current.len(),
                output_points: out.space.len(),
                evaluations: delta.misses,
                cache_hits: delta.hits,
                wall_ms: ms(t0),
                report: out.report,
            });
            current = out.space;
        }
        let CacheStats { hits, misses } = cache.stats().since(before_all);
        provenance.evaluations = misses;
        provenance.cache_hits = hits;
        provenance.wall_ms = ms(started);
        Ok(RunOutput {
            space: current,
            provenance,
        })
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs `pipeline` on `space` with a fresh cache.
pub fn run_pipeline(
    pipeline: &Pipeline,
    space: &DesignSpace,
) -> Result<RunOutput, PipelineFailure> {
    pipeline.run(space, &Cache::new())
}
