//! Declarative pipelines: an ordered list of step records plus a registry
//! of named evaluators.
//!
//! ```toml
//! fail_policy = "abort"
//!
//! [evaluators.estim]
//! kind = "model"
//! model = "../models/dummy-estim.toml"
//!
//! [[steps]]
//! step = "prune"
//! evaluators = ["estim"]
//! keep = "DSP_estim < 64"
//! ```
//!
//! Relative model paths resolve against the directory of the file that
//! declares them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    ExhaustiveMap, ExhaustivePrune, ExhaustiveSort, FrontierProbe, GradientSort, Identity,
    KeepSide, Pipeline, PipelineStep, QuickPrune, ReduceDimension,
};
use crate::bsim::{Drift, LatencyEvaluator, ModelParams, QosEvaluator};
use crate::metrics::{
    CommandSpec, EvaluatorRef, ExprEvaluator, ExternalCommand, FailPolicy, MetricExpr,
};
use crate::space::MetricName;
use crate::surrogate::{ModelEvaluator, ResourceModel};
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvaluatorSpec {
    /// Formulas in the expression language, computed in `produces` order.
    Expr {
        produces: Vec<MetricName>,
        formulas: BTreeMap<String, MetricExpr>,
    },
    /// A surrogate model file.
    Model { model: PathBuf },
    /// An external tool.
    Command {
        argv: Vec<String>,
        #[serde(default)]
        env: BTreeMap<String, String>,
        timeout_s: Option<f64>,
        produces: Vec<MetricName>,
    },
    /// Simulated Black-Scholes quality of service.
    BsQos {
        #[serde(default)]
        params: ModelParams,
        #[serde(default)]
        drift: Drift,
        /// Overrides the run's global seed.
        seed: Option<u64>,
    },
    /// Black-Scholes batch latency in cycles.
    BsLatency {
        #[serde(default)]
        overhead: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepKind {
    Identity,
    Map {
        evaluators: Vec<String>,
    },
    Sort {
        #[serde(default)]
        evaluators: Vec<String>,
        key: MetricExpr,
        #[serde(default = "yes")]
        ascending: bool,
    },
    Prune {
        #[serde(default)]
        evaluators: Vec<String>,
        keep: MetricExpr,
    },
    ReduceDimension {
        concern: String,
        #[serde(default = "yes")]
        project_to_min: bool,
    },
    QuickPrune {
        #[serde(default)]
        evaluators: Vec<String>,
        keep: MetricExpr,
        #[serde(default)]
        keep_side: KeepSide,
        concern: Option<String>,
        #[serde(default)]
        probe: FrontierProbe,
        #[serde(default)]
        annotate: bool,
    },
    Gradient {
        #[serde(default)]
        evaluators: Vec<String>,
        objective: MetricExpr,
        #[serde(default = "yes")]
        maximize: bool,
    },
}

fn yes() -> bool {
    true
}

/// A step plus its optional failure-policy override.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    #[serde(flatten)]
    pub kind: StepKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fail_policy: Option<FailPolicy>,
}

impl<'de> Deserialize<'de> for StepRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(d)?;
        let fail_policy = table
            .remove("fail_policy")
            .map(|v| v.try_into::<FailPolicy>())
            .transpose()
            .map_err(D::Error::custom)?;
        let kind = toml::Value::Table(table)
            .try_into::<StepKind>()
            .map_err(D::Error::custom)?;
        Ok(Self { kind, fail_policy })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub parallelism: Option<usize>,
    pub fail_policy: Option<FailPolicy>,
    #[serde(default)]
    pub evaluators: BTreeMap<String, EvaluatorSpec>,
    #[serde(default)]
    pub steps: Vec<StepRecord>,
}

/// A file holding only an `[evaluators]` section.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    evaluators: BTreeMap<String, EvaluatorSpec>,
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn config_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Makes relative model paths absolute with respect to `dir`.
fn anchor(entries: &mut BTreeMap<String, EvaluatorSpec>, dir: &Path) {
    for entry in entries.values_mut() {
        if let EvaluatorSpec::Model { model } = entry {
            if model.is_relative() {
                *model = dir.join(&*model);
            }
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let mut cfg: Self = toml::from_str(&read(path)?).map_err(|e| config_err(path, e))?;
        anchor(&mut cfg.evaluators, &base_dir(path));
        Ok(cfg)
    }

    /// Adds the evaluators declared in a separate registry file.
    pub fn merge_registry(&mut self, path: &Path) -> Result<(), Error> {
        let mut reg: RegistryFile =
            toml::from_str(&read(path)?).map_err(|e| config_err(path, e))?;
        anchor(&mut reg.evaluators, &base_dir(path));
        for (name, entry) in reg.evaluators {
            if self.evaluators.contains_key(&name) {
                return Err(config_err(
                    path,
                    format!("evaluator `{name}` declared twice"),
                ));
            }
            self.evaluators.insert(name, entry);
        }
        Ok(())
    }

    /// Instantiates the evaluator registry. `seed` is the run's global seed.
    pub fn build_evaluators(&self, seed: u64) -> Result<BTreeMap<String, EvaluatorRef>, Error> {
        self.evaluators
            .iter()
            .map(|(name, entry)| Ok((name.clone(), build_evaluator(name, entry, seed)?)))
            .collect()
    }

    /// Instantiates the pipeline against `registry`.
    pub fn build(&self, registry: &BTreeMap<String, EvaluatorRef>) -> Result<Pipeline, Error> {
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let mut step = build_step(&rec.kind, registry)
                    .map_err(|e| Error::Config(format!("step {i}: {e}")))?;
                step.policy = rec.fail_policy.clone();
                Ok(step)
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let mut pipeline = Pipeline::new(steps);
        if let Some(p) = self.parallelism {
            pipeline = pipeline.with_parallelism(p);
        }
        if let Some(fp) = &self.fail_policy {
            pipeline = pipeline.with_fail_policy(fp.clone());
        }
        Ok(pipeline)
    }
}

fn build_evaluator(name: &str, entry: &EvaluatorSpec, seed: u64) -> Result<EvaluatorRef, Error> {
    Ok(match entry {
        EvaluatorSpec::Expr { produces, formulas } => {
            let ordered = produces
                .iter()
                .map(|m| {
                    formulas
                        .get(m.as_str())
                        .cloned()
                        .map(|f| (m.clone(), f))
                        .ok_or_else(|| {
                            Error::Config(format!("evaluator `{name}`: no formula for `{m}`"))
                        })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            if formulas.len() != produces.len() {
                return Err(Error::Config(format!(
                    "evaluator `{name}`: formulas and produces differ"
                )));
            }
            Arc::new(ExprEvaluator::new(name, ordered))
        }
        EvaluatorSpec::Model { model } => Arc::new(ModelEvaluator::named(
            name,
            ResourceModel::from_file(model)?,
        )),
        EvaluatorSpec::Command {
            argv,
            env,
            timeout_s,
            produces,
        } => {
            if argv.is_empty() {
                return Err(Error::Config(format!("evaluator `{name}`: empty argv")));
            }
            let mut entry = CommandSpec {
                argv: argv.clone(),
                env: env.clone(),
                timeout_s: 7200.0,
                produces: produces.clone(),
            };
            if let Some(t) = timeout_s {
                entry.timeout_s = *t;
            }
            Arc::new(ExternalCommand::new(name, entry))
        }
        EvaluatorSpec::BsQos {
            params,
            drift,
            seed: own,
        } => Arc::new(
            QosEvaluator::new(*params, own.unwrap_or(seed))
                .named(name)
                .drift(*drift),
        ),
        EvaluatorSpec::BsLatency { overhead } => {
            Arc::new(LatencyEvaluator::new(*overhead).named(name))
        }
    })
}

fn lookup(
    names: &[String],
    registry: &BTreeMap<String, EvaluatorRef>,
) -> Result<Vec<EvaluatorRef>, String> {
    names
        .iter()
        .map(|n| {
            registry
                .get(n)
                .cloned()
                .ok_or_else(|| format!("unknown evaluator `{n}`"))
        })
        .collect()
}

fn build_step(
    kind: &StepKind,
    registry: &BTreeMap<String, EvaluatorRef>,
) -> Result<PipelineStep, String> {
    let step = match kind {
        StepKind::Identity => PipelineStep::new(Identity),
        StepKind::Map { evaluators } => {
            PipelineStep::new(ExhaustiveMap::new(lookup(evaluators, registry)?))
        }
        StepKind::Sort {
            evaluators,
            key,
            ascending,
        } => PipelineStep::new(ExhaustiveSort::new(
            lookup(evaluators, registry)?,
            key.clone(),
            *ascending,
        )),
        StepKind::Prune { evaluators, keep } => PipelineStep::new(ExhaustivePrune::new(
            lookup(evaluators, registry)?,
            keep.clone(),
        )),
        StepKind::ReduceDimension {
            concern,
            project_to_min,
        } => PipelineStep::new(ReduceDimension::new(concern.clone(), *project_to_min)),
        StepKind::QuickPrune {
            evaluators,
            keep,
            keep_side,
            concern,
            probe,
            annotate,
        } => PipelineStep::new(
            QuickPrune::new(lookup(evaluators, registry)?, keep.clone())
                .side(*keep_side)
                .concern(concern.clone())
                .probe(*probe)
                .annotate(*annotate),
        ),
        StepKind::Gradient {
            evaluators,
            objective,
            maximize,
        } => PipelineStep::new(GradientSort::new(
            lookup(evaluators, registry)?,
            objective.clone(),
            *maximize,
        )),
    };
    Ok(step)
}
