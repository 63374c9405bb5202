//! Analytic stand-ins for synthesis and RTL-level estimation tools.
//!
//! A [`ResourceModel`] is a small declarative file of metric formulas over
//! the design parameters. It can be evaluated in-process through
//! [`ModelEvaluator`] or served as an external tool with [`serve`], which
//! speaks the external-command protocol of [`crate::metrics`].

pub mod fixtures;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::external::{env_var_name, render_number};
use crate::metrics::{eval_formulas, EvalError, EvalErrorKind, Evaluator, MetricExpr};
use crate::space::{MetricName, PointRef, Schema};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot parse model: {0}")]
    Parse(String),
    #[error("model `{model}`: {msg}")]
    Invalid { model: String, msg: String },
    #[error("missing environment variable {0}")]
    MissingInput(String),
    #[error("invalid value `{value}` for {var}")]
    BadInput { var: String, value: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model `{0}`: failure rule triggered")]
    Triggered(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceModel {
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Output metrics, in the order they are computed.
    pub produces: Vec<MetricName>,
    pub formulas: BTreeMap<String, MetricExpr>,
    /// Simulated tool run time per evaluation.
    #[serde(default)]
    pub latency_s: f64,
    /// Points matching this predicate fail with a timeout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_if: Option<MetricExpr>,
    /// How long the served tool hangs on a failing point, so that the
    /// client's timeout fires.
    #[serde(default)]
    pub fail_sleep_s: f64,
}

impl ResourceModel {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let model: ResourceModel = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_file(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Self::parse(&text).map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))
    }

    fn invalid(&self, msg: impl Into<String>) -> ModelError {
        ModelError::Invalid {
            model: self.name.clone(),
            msg: msg.into(),
        }
    }

    /// Checks that formulas and outputs correspond one to one and that no
    /// formula reads a metric computed after it.
    pub fn validate(&self) -> Result<(), ModelError> {
        let produced: BTreeSet<&str> = self.produces.iter().map(MetricName::as_str).collect();
        if produced.len() != self.produces.len() {
            return Err(self.invalid("duplicate output"));
        }
        for m in &self.produces {
            if !self.formulas.contains_key(m.as_str()) {
                return Err(self.invalid(format!("no formula for `{m}`")));
            }
        }
        if let Some(extra) = self
            .formulas
            .keys()
            .find(|k| !produced.contains(k.as_str()))
        {
            return Err(self.invalid(format!("formula `{extra}` is not listed in produces")));
        }
        for (i, m) in self.produces.iter().enumerate() {
            let later: Vec<&str> = self.produces[i..].iter().map(MetricName::as_str).collect();
            if let Some(n) = self.formulas[m.as_str()]
                .names()
                .into_iter()
                .find(|n| later.contains(n))
            {
                return Err(self.invalid(format!("`{m}` reads `{n}` before it is computed")));
            }
        }
        if self.latency_s < 0.0 || self.fail_sleep_s < 0.0 {
            return Err(self.invalid("negative duration"));
        }
        Ok(())
    }

    /// Parameter names the model reads.
    pub fn inputs(&self) -> Vec<String> {
        let produced: BTreeSet<&str> = self.produces.iter().map(MetricName::as_str).collect();
        let mut names = BTreeSet::new();
        for f in self.formulas.values().chain(self.fail_if.iter()) {
            for n in f.names() {
                if !produced.contains(n) {
                    names.insert(n.to_string());
                }
            }
        }
        names.into_iter().collect()
    }

    /// Checks that every input is a parameter of `schema`.
    pub fn check_against(&self, schema: &Schema) -> Result<(), ModelError> {
        match self
            .inputs()
            .into_iter()
            .find(|n| schema.position(n).is_none())
        {
            Some(n) => Err(self.invalid(format!("`{n}` is not a parameter of the schema"))),
            None => Ok(()),
        }
    }

    fn ordered_formulas(&self) -> Vec<MetricExpr> {
        self.produces
            .iter()
            .map(|m| self.formulas[m.as_str()].clone())
            .collect()
    }

    /// Evaluates the model over named parameter values. Returns
    /// [`ModelError::Triggered`] when the failure rule matches.
    pub fn evaluate(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<Vec<f64>, ModelError> {
        if let Some(rule) = &self.fail_if {
            if rule.eval_bool(lookup).map_err(EvalError::from)? {
                return Err(ModelError::Triggered(self.name.clone()));
            }
        }
        Ok(eval_formulas(
            &self.produces,
            &self.ordered_formulas(),
            lookup,
        )?)
    }
}

/// In-process evaluator for a [`ResourceModel`].
///
/// Formulas see only parameters and frozen parameters, never metrics
/// accumulated by earlier steps. A triggered failure rule surfaces as an
/// immediate [`EvalErrorKind::Timeout`].
pub struct ModelEvaluator {
    name: String,
    model: ResourceModel,
    formulas: Vec<MetricExpr>,
}

impl ModelEvaluator {
    pub fn new(model: ResourceModel) -> Self {
        Self::named(model.name.clone(), model)
    }

    pub fn named(name: impl Into<String>, model: ResourceModel) -> Self {
        let formulas = model.ordered_formulas();
        Self {
            name: name.into(),
            model,
            formulas,
        }
    }

    pub fn model(&self) -> &ResourceModel {
        &self.model
    }
}

impl Evaluator for ModelEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.model.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        let params = point.parameter_values();
        let lookup = |n: &str| params.iter().find(|(k, _)| k == n).map(|(_, v)| *v);
        if self.model.latency_s > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(self.model.latency_s));
        }
        if let Some(rule) = &self.model.fail_if {
            if rule.eval_bool(&lookup)? {
                return Err(EvalError::new(
                    EvalErrorKind::Timeout,
                    format!("model `{}` failure rule `{rule}`", self.model.name),
                ));
            }
        }
        eval_formulas(&self.model.produces, &self.formulas, &lookup)
    }
}

/// One-shot tool behaviour: reads the model inputs from `DSEX_*` variables
/// through `env`, and returns the flat metric object to print.
///
/// A triggered failure rule hangs for `fail_sleep_s` before reporting.
pub fn serve(
    model: &ResourceModel,
    env: impl Fn(&str) -> Option<String>,
) -> Result<String, ModelError> {
    let mut values = Vec::new();
    for name in model.inputs() {
        let var = env_var_name(&name);
        let raw = env(&var).ok_or_else(|| ModelError::MissingInput(var.clone()))?;
        let v: f64 = raw.trim().parse().map_err(|_| ModelError::BadInput {
            var: var.clone(),
            value: raw.clone(),
        })?;
        values.push((name, v));
    }
    let lookup = |n: &str| values.iter().find(|(k, _)| k == n).map(|(_, v)| *v);
    if model.latency_s > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(model.latency_s));
    }
    match model.evaluate(&lookup) {
        Err(ModelError::Triggered(name)) => {
            std::thread::sleep(Duration::from_secs_f64(model.fail_sleep_s));
            Err(ModelError::Triggered(name))
        }
        Err(e) => Err(e),
        Ok(out) => {
            let body: Vec<String> = model
                .produces
                .iter()
                .zip(out)
                .map(|(m, v)| format!("\"{m}\": {}", render_number(v)))
                .collect();
            Ok(format!("{{{}}}", body.join(", ")))
        }
    }
}
