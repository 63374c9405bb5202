//! Evaluators backed by an external process.
//!
//! Protocol: the process receives the point's raw parameter values through
//! `{name}` placeholders in its argv/env templates and as `DSEX_<NAME>`
//! environment variables, and prints a flat JSON object of name to number
//! on stdout. Exit status 0 means success.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::evaluator::{EvalError, EvalErrorKind, Evaluator};
use crate::space::{MetricName, PointRef};

/// Prefix of the environment variables carrying parameter values.
pub const ENV_PREFIX: &str = "DSEX_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub argv: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    pub produces: Vec<MetricName>,
}

fn default_timeout() -> f64 {
    7200.0
}

pub struct ExternalCommand {
    name: String,
    cmd: CommandSpec,
}

impl ExternalCommand {
    pub fn new(name: impl Into<String>, cmd: CommandSpec) -> Self {
        Self {
            name: name.into(),
            cmd,
        }
    }

    pub fn command(&self) -> &CommandSpec {
        &self.cmd
    }

    /// Command line and extra environment for `point`.
    pub fn render(
        &self,
        point: PointRef<'_>,
    ) -> Result<(Vec<String>, Vec<(String, String)>), EvalError> {
        let argv = self
            .cmd
            .argv
            .iter()
            .map(|a| substitute(a, point))
            .collect::<Result<Vec<_>, _>>()?;
        let mut env: Vec<(String, String)> = point
            .parameter_values()
            .into_iter()
            .map(|(n, v)| (env_var_name(&n), render_number(v)))
            .collect();
        for (k, v) in &self.cmd.env {
            env.push((k.clone(), substitute(v, point)?));
        }
        Ok((argv, env))
    }
}

pub fn env_var_name(param: &str) -> String {
    format!("{ENV_PREFIX}{}", param.to_uppercase())
}

/// Integral values print without a fractional part; everything else uses
/// the shortest representation that round-trips.
pub fn render_number(v: f64) -> String {
    if v == 0.0 && v.is_sign_negative() {
        "-0.0".to_string()
    } else if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Replaces `{name}` placeholders. Braces not enclosing an identifier are
/// left untouched, so literal JSON survives.
fn substitute(template: &str, point: PointRef<'_>) -> Result<String, EvalError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if crate::space::is_identifier(&after[..close]) => {
                let name = &after[..close];
                let v = point.lookup(name).ok_or_else(|| {
                    EvalError::new(
                        EvalErrorKind::NameNotFound(name.to_string()),
                        format!("placeholder `{{{name}}}` in `{template}`"),
                    )
                })?;
                out.push_str(&render_number(v));
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses the flat name-to-number object printed by a tool and picks the
/// declared metrics, in declaration order.
pub fn parse_flat_object(text: &str, produces: &[MetricName]) -> Result<Vec<f64>, EvalError> {
    let parse_err = |detail: String| EvalError::new(EvalErrorKind::ParseFailure, detail);
    let value: serde_json::Value = serde_json::from_str(text.trim())
        .map_err(|e| parse_err(format!("tool output is not JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("tool output is not an object".into()))?;
    produces
        .iter()
        .map(|name| {
            obj.get(name.as_str())
                .ok_or_else(|| parse_err(format!("metric `{name}` missing from tool output")))?
                .as_f64()
                .ok_or_else(|| parse_err(format!("metric `{name}` is not a number")))
        })
        .collect()
}

fn tail(bytes: &[u8]) -> String {
    let s = String::from_utf8_lossy(bytes);
    let s = s.trim();
    let start = s.len().saturating_sub(400);
    let start = (start..=s.len())
        .find(|&i| s.is_char_boundary(i))
        .unwrap_or(s.len());
    s[start..].to_string()
}

impl Evaluator for ExternalCommand {
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.cmd.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        let (argv, env) = self.render(point)?;
        let Some((program, args)) = argv.split_first() else {
            return Err(EvalError::new(
                EvalErrorKind::ToolFailure(None),
                "empty command line",
            ));
        };
        let mut child = Command::new(program)
            .args(args)
            .envs(env)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                EvalError::new(
                    EvalErrorKind::ToolFailure(None),
                    format!("cannot start `{program}`: {e}"),
                )
            })?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let timeout = Duration::from_secs_f64(self.cmd.timeout_s.max(0.0));
        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                // Readers may stay blocked on pipes held by grandchildren;
                // leave them detached.
                return Err(EvalError::new(
                    EvalErrorKind::Timeout,
                    format!("`{program}` exceeded {}s", self.cmd.timeout_s),
                ));
            }
            Err(e) => {
                let _ = child.kill();
                return Err(EvalError::new(
                    EvalErrorKind::ToolFailure(None),
                    e.to_string(),
                ));
            }
        };
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(EvalError::new(
                EvalErrorKind::ToolFailure(status.code()),
                format!("`{program}` failed: {}", tail(&err)),
            ));
        }
        parse_flat_object(&String::from_utf8_lossy(&out), &self.cmd.produces)
    }
}
