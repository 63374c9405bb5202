//! Monte Carlo Black-Scholes kernel simulated in signed fixed point.
//!
//! Each estimation runs `nbIteration` independent Euler-Maruyama paths of
//! `nbEuler` steps. Normal deviates come from a combined Tausworthe
//! generator fed through Box-Muller; every multiplication is carried out
//! on quantized values, as the hardware datapath would. The `error` metric
//! is the relative distance between the mean path endpoint and the
//! analytic expectation `S0 * exp(mu * T)`.

mod fixed;
mod rng;

use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::metrics::{EvalError, EvalErrorKind, Evaluator};
use crate::space::{MetricName, PointRef};

pub use fixed::FixedFormat;
pub use rng::{seed_for, Taus88};

/// Option-pricing model constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub t: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            s0: 100.0,
            mu: 0.05,
            sigma: 0.2,
            t: 1.0,
        }
    }
}

/// Drift term of the per-step multiplier `1 + drift * dt + sigma * sqrt(dt) * z`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Drift {
    /// `mu`: the discretized mean tracks `S0 * exp(mu * T)`.
    #[default]
    Plain,
    /// `mu - sigma^2 / 2`, the log-space drift.
    Ito,
}

impl Drift {
    fn rate(self, m: &ModelParams) -> f64 {
        match self {
            Drift::Plain => m.mu,
            Drift::Ito => m.mu - 0.5 * m.sigma * m.sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsConfig {
    pub dynamic: u32,
    pub precision: u32,
    pub nb_iteration: u64,
    pub nb_euler: u32,
    /// Only affects latency; the estimate never depends on it.
    pub nb_core: u64,
    pub model: ModelParams,
    pub drift: Drift,
    pub seed: u64,
}

impl BsConfig {
    pub fn new(dynamic: u32, precision: u32, nb_iteration: u64, nb_euler: u32) -> Self {
        Self {
            dynamic,
            precision,
            nb_iteration,
            nb_euler,
            nb_core: 1,
            model: ModelParams::default(),
            drift: Drift::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_model(mut self, model: ModelParams) -> Self {
        self.model = model;
        self
    }

    fn format(&self) -> FixedFormat {
        FixedFormat::new(self.dynamic, self.precision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Arithmetic operations that hit the saturation bound.
    pub saturations: u64,
}

/// `E[S(T)] = S0 * exp(mu * T)`.
pub fn closed_form(m: &ModelParams) -> f64 {
    m.s0 * (m.mu * m.t).exp()
}

/// Simulated kernel, one path after the other.
pub fn euler_estimate(cfg: &BsConfig) -> Estimate {
    let kernel = Kernel::new(cfg);
    let (sum, sat) = kernel.paths(0..cfg.nb_iteration);
    kernel.finish(sum, sat)
}

/// Same result as [`euler_estimate`], with paths spread over `exec`.
/// Endpoints are summed exactly, so the value does not depend on the
/// split.
pub fn euler_estimate_with(cfg: &BsConfig, exec: &Executor) -> Estimate {
    let kernel = Kernel::new(cfg);
    let chunk = 64u64;
    let chunks: Vec<u64> = (0..cfg.nb_iteration.div_ceil(chunk)).collect();
    let parts = exec.map(&chunks, |_, &c| {
        kernel.paths(c * chunk..((c + 1) * chunk).min(cfg.nb_iteration))
    });
    let (sum, sat) = parts.into_iter().fold((0i128, 0u64), |(s, n), (ps, pn)| {
        (s.saturating_add(ps), n + pn)
    });
    kernel.finish(sum, sat)
}

/// Double-precision run over the same normal deviates.
pub fn reference_estimate(cfg: &BsConfig) -> f64 {
    let m = &cfg.model;
    let dt = m.t / cfg.nb_euler as f64;
    let a = 1.0 + cfg.drift.rate(m) * dt;
    let b = m.sigma * dt.sqrt();
    let mut total = 0.0;
    for path in 0..cfg.nb_iteration {
        let mut normals = rng::Normals::new(cfg.seed, path);
        let mut s = m.s0;
        for _ in 0..cfg.nb_euler {
            s *= a + b * normals.next_normal();
        }
        total += s;
    }
    total / cfg.nb_iteration as f64
}

struct Kernel {
    fmt: FixedFormat,
    seed: u64,
    steps: u32,
    count: u64,
    s0: i128,
    a: i128,
    b: i128,
    init_sat: u64,
}

impl Kernel {
    fn new(cfg: &BsConfig) -> Self {
        let fmt = cfg.format();
        let m = &cfg.model;
        let dt = m.t / cfg.nb_euler as f64;
        let mut sat = 0;
        let s0 = fmt.quantize(m.s0, &mut sat);
        let a = fmt.quantize(1.0 + cfg.drift.rate(m) * dt, &mut sat);
        let b = fmt.quantize(m.sigma * dt.sqrt(), &mut sat);
        Self {
            fmt,
            seed: cfg.seed,
            steps: cfg.nb_euler,
            count: cfg.nb_iteration,
            s0,
            a,
            b,
            init_sat: sat,
        }
    }

    fn paths(&self, range: std::ops::Range<u64>) -> (i128, u64) {
        let mut sum = 0i128;
        let mut sat = 0u64;
        for path in range {
            let mut normals = rng::Normals::new(self.seed, path);
            let mut s = self.s0;
            for _ in 0..self.steps {
                let z = self.fmt.quantize(normals.next_normal(), &mut sat);
                let m = self
                    .fmt
                    .add(self.a, self.fmt.mul(self.b, z, &mut sat), &mut sat);
                s = self.fmt.mul(s, m, &mut sat);
            }
            sum = sum.saturating_add(s);
        }
        (sum, sat)
    }

    fn finish(&self, sum: i128, sat: u64) -> Estimate {
        let mut sat = sat + self.init_sat;
        let n = self.count.max(1) as i128;
        let mean = self.fmt.saturate((2 * sum + n).div_euclid(2 * n), &mut sat);
        Estimate {
            value: self.fmt.to_f64(mean),
            saturations: sat,
        }
    }
}

fn param(point: &PointRef<'_>, name: &str) -> Result<f64, EvalError> {
    point.lookup(name).ok_or_else(|| {
        EvalError::new(
            EvalErrorKind::NameNotFound(name.to_string()),
            format!("`{name}` is neither a parameter nor a frozen parameter"),
        )
    })
}

fn whole(point: &PointRef<'_>, name: &str, max: f64) -> Result<u64, EvalError> {
    let v = param(point, name)?;
    if v.fract() != 0.0 || v < 1.0 || v > max {
        return Err(EvalError::new(
            EvalErrorKind::Type,
            format!("`{name}` = {v} is not an integer in [1, {max}]"),
        ));
    }
    Ok(v as u64)
}

/// Quality-of-service evaluator: produces `error` and `saturations`.
///
/// The simulation seed is derived from the global seed and the four
/// QoS-relevant parameters, so a point evaluates identically whether it is
/// reached in the full space or in a projection.
pub struct QosEvaluator {
    name: String,
    model: ModelParams,
    drift: Drift,
    seed: u64,
    produces: Vec<MetricName>,
}

impl QosEvaluator {
    pub fn new(model: ModelParams, seed: u64) -> Self {
        Self {
            name: "qos".into(),
            model,
            drift: Drift::default(),
            seed,
            produces: crate::metrics::names(&["error", "saturations"]),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn config(&self, point: PointRef<'_>) -> Result<BsConfig, EvalError> {
        let dynamic = whole(&point, "dynamic", 48.0)? as u32;
        let precision = whole(&point, "precision", 48.0)? as u32;
        let nb_iteration = whole(&point, "nbIteration", (1u64 << 40) as f64)?;
        let nb_euler = whole(&point, "nbEuler", 65536.0)? as u32;
        Ok(BsConfig {
            dynamic,
            precision,
            nb_iteration,
            nb_euler,
            nb_core: point.lookup("nbCore").map_or(1, |v| v as u64),
            model: self.model,
            drift: self.drift,
            seed: seed_for(
                self.seed,
                &[
                    dynamic as u64,
                    precision as u64,
                    nb_iteration,
                    nb_euler as u64,
                ],
            ),
        })
    }
}

impl Evaluator for QosEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        let cfg = self.config(point)?;
        let reference = closed_form(&self.model);
        if reference == 0.0 {
            return Err(EvalError::new(
                EvalErrorKind::DivByZero,
                "closed-form value is zero; relative error undefined",
            ));
        }
        let est = euler_estimate(&cfg);
        Ok(vec![
            ((est.value - reference) / reference).abs(),
            est.saturations as f64,
        ])
    }
}

/// Cycle count of one estimation batch:
/// `ceil(nbIteration / nbCore) * nbEuler + overhead`.
pub struct LatencyEvaluator {
    name: String,
    overhead: f64,
    produces: Vec<MetricName>,
}

impl LatencyEvaluator {
    pub fn new(overhead: f64) -> Self {
        Self {
            name: "latency".into(),
            overhead,
            produces: crate::metrics::names(&["latency"]),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Default for LatencyEvaluator {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl Evaluator for LatencyEvaluator {
    fn name(&self) -> &str {
        &self.name
    }

    fn produces(&self) -> &[MetricName] {
        &self.produces
    }

    fn evaluate(&self, point: PointRef<'_>) -> Result<Vec<f64>, EvalError> {
        let iterations = param(&point, "nbIteration")?;
        let euler = param(&point, "nbEuler")?;
        let cores = param(&point, "nbCore")?;
        if cores <= 0.0 {
            return Err(EvalError::new(
                EvalErrorKind::DivByZero,
                "nbCore must be positive",
            ));
        }
        Ok(vec![(iterations / cores).ceil() * euler + self.overhead])
    }
}
