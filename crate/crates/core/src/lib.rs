//! Design-space exploration engine.
//!
//! A design space is the Cartesian product of annotated integer parameter
//! domains ([`space`]). Evaluators attach named metrics to its points
//! ([`metrics`]), and exploration strategies are space-to-space steps that
//! compose into pipelines ([`strategy`]). [`surrogate`] and [`bsim`] provide
//! analytic and simulated evaluators; [`cli`] drives everything from config
//! files.

pub mod bsim;
pub mod cli;
pub mod exec;
pub mod metrics;
pub mod space;
pub mod strategy;
pub mod surrogate;

use std::path::PathBuf;

pub use exec::Executor;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Space(#[from] space::SpaceError),
    #[error(transparent)]
    Expr(#[from] metrics::ExprError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Step(#[from] strategy::StepError),
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
