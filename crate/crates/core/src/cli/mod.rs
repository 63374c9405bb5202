//! Command-line front end.
//!
//! Exit codes: 0 success, 1 evaluator failure under the abort policy,
//! 2 configuration or schema error, 3 empty final space.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::metrics::{Cache, FailPolicy, MetricExpr, MetricsError};
use crate::space::{build_space, project_space, DesignSpace, Schema};
use crate::strategy::config::PipelineConfig;
use crate::strategy::{Column, PipelineFailure, Provenance, ResultFrame, StepError};
use crate::surrogate::{self, ModelError, ResourceModel};
use crate::Error;

pub const EXIT_EVAL_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_EMPTY: u8 = 3;

/// Default global seed of a run.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "dsex", version, about = "Design-space exploration engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the cardinality of a space and of its concern projections.
    Space {
        #[arg(long)]
        schema: PathBuf,
        /// Only report this concern's projection.
        #[arg(long)]
        concern: Option<String>,
        /// Enumerate the points (raw values, row-major).
        #[arg(long)]
        list: bool,
    },
    /// Run a pipeline and write frame.csv, frame.jsonl and provenance.json.
    Run(RunArgs),
    /// Filter and re-sort a saved frame without re-evaluating anything.
    Report {
        #[arg(long)]
        frame: PathBuf,
        /// Sort key expression.
        #[arg(long)]
        sort: Option<String>,
        #[arg(long)]
        descending: bool,
        /// Keep-predicate expression.
        #[arg(long)]
        keep: Option<String>,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Evaluate a surrogate model once, reading DSEX_* variables and
    /// printing the metrics as a JSON object.
    ServeModel {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run manifest; flags override its fields.
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Extra evaluator registry file.
    #[arg(long)]
    pub evaluators: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `abort` or `prune-failed`.
    #[arg(long)]
    pub fail_policy: Option<FailPolicy>,
    #[arg(long)]
    pub top: Option<usize>,
}

/// Everything a run needs. Relative paths in a manifest file are resolved
/// against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema: PathBuf,
    pub pipeline: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluators: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_policy: Option<FailPolicy>,
    #[serde(default = "default_top")]
    pub top: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("dsex-out")
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_top() -> usize {
    5
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("{0}")]
    Pipeline(Box<PipelineFailure>),
    #[error("the final space is empty")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Setup(Error::Metrics(MetricsError::Eval(_))) => EXIT_EVAL_FAILURE,
            CliError::Setup(Error::Step(e)) => step_code(e),
            CliError::Setup(_) => EXIT_CONFIG,
            CliError::Pipeline(f) => step_code(&f.error),
            CliError::Empty => EXIT_EMPTY,
            CliError::Model(ModelError::Parse(_) | ModelError::Invalid { .. }) => EXIT_CONFIG,
            CliError::Model(_) => EXIT_EVAL_FAILURE,
        }
    }
}

fn step_code(e: &StepError) -> u8 {
    if e.is_evaluation_failure() {
        EXIT_EVAL_FAILURE
    } else if matches!(e, StepError::EmptySpace(_)) {
        EXIT_EMPTY
    } else {
        EXIT_CONFIG
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: RunManifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.schema = resolve(base, &m.schema);
        m.pipeline = resolve(base, &m.pipeline);
        m.evaluators = m.evaluators.map(|e| resolve(base, &e));
        Ok(m)
    }

    /// Manifest file (if any) overlaid with command-line flags.
    pub fn from_args(args: &RunArgs) -> Result<Self, Error> {
        let mut m = match &args.manifest {
            Some(path) => Self::from_file(path)?,
            None => RunManifest {
                schema: args.schema.clone().ok_or_else(|| {
                    Error::Config("--schema is required without a manifest".into())
                })?,
                pipeline: args.pipeline.clone().ok_or_else(|| {
                    Error::Config("--pipeline is required without a manifest".into())
                })?,
                evaluators: None,
                out: default_out(),
                parallelism: None,
                seed: DEFAULT_SEED,
                fail_policy: None,
                top: default_top(),
            },
        };
        if let Some(s) = &args.schema {
            m.schema = s.clone();
        }
        if let Some(p) = &args.pipeline {
            m.pipeline = p.clone();
        }
        if let Some(e) = &args.evaluators {
            m.evaluators = Some(e.clone());
        }
        if let Some(o) = &args.out {
            m.out = o.clone();
        }
        if args.parallelism.is_some() {
            m.parallelism = args.parallelism;
        }
        if let Some(s) = args.seed {
            m.seed = s;
        }
        if let Some(fp) = &args.fail_policy {
            m.fail_policy = Some(fp.clone());
        }
        if let Some(t) = args.top {
            m.top = t;
        }
        for p in [Some(&m.schema), Some(&m.pipeline), m.evaluators.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(m)
    }
}

/// Outcome of a successful [`run`].
pub struct RunResult {
    pub space: DesignSpace,
    pub frame: ResultFrame,
    pub provenance: Provenance,
}

fn load_schema(path: &Path) -> Result<Schema, Error> {
    Schema::from_file(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs the manifest's pipeline against `cache` and writes the output
/// files. Provenance is written even when a step fails.
pub fn run_with_cache(m: &RunManifest, cache: &Cache) -> Result<RunResult, CliError> {
    let schema = load_schema(&m.schema)?;
    let mut cfg = PipelineConfig::from_file(&m.pipeline)?;
    if let Some(reg) = &m.evaluators {
        cfg.merge_registry(reg)?;
    }
    let registry = cfg.build_evaluators(m.seed)?;
    let mut pipeline = cfg.build(&registry)?;
    if let Some(p) = m.parallelism {
        pipeline = pipeline.with_parallelism(p);
    }
    if let Some(fp) = &m.fail_policy {
        pipeline = pipeline.with_fail_policy(fp.clone());
    }
    let space = build_space(schema.clone());
    std::fs::create_dir_all(&m.out).map_err(|e| Error::io(&m.out, e))?;
    write(
        &m.out.join("manifest.toml"),
        &toml::to_string(m).map_err(|e| Error::Config(e.to_string()))?,
    )?;

    let provenance_doc =
        |prov: &Provenance, columns: Option<&[Column]>, failure: Option<String>| {
            json!({
                "manifest": m,
                "schema": schema,
                "pipeline": cfg,
                "parallelism": pipeline.parallelism,
                "columns": columns,
                "run": prov,
                "evaluators": cache.evaluator_stats().into_iter()
                    .map(|(k, s)| (k, json!({"hits": s.hits, "misses": s.misses})))
                    .collect::<serde_json::Map<_, _>>(),
                "failure": failure,
            })
        };
    let prov_path = m.out.join("provenance.json");

    let out = match pipeline.run(&space, cache) {
        Ok(out) => out,
        Err(failure) => {
            let doc = provenance_doc(&failure.provenance, None, Some(failure.to_string()));
            write(&prov_path, &format!("{doc:#}\n"))?;
            return Err(CliError::Pipeline(Box::new(failure)));
        }
    };
    let frame = out.frame();
    write(&m.out.join("frame.csv"), &frame.to_csv())?;
    write(&m.out.join("frame.jsonl"), &frame.to_jsonl())?;
    let doc = provenance_doc(&out.provenance, Some(&frame.columns), None);
    write(&prov_path, &format!("{doc:#}\n"))?;
    if out.space.is_empty() {
        return Err(CliError::Empty);
    }
    Ok(RunResult {
        space: out.space,
        frame,
        provenance: out.provenance,
    })
}

pub fn run(m: &RunManifest) -> Result<RunResult, CliError> {
    run_with_cache(m, &Cache::new())
}

/// Cardinality report, e.g. `full: 459, resource: 153, qos: 51`.
pub fn space_report(schema: &Schema, concern: Option<&str>) -> Result<String, Error> {
    let space = build_space(schema.clone());
    let concerns = match concern {
        Some(c) => vec![c.to_string()],
        None => schema.concerns(),
    };
    let mut parts = vec![format!("full: {}", space.len())];
    for c in concerns {
        parts.push(format!("{c}: {}", project_space(&space, &c, true)?.len()));
    }
    Ok(parts.join(", "))
}

/// Raw parameter values of every point, one CSV line each.
pub fn space_listing(space: &DesignSpace) -> String {
    let schema = space.schema();
    let mut out = schema
        .params()
        .iter()
        .map(|p| p.name.to_string())
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for p in space.points() {
        let line: Vec<String> = space
            .point_ref(p)
            .raw_values()
            .iter()
            .map(i64::to_string)
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Loads a saved frame, taking column roles from a sibling
/// `provenance.json` when there is one.
pub fn load_frame(path: &Path) -> Result<ResultFrame, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let prov = path.with_file_name("provenance.json");
    let roles: Option<Vec<Column>> = std::fs::read_to_string(&prov)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| serde_json::from_value(v.get("columns")?.clone()).ok());
    ResultFrame::from_csv(&text, roles.as_deref())
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Filters, then sorts, then renders the top rows.
pub fn report(
    frame: &ResultFrame,
    keep: Option<&str>,
    sort: Option<&str>,
    descending: bool,
    top: usize,
) -> Result<String, Error> {
    let mut frame = frame.clone();
    let fail = |e: crate::strategy::FrameError| Error::Config(e.to_string());
    if let Some(k) = keep {
        frame = frame.filtered(&MetricExpr::parse(k)?).map_err(fail)?;
    }
    if let Some(s) = sort {
        frame = frame
            .sorted(&MetricExpr::parse(s)?, !descending)
            .map_err(fail)?;
    }
    Ok(frame.render_table(top))
}

fn serve_model(path: &Path) -> Result<String, CliError> {
    let model = ResourceModel::from_file(path)?;
    Ok(surrogate::serve(&model, |k| std::env::var(k).ok())?)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Space {
            schema,
            concern,
            list,
        } => {
            let schema = load_schema(&schema)?;
            println!("{}", space_report(&schema, concern.as_deref())?);
            if list {
                let space = build_space(schema);
                let shown = match &concern {
                    Some(c) => project_space(&space, c, true).map_err(Error::from)?,
                    None => space,
                };
                print!("{}", space_listing(&shown));
            }
        }
        Command::Run(args) => {
            let m = RunManifest::from_args(&args)?;
            let top = m.top;
            let result = run(&m);
            match &result {
                Ok(r) => print!("{}", r.frame.render_table(top)),
                Err(CliError::Empty) => {}
                Err(_) => return result.map(|_| ()),
            }
            let prov = m.out.join("provenance.json");
            eprintln!("wrote {}", prov.display());
            result?;
        }
        Command::Report {
            frame,
            sort,
            descending,
            keep,
            top,
        } => {
            let f = load_frame(&frame)?;
            print!(
                "{}",
                report(&f, keep.as_deref(), sort.as_deref(), descending, top)?
            );
        }
        Command::ServeModel { model } => println!("{}", serve_model(&model)?),
    }
    Ok(())
}

/// Entry point of the `dsex` binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DSEX_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsex: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::fixtures;

    #[test]
    fn cardinality_report() {
        let schema = Schema::parse(fixtures::DUMMY_SCHEMA).unwrap();
        assert_eq!(
            space_report(&schema, None).unwrap(),
            "full: 459, resource: 153, qos: 51"
        );
        assert_eq!(
            space_report(&schema, Some("qos")).unwrap(),
            "full: 459, qos: 51"
        );
        let err = space_report(&schema, Some("power")).unwrap_err();
        assert!(matches!(
            err,
            Error::Space(crate::space::SpaceError::NoSuchConcern(_))
        ));
        let single =
            Schema::parse("[[params]]\nname = \"a\"\ndomain = { linear = [3, 3] }\n").unwrap();
        assert_eq!(space_report(&single, None).unwrap(), "full: 1");
    }

    #[test]
    fn listing_is_row_major_raw_values() {
        let schema = Schema::parse(fixtures::DUMMY_SCHEMA).unwrap();
        let text = space_listing(&build_space(schema));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 460);
        assert_eq!(&lines[..4], &["p1,p2,p3", "0,1,4", "0,1,6", "0,1,9"]);
        assert_eq!(lines[459], "16,256,9");
    }

    #[test]
    fn manifest_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.toml"), fixtures::DUMMY_SCHEMA).unwrap();
        std::fs::write(
            dir.path().join("p.toml"),
            "[[steps]]\nstep = \"identity\"\n",
        )
        .unwrap();
        let manifest = dir.path().join("run.toml");
        std::fs::write(
            &manifest,
            "schema = \"s.toml\"\npipeline = \"p.toml\"\nseed = 7\n",
        )
        .unwrap();
        let args = RunArgs {
            manifest: Some(manifest),
            out: Some(dir.path().join("out")),
            seed: Some(9),
            ..RunArgs::default()
        };
        let m = RunManifest::from_args(&args).unwrap();
        assert_eq!(m.seed, 9);
        assert_eq!(m.schema, dir.path().join("s.toml"));
        let r = run(&m).unwrap();
        assert_eq!(r.frame.len(), 459);
        for f in [
            "frame.csv",
            "frame.jsonl",
            "provenance.json",
            "manifest.toml",
        ] {
            assert!(dir.path().join("out").join(f).exists(), "{f}");
        }
        let reloaded = load_frame(&dir.path().join("out/frame.csv")).unwrap();
        assert_eq!(reloaded.columns, r.frame.columns);

        let missing = RunArgs {
            schema: Some(dir.path().join("nope.toml")),
            pipeline: Some(dir.path().join("p.toml")),
            ..RunArgs::default()
        };
        assert!(RunManifest::from_args(&missing).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Empty.exit_code(), EXIT_EMPTY);
        assert_eq!(
            CliError::Setup(Error::Config("x".into())).exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(
            CliError::Setup(StepError::EmptySpace("gradient".into()).into()).exit_code(),
            EXIT_EMPTY
        );
        assert_eq!(
            CliError::Model(ModelError::MissingInput("X".into())).exit_code(),
            1
        );
    }
}
