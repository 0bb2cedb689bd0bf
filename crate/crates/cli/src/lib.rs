//! Config-driven experiment runner for the `rglasso` library.
//!
//! Each run writes `<task>.csv` and `<task>.manifest.json` into the output
//! directory. The manifest echoes the resolved config, so [`replay`]
//! reproduces the CSV byte for byte.

pub mod config;
mod output;
mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, Resolved, Task};
pub use output::{format_float, Table};

/// Version of the CSV layouts written by this tool.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error(transparent)]
    Core(#[from] rglasso::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code: 2 config, 3 numerical, 4 budget, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use rglasso::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Budget(_) => 4,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Domain(_) | E::Model(_) => 2,
                E::Budget(_) => 4,
                E::Singular(_) | E::IterationLimit { .. } | E::Numerical(_) | E::UnstableDerivative { .. } => 3,
            },
        }
    }

    /// The message without its category prefix.
    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::Budget(m) | CliError::Io(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub task_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub library_version: String,
    pub task: Task,
    /// Resolved config in TOML, including the effective seed.
    pub config: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub csv: String,
    pub csv_schema_version: u32,
    pub csv_columns: Vec<String>,
    pub csv_rows: usize,
    /// Norm in which indefinite pairwise estimates are projected.
    pub psd_repair_norm: String,
    /// Set for asymptotic-variance outputs, which presume asymptotic linearity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub under_bahadur_assumption: Option<bool>,
    pub timings: Timings,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub dry_run: bool,
}

#[derive(Debug, Clone)]
pub enum RunReport {
    Written { csv: PathBuf, manifest: PathBuf, rows: usize },
    Plan(String),
}

/// Result of computing a task, before anything is written.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub table: Table,
    pub summary: serde_json::Value,
}

/// Compute a resolved task.
pub fn execute(resolved: &Resolved) -> Result<TaskOutput, CliError> {
    tasks::execute(resolved)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads: must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Io(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Validate, compute and write one task.
pub fn run(task: Task, config: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let resolved = config.resolve(task)?;
    let out = opts.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let csv_path = out.join(format!("{task}.csv"));
    let manifest_path = out.join(format!("{task}.manifest.json"));
    if opts.dry_run {
        let plan = serde_json::json!({
            "task": task,
            "config": config.to_toml(),
            "work": tasks::plan(&resolved),
            "csv": csv_path,
            "manifest": manifest_path,
            "threads": opts.threads,
        });
        return Ok(RunReport::Plan(serde_json::to_string_pretty(&plan).expect("plan serialises")));
    }
    let task_start = Instant::now();
    let output = with_threads(opts.threads, || execute(&resolved))??;
    let task_seconds = task_start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let bytes = output.table.to_csv()?;
    std::fs::write(&csv_path, &bytes).map_err(|e| io_err(&csv_path, e))?;
    let manifest = Manifest {
        tool: "rglasso".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        library_version: rglasso::VERSION.into(),
        task,
        config: config.to_toml(),
        seed: config.seed,
        threads: opts.threads,
        csv: csv_path.file_name().expect("file name").to_string_lossy().into_owned(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        csv_columns: output.table.header.clone(),
        csv_rows: output.table.rows.len(),
        psd_repair_norm: "frobenius".into(),
        under_bahadur_assumption: matches!(task, Task::Asv | Task::EfficiencyTable).then_some(true),
        timings: Timings { task_seconds, total_seconds: start.elapsed().as_secs_f64() },
        summary: output.summary,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&manifest_path, json + "\n").map_err(|e| io_err(&manifest_path, e))?;
    Ok(RunReport::Written { csv: csv_path, manifest: manifest_path, rows: output.table.rows.len() })
}

/// Re-run the task recorded in a manifest. Output goes next to the manifest
/// unless `opts.out` is set; `opts.seed` is ignored.
pub fn replay(manifest_path: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let config: ExperimentConfig = manifest.config.parse()?;
    let out = opts.out.clone().unwrap_or_else(|| manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")));
    let opts = RunOptions { out: Some(out), seed: None, threads: opts.threads.or(manifest.threads), dry_run: opts.dry_run };
    run(manifest.task, &config, &opts)
}
