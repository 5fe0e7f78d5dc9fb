//! Run orchestration: config files, per-run output directories, sweeps over
//! demonstration settings, and checkpoint evaluation.
//!
//! A run directory holds:
//! - `config.toml`: the resolved configuration, enough to re-run
//! - `metrics.jsonl`: one [`MetricsRecord`] per evaluation point, appended as it happens
//! - `actor.json`, `critic.json`: final weights (plus `bc_actor.json` for BC-based variants)
//! - `schedule.csv`: demonstration fraction of every SIL update
//! - `demos.jsonl`: the demonstrations the run used, if any
//!
//! A sweep directory holds one run directory per `k{K}/seed{S}` plus
//! `summary.csv` and `runs.csv`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algo::{evaluate, train, AlgoError, EvalStats, MetricsRecord, TrainConfig, TrainOutcome, Variant};
use crate::demos::{mix, DemoError, DemoSet};
use crate::nn::{NetParams, NnError};
use crate::{par, write_atomic};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "SILFD_OUT_DIR";
/// Fallback output root when [`OUT_DIR_ENV`] is unset.
pub const DEFAULT_OUT_DIR: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] NnError),
    #[error(transparent)]
    Algo(AlgoError),
}

impl From<AlgoError> for RunnerError {
    fn from(e: AlgoError) -> Self {
        match e {
            AlgoError::Config(m) => RunnerError::Config(m),
            AlgoError::Divergence(m) => RunnerError::Divergence(m),
            AlgoError::Demo(d) => RunnerError::Demo(d),
            other => RunnerError::Algo(other),
        }
    }
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => EXIT_CONFIG,
            RunnerError::Divergence(_) => EXIT_DIVERGENCE,
            _ => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `$SILFD_OUT_DIR`, or `runs` in the working directory.
pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Parses one `key=value` override. The value is read as a TOML value,
/// falling back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value), RunnerError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| RunnerError::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(RunnerError::Config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

/// A resolved configuration and the overrides applied on top of the file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: TrainConfig,
    pub overrides: Vec<String>,
}

/// Reads `file` (if any), applies `overrides` in order, and validates.
pub fn resolve_config(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Resolved, RunnerError> {
    let mut table = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| RunnerError::Config(format!("{}: {}", path.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    let mut applied = Vec::with_capacity(overrides.len());
    for (key, value) in overrides {
        applied.push(format!("{key} = {value}"));
        table.insert(key.clone(), value.clone());
    }
    let config: TrainConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| RunnerError::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(Resolved {
        config,
        overrides: applied,
    })
}

/// Like [`resolve_config`], for a sweep base: demo counts come from each
/// setting, so a missing demonstration source is not an error here.
pub fn resolve_sweep_base(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Resolved, RunnerError> {
    let mut with_demos = overrides.to_vec();
    with_demos.push(("demo_optimal".into(), toml::Value::Integer(1)));
    let probe = resolve_config(file, &with_demos)?;
    let mut r = resolve_config(file, overrides).or_else(|e| match e {
        RunnerError::Config(_) if probe.config.variant.needs_demos() => Ok(probe.clone()),
        other => Err(other),
    })?;
    if r.config.variant.needs_demos() {
        r.overrides.retain(|o| !o.starts_with("demo_optimal"));
    }
    Ok(r)
}

/// The resolved config as a TOML document, overrides listed in a leading comment.
pub fn config_echo(resolved: &Resolved) -> Result<String, RunnerError> {
    let body = toml::to_string(&resolved.config).map_err(|e| RunnerError::Config(e.to_string()))?;
    let mut out = String::from("# resolved configuration\n");
    if !resolved.overrides.is_empty() {
        out.push_str("# overrides:\n");
        for o in &resolved.overrides {
            let _ = writeln!(out, "#   {o}");
        }
    }
    out.push_str(&body);
    Ok(out)
}

/// The demonstrations a config asks for, or `None` when the variant needs none.
pub fn resolve_demos(cfg: &TrainConfig) -> Result<Option<DemoSet>, RunnerError> {
    if !cfg.variant.needs_demos() {
        return Ok(None);
    }
    let set = if let Some(path) = &cfg.demos_path {
        DemoSet::load(path)?
    } else if cfg.demo_optimal.is_some() || cfg.demo_adversarial.is_some() {
        mix(cfg.demo_optimal.unwrap_or(1), cfg.demo_adversarial.unwrap_or(0), cfg.grid_size)?
    } else {
        return Err(RunnerError::Config(format!("variant {} needs demonstrations", cfg.variant)));
    };
    if set.provenance.grid_size != cfg.grid_size {
        return Err(RunnerError::Config(format!(
            "demonstrations are for a {0}x{0} grid but grid_size is {1}",
            set.provenance.grid_size, cfg.grid_size
        )));
    }
    Ok(Some(set))
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub final_eval: f64,
    pub records: Vec<MetricsRecord>,
    pub sil_demo_fractions: Vec<f64>,
}

/// Trains one configuration into `dir`. Metrics rows are flushed as they are
/// produced, so a failed run leaves its partial `metrics.jsonl` behind.
pub fn run_training(resolved: &Resolved, dir: &Path) -> Result<RunReport, RunnerError> {
    let cfg = &resolved.config;
    let demos = resolve_demos(cfg)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let echo_path = dir.join("config.toml");
    write_atomic(&echo_path, config_echo(resolved)?.as_bytes()).map_err(io_err(&echo_path))?;
    if let Some(d) = &demos {
        d.save(&dir.join("demos.jsonl"))?;
    }

    let metrics_path = dir.join("metrics.jsonl");
    let file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut writer = BufWriter::new(file);
    let mut sink = |r: &MetricsRecord| -> io::Result<()> {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
        writer.flush()
    };
    let outcome = train(cfg, demos.as_ref(), &mut sink);
    drop(writer);
    let outcome = outcome?;
    save_outputs(dir, &outcome)?;
    Ok(RunReport {
        dir: dir.to_path_buf(),
        final_eval: outcome.final_eval().unwrap_or(f64::NAN),
        records: outcome.records,
        sil_demo_fractions: outcome.sil_demo_fractions,
    })
}

fn save_outputs(dir: &Path, out: &TrainOutcome) -> Result<(), RunnerError> {
    out.nets.actor.save(&dir.join("actor.json"))?;
    out.nets.critic.save(&dir.join("critic.json"))?;
    if let Some(bc) = &out.bc_actor {
        bc.save(&dir.join("bc_actor.json"))?;
    }
    #[derive(Serialize)]
    struct Row {
        sil_update: usize,
        demo_fraction: f64,
    }
    let rows = out.sil_demo_fractions.iter().enumerate().map(|(i, &f)| Row {
        sil_update: i + 1,
        demo_fraction: f,
    });
    write_csv(&dir.join("schedule.csv"), &["sil_update", "demo_fraction"], rows)
}

/// Writes serde rows as CSV, with an explicit header so empty tables still have one.
fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<(), RunnerError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| RunnerError::Csv(e.into_error().into()))?;
    write_atomic(path, &bytes).map_err(io_err(path))
}

/// Reads a `metrics.jsonl` file back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, RunnerError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| RunnerError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Sweep over demonstration settings and seeds.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Adversarial-demo counts, each paired with one optimal demo.
    pub settings: Vec<usize>,
    /// Seeds `0..seeds`.
    pub seeds: u64,
    pub base: Resolved,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub setting: usize,
    pub seed: u64,
    pub dir: PathBuf,
    pub result: Result<f64, String>,
    pub exit_code: i32,
}

/// One row of `summary.csv`: statistics of final eval means across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: usize,
    pub seeds: usize,
    pub failures: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SummaryRow>,
}

impl SweepReport {
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().map(|r| r.exit_code).find(|&c| c != EXIT_OK).unwrap_or(EXIT_OK)
    }
}

/// Settings in first-seen order with duplicates removed.
pub fn dedupe(settings: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    settings.iter().copied().filter(|s| seen.insert(*s)).collect()
}

pub fn run_dir(root: &Path, setting: usize, seed: u64) -> PathBuf {
    root.join(format!("k{setting}")).join(format!("seed{seed}"))
}

/// Runs every (setting, seed) pair; failures are recorded and the rest proceed.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport, RunnerError> {
    let settings = dedupe(&spec.settings);
    if settings.is_empty() || spec.seeds == 0 {
        return Err(RunnerError::Config("sweep needs at least one setting and one seed".into()));
    }
    fs::create_dir_all(&spec.out).map_err(io_err(&spec.out))?;
    let jobs: Vec<(usize, u64)> = settings
        .iter()
        .flat_map(|&k| (0..spec.seeds).map(move |s| (k, s)))
        .collect();
    let runs = par::with_threads(spec.jobs, || {
        par::map_slice(&jobs, |&(setting, seed)| {
            let dir = run_dir(&spec.out, setting, seed);
            let resolved = sweep_config(&spec.base, setting, seed);
            let outcome = resolved.and_then(|r| run_training(&r, &dir));
            match outcome {
                Ok(rep) => SweepRun {
                    setting,
                    seed,
                    dir,
                    result: Ok(rep.final_eval),
                    exit_code: EXIT_OK,
                },
                Err(e) => SweepRun {
                    setting,
                    seed,
                    dir,
                    exit_code: e.exit_code(),
                    result: Err(e.to_string()),
                },
            }
        })
    });
    let summary = summarize(&settings, &runs);
    write_summary(&spec.out, &summary, &runs)?;
    Ok(SweepReport { runs, summary })
}

fn sweep_config(base: &Resolved, setting: usize, seed: u64) -> Result<Resolved, RunnerError> {
    let mut r = base.clone();
    r.config.seed = seed;
    r.overrides.push(format!("seed = {seed}"));
    if r.config.variant.needs_demos() {
        r.config.demos_path = None;
        r.config.demo_optimal = Some(1);
        r.config.demo_adversarial = Some(setting);
        r.overrides.push("demo_optimal = 1".into());
        r.overrides.push(format!("demo_adversarial = {setting}"));
    }
    r.config.validate()?;
    Ok(r)
}

pub fn summarize(settings: &[usize], runs: &[SweepRun]) -> Vec<SummaryRow> {
    settings
        .iter()
        .map(|&k| {
            let of_k: Vec<&SweepRun> = runs.iter().filter(|r| r.setting == k).collect();
            let finals: Vec<f64> = of_k.iter().filter_map(|r| r.result.as_ref().ok().copied()).collect();
            let n = finals.len();
            let (mean, min, max) = if n == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    finals.iter().sum::<f64>() / n as f64,
                    finals.iter().copied().fold(f64::INFINITY, f64::min),
                    finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            SummaryRow {
                setting: k,
                seeds: n,
                failures: of_k.len() - n,
                mean,
                min,
                max,
            }
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 6] = ["setting", "seeds", "failures", "mean", "min", "max"];

#[derive(Serialize)]
struct RunRow<'a> {
    setting: usize,
    seed: u64,
    status: &'a str,
    final_eval: Option<f64>,
    error: Option<&'a str>,
}

fn write_summary(out: &Path, summary: &[SummaryRow], runs: &[SweepRun]) -> Result<(), RunnerError> {
    write_csv(&out.join("summary.csv"), &SUMMARY_HEADER, summary)?;
    let rows = runs.iter().map(|r| RunRow {
        setting: r.setting,
        seed: r.seed,
        status: if r.result.is_ok() { "ok" } else { "failed" },
        final_eval: r.result.as_ref().ok().copied(),
        error: r.result.as_ref().err().map(String::as_str),
    });
    write_csv(&out.join("runs.csv"), &["setting", "seed", "status", "final_eval", "error"], rows)
}

/// Reads a `summary.csv` file back.
pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, RunnerError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Loads an actor checkpoint and evaluates it.
pub fn eval_checkpoint(path: &Path, grid_size: usize, episodes: usize, seed: u64) -> Result<EvalStats, RunnerError> {
    if episodes == 0 {
        return Err(RunnerError::Config("episodes must be positive".into()));
    }
    let actor = NetParams::load(path)?;
    if actor.in_dim() != crate::chain::OBS_DIM || actor.out_dim() != crate::chain::NUM_ACTIONS {
        return Err(RunnerError::Config(format!(
            "checkpoint maps {} inputs to {} outputs; an actor needs {} to {}",
            actor.in_dim(),
            actor.out_dim(),
            crate::chain::OBS_DIM,
            crate::chain::NUM_ACTIONS
        )));
    }
    Ok(evaluate(&actor, grid_size, episodes, seed)?)
}

/// Default run directory for a single `train` invocation.
pub fn default_train_dir(variant: Variant, seed: u64) -> PathBuf {
    out_root().join(format!("{variant}-seed{seed}"))
}
