//! On-disk run archives.
//!
//! Each evolutionary run persists three files under
//! `<out>/v<voltage>/run<i>/`: `config.json` (effective settings, seed, and
//! any abort), `log.jsonl` (one JSON line per evaluation, in evaluation
//! order), and `populations.json` (every generation after survival, with
//! ranks and crowding). The trio is sufficient to re-derive every report
//! and figure without re-running the simulator.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nsga2::{AbortInfo, EvalRecord, EvoConfig, Individual, RunHistory};
use crate::sim::EvalConfig;

/// Errors raised while writing or reading archives.
#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("archive json at {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("no run archives found under {0}")]
    Empty(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// Effective per-run settings stored as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub voltage: f64,
    pub run_index: usize,
    pub seed: u64,
    pub evo: EvoConfig,
    pub eval: EvalConfig,
    pub abort: Option<AbortInfo>,
}

/// One `log.jsonl` line: an evaluation tagged with its run index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub run: usize,
    #[serde(flatten)]
    pub eval: EvalRecord,
}

/// A fully loaded run archive.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRun {
    pub meta: RunMeta,
    pub records: Vec<LogRecord>,
    pub generations: Vec<Vec<Individual>>,
}

impl StoredRun {
    /// Last surviving population of the run.
    pub fn final_population(&self) -> &[Individual] {
        self.generations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Non-dominated members of the last population.
    pub fn final_front(&self) -> Vec<Individual> {
        self.final_population()
            .iter()
            .filter(|ind| ind.rank == 0)
            .copied()
            .collect()
    }
}

/// Directory name for one voltage group, e.g. `v14.8`.
pub fn voltage_label(voltage: f64) -> String {
    format!("v{voltage:.1}")
}

/// Directory of one run inside the output tree.
pub fn run_dir(base: &Path, voltage: f64, run_index: usize) -> PathBuf {
    base.join(voltage_label(voltage)).join(format!("run{run_index}"))
}

/// Writes one run's archive and returns its directory.
///
/// Serialization is plain struct-order JSON, so reruns with identical
/// settings produce byte-identical files.
pub fn write_run(base: &Path, meta: &RunMeta, history: &RunHistory) -> Result<PathBuf, ArchiveError> {
    let dir = run_dir(base, meta.voltage, meta.run_index);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let config_path = dir.join("config.json");
    let mut config_json = serde_json::to_string_pretty(meta).map_err(json_err(&config_path))?;
    config_json.push('\n');
    fs::write(&config_path, config_json).map_err(io_err(&config_path))?;

    let log_path = dir.join("log.jsonl");
    let file = fs::File::create(&log_path).map_err(io_err(&log_path))?;
    let mut out = BufWriter::new(file);
    for record in &history.records {
        let line = serde_json::to_string(&LogRecord {
            run: meta.run_index,
            eval: record.clone(),
        })
        .map_err(json_err(&log_path))?;
        writeln!(out, "{line}").map_err(io_err(&log_path))?;
    }
    out.flush().map_err(io_err(&log_path))?;

    let pop_path = dir.join("populations.json");
    let mut pop_json =
        serde_json::to_string(&history.generations).map_err(json_err(&pop_path))?;
    pop_json.push('\n');
    fs::write(&pop_path, pop_json).map_err(io_err(&pop_path))?;

    Ok(dir)
}

/// Loads one run archive from its directory.
pub fn read_run(dir: &Path) -> Result<StoredRun, ArchiveError> {
    let config_path = dir.join("config.json");
    let config_text = fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
    let meta: RunMeta = serde_json::from_str(&config_text).map_err(json_err(&config_path))?;

    let log_path = dir.join("log.jsonl");
    let log_text = fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
    let mut records = Vec::new();
    for line in log_text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(serde_json::from_str(line).map_err(json_err(&log_path))?);
    }

    let pop_path = dir.join("populations.json");
    let pop_text = fs::read_to_string(&pop_path).map_err(io_err(&pop_path))?;
    let generations = serde_json::from_str(&pop_text).map_err(json_err(&pop_path))?;

    Ok(StoredRun {
        meta,
        records,
        generations,
    })
}

/// Loads every run archive under an output tree, in stable path order.
pub fn discover_runs(base: &Path) -> Result<Vec<StoredRun>, ArchiveError> {
    let mut run_dirs = Vec::new();
    let groups = match fs::read_dir(base) {
        Ok(entries) => entries,
        Err(_) => return Err(ArchiveError::Empty(base.to_path_buf())),
    };
    for group in groups {
        let group = group.map_err(io_err(base))?.path();
        let is_group = group.is_dir()
            && group
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with('v'));
        if !is_group {
            continue;
        }
        for entry in fs::read_dir(&group).map_err(io_err(&group))? {
            let dir = entry.map_err(io_err(&group))?.path();
            if dir.is_dir() && dir.join("config.json").is_file() {
                run_dirs.push(dir);
            }
        }
    }
    run_dirs.sort();
    if run_dirs.is_empty() {
        return Err(ArchiveError::Empty(base.to_path_buf()));
    }
    run_dirs.iter().map(|dir| read_run(dir)).collect()
}
