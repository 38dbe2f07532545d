//! Experiment driver: seeded evolution at each voltage, candidate
//! re-evaluation, and population comparison.
//!
//! Everything here is a deterministic function of an `ExperimentConfig` or
//! of previously written archives, so reports can always be regenerated
//! from disk without rerunning the simulator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{self, ArchiveError, RunMeta, StoredRun};
use crate::config::{ConfigError, ExperimentConfig};
use crate::genome::{Genotype, CONTROL_GENES, MORPHOLOGY_GENES};
use crate::kinematics::LegGeometry;
use crate::nsga2::{self, Individual};
use crate::sim::{reevaluate, SimError, SimEvaluator};
use crate::stats::{
    cliffs_delta, holm_correction, lda_project, mann_whitney_u, GroupSample, StatsError,
};
use crate::GaitParams;

/// Seed base of the re-evaluation noise streams; candidates are spaced out
/// so their streams never overlap, and both voltages share the same seeds.
const REEVAL_SEED_BASE: u64 = 90_000;
const REEVAL_SEED_STRIDE: u64 = 1_000;

/// Significance level applied to Holm-adjusted p-values.
const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Errors raised by the experiment driver.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("run {run_index} at {voltage} V aborted: {message}")]
    Aborted {
        voltage: f64,
        run_index: usize,
        message: String,
    },
    #[error("no archived runs at {voltage} V")]
    NoRuns { voltage: f64 },
}

/// Where one evolutionary run ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub voltage: f64,
    pub run_index: usize,
    pub seed: u64,
    pub dir: PathBuf,
}

/// Runs the full experiment and archives every run.
///
/// Runs execute in voltage order, then run order; each run is seeded with
/// `base_seed + run_index`, identically across voltages, so voltage pairs
/// sharing a run index form matched comparisons. An aborted run still
/// archives its partial history before the error is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunOutcome>, HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| {
        ArchiveError::Io {
            path: config.output_dir.clone(),
            source,
        }
    })?;

    let mut outcomes = Vec::new();
    for &voltage in &config.voltages {
        for run_index in 0..config.runs_per_voltage {
            let seed = config.run_seed(run_index);
            let mut eval = config.eval.clone();
            eval.voltage = voltage;
            let evaluator = SimEvaluator { base: eval.clone() };
            let history = nsga2::run(&evaluator, &config.evo, seed);
            let meta = RunMeta {
                voltage,
                run_index,
                seed,
                evo: config.evo.clone(),
                eval,
                abort: history.abort.clone(),
            };
            let dir = archive::write_run(&config.output_dir, &meta, &history)?;
            if let Some(abort) = history.abort {
                return Err(HarnessError::Aborted {
                    voltage,
                    run_index,
                    message: abort.message,
                });
            }
            outcomes.push(RunOutcome {
                voltage,
                run_index,
                seed,
                dir,
            });
        }
    }
    Ok(outcomes)
}

fn same_voltage(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-6
}

fn runs_at(runs: &[StoredRun], voltage: f64) -> Vec<&StoredRun> {
    runs.iter()
        .filter(|r| same_voltage(r.meta.voltage, voltage))
        .collect()
}

/// Candidates spread across the pooled final front by speed quantiles.
///
/// The pooled front is sorted by archived speed with run index and front
/// position as tie-breaks, so selection is deterministic for a given
/// archive set. Returns `(quantile, source run index, individual)` triples
/// in ascending speed order.
pub fn select_candidates(
    runs: &[StoredRun],
    voltage: f64,
    selection: usize,
) -> Result<Vec<(f64, usize, Individual)>, HarnessError> {
    let group = runs_at(runs, voltage);
    if group.is_empty() {
        return Err(HarnessError::NoRuns { voltage });
    }
    let mut pooled: Vec<(usize, usize, Individual)> = Vec::new();
    for run in group {
        for (pos, ind) in run.final_front().into_iter().enumerate() {
            pooled.push((run.meta.run_index, pos, ind));
        }
    }
    pooled.sort_by(|a, b| {
        a.2.fitness
            .speed
            .partial_cmp(&b.2.fitness.speed)
            .expect("finite speeds")
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let last = pooled.len() - 1;
    let picks = (0..selection).map(|i| {
        let quantile = if selection > 1 {
            i as f64 / (selection - 1) as f64
        } else {
            1.0
        };
        let index = (quantile * last as f64).round() as usize;
        let (run_index, _, ind) = pooled[index];
        (quantile, run_index, ind)
    });
    Ok(picks.collect())
}

/// Mean and sample standard deviation of a series.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn percent_change(source: f64, target: f64) -> f64 {
    if source.abs() < 1e-12 {
        0.0
    } else {
        (target - source) / source.abs() * 100.0
    }
}

/// One candidate's re-evaluation outcome at both voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReevalRow {
    pub candidate: usize,
    pub quantile: f64,
    pub source_run: usize,
    pub genotype: Genotype,
    pub params: GaitParams,
    pub archived_speed: f64,
    pub source_speed_mean: f64,
    pub source_speed_std: f64,
    pub target_speed_mean: f64,
    pub target_speed_std: f64,
    pub speed_change_pct: f64,
    pub speed_p_raw: f64,
    pub speed_p_holm: f64,
    pub speed_significant: bool,
    pub source_stability_mean: f64,
    pub source_stability_std: f64,
    pub target_stability_mean: f64,
    pub target_stability_std: f64,
    pub stability_change_pct: f64,
    pub stability_p_raw: f64,
    pub stability_p_holm: f64,
    pub stability_significant: bool,
}

/// Re-evaluation table comparing two voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReevalReport {
    pub source_voltage: f64,
    pub target_voltage: f64,
    pub samples_per_individual: usize,
    pub rows: Vec<ReevalRow>,
}

/// Re-evaluates front candidates from `source_voltage` archives at both
/// voltages and reports per-objective changes with significance flags.
///
/// Each candidate is evaluated `n` times per voltage under common derived
/// seeds, so the two series form matched pairs. The Holm family covers
/// every test in the report (both objectives of every row).
pub fn reevaluation_report(
    runs: &[StoredRun],
    source_voltage: f64,
    target_voltage: f64,
    selection: usize,
    n: usize,
) -> Result<ReevalReport, HarnessError> {
    let candidates = select_candidates(runs, source_voltage, selection)?;
    let base_eval = runs_at(runs, source_voltage)[0].meta.eval.clone();

    struct Partial {
        quantile: f64,
        source_run: usize,
        ind: Individual,
        params: GaitParams,
        source_speed: Vec<f64>,
        target_speed: Vec<f64>,
        source_stability: Vec<f64>,
        target_stability: Vec<f64>,
    }

    let mut partials = Vec::new();
    for (candidate, (quantile, source_run, ind)) in candidates.into_iter().enumerate() {
        let params = ind.genotype.decode().map_err(SimError::from)?;
        let geom = LegGeometry::from_extensions(params.femur_ext, params.tibia_ext)
            .map_err(SimError::from)?;
        let series = |voltage: f64| -> Result<Vec<crate::EvaluationResult>, HarnessError> {
            let mut cfg = base_eval.clone();
            cfg.voltage = voltage;
            cfg.seed = REEVAL_SEED_BASE + candidate as u64 * REEVAL_SEED_STRIDE;
            Ok(reevaluate(&params, &geom, &cfg, n)?)
        };
        let source = series(source_voltage)?;
        let target = series(target_voltage)?;
        partials.push(Partial {
            quantile,
            source_run,
            ind,
            params,
            source_speed: source.iter().map(|r| r.speed).collect(),
            target_speed: target.iter().map(|r| r.speed).collect(),
            source_stability: source.iter().map(|r| r.stability).collect(),
            target_stability: target.iter().map(|r| r.stability).collect(),
        });
    }

    // One Holm family across all rows: speed p-values first, stability after.
    let mut raw_p = Vec::new();
    for p in &partials {
        raw_p.push(mann_whitney_u(&p.source_speed, &p.target_speed)?.1);
    }
    for p in &partials {
        raw_p.push(mann_whitney_u(&p.source_stability, &p.target_stability)?.1);
    }
    let adjusted = holm_correction(&raw_p);

    let count = partials.len();
    let rows = partials
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let (ss_mean, ss_std) = mean_std(&p.source_speed);
            let (ts_mean, ts_std) = mean_std(&p.target_speed);
            let (sb_mean, sb_std) = mean_std(&p.source_stability);
            let (tb_mean, tb_std) = mean_std(&p.target_stability);
            ReevalRow {
                candidate: i,
                quantile: p.quantile,
                source_run: p.source_run,
                genotype: p.ind.genotype,
                params: p.params,
                archived_speed: p.ind.fitness.speed,
                source_speed_mean: ss_mean,
                source_speed_std: ss_std,
                target_speed_mean: ts_mean,
                target_speed_std: ts_std,
                speed_change_pct: percent_change(ss_mean, ts_mean),
                speed_p_raw: raw_p[i],
                speed_p_holm: adjusted[i],
                speed_significant: adjusted[i] < SIGNIFICANCE_LEVEL,
                source_stability_mean: sb_mean,
                source_stability_std: sb_std,
                target_stability_mean: tb_mean,
                target_stability_std: tb_std,
                stability_change_pct: percent_change(sb_mean, tb_mean),
                stability_p_raw: raw_p[count + i],
                stability_p_holm: adjusted[count + i],
                stability_significant: adjusted[count + i] < SIGNIFICANCE_LEVEL,
            }
        })
        .collect();

    Ok(ReevalReport {
        source_voltage,
        target_voltage,
        samples_per_individual: n,
        rows,
    })
}

/// One LDA + rank-test comparison between the two voltage groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub label: String,
    pub gene_names: Vec<String>,
    pub samples_a: usize,
    pub samples_b: usize,
    pub u: f64,
    pub p_raw: f64,
    pub p_holm: f64,
    pub significant: bool,
    pub cliffs_delta: f64,
    pub lda_direction: Vec<f64>,
}

/// Statistical comparison of the pooled final populations per voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub voltage_a: f64,
    pub voltage_b: f64,
    pub comparisons: Vec<GroupComparison>,
}

fn gene_subset(runs: &[&StoredRun], genes: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    runs.iter()
        .flat_map(|r| r.final_population().iter())
        .map(|ind| ind.genotype.0[genes.clone()].to_vec())
        .collect()
}

/// Pools final populations per voltage and compares morphology genes and
/// control genes separately: LDA to one dimension, then Mann-Whitney U and
/// Cliff's delta on the projections, Holm-corrected over the two tests.
pub fn analysis_report(
    runs: &[StoredRun],
    voltage_a: f64,
    voltage_b: f64,
) -> Result<AnalysisReport, HarnessError> {
    let group_a = runs_at(runs, voltage_a);
    if group_a.is_empty() {
        return Err(HarnessError::NoRuns { voltage: voltage_a });
    }
    let group_b = runs_at(runs, voltage_b);
    if group_b.is_empty() {
        return Err(HarnessError::NoRuns { voltage: voltage_b });
    }

    let subsets = [
        ("morphology", MORPHOLOGY_GENES),
        ("control", CONTROL_GENES),
    ];
    let mut partial = Vec::new();
    for (label, genes) in subsets {
        let a = GroupSample::new(
            archive::voltage_label(voltage_a),
            gene_subset(&group_a, genes.clone()),
        );
        let b = GroupSample::new(
            archive::voltage_label(voltage_b),
            gene_subset(&group_b, genes.clone()),
        );
        let (direction, (proj_a, proj_b)) = lda_project(&a, &b)?;
        let (u, p) = mann_whitney_u(&proj_a, &proj_b)?;
        let delta = cliffs_delta(&proj_a, &proj_b)?;
        let names = genes.clone().map(|i| crate::genome::gene_name(i).to_string()).collect();
        partial.push((label, names, proj_a.len(), proj_b.len(), u, p, delta, direction));
    }

    let raw: Vec<f64> = partial.iter().map(|c| c.5).collect();
    let adjusted = holm_correction(&raw);
    let comparisons = partial
        .into_iter()
        .zip(adjusted)
        .map(
            |((label, gene_names, samples_a, samples_b, u, p_raw, delta, dir), p_holm)| {
                GroupComparison {
                    label: label.to_string(),
                    gene_names,
                    samples_a,
                    samples_b,
                    u,
                    p_raw,
                    p_holm,
                    significant: p_holm < SIGNIFICANCE_LEVEL,
                    cliffs_delta: delta,
                    lda_direction: dir,
                }
            },
        )
        .collect();

    Ok(AnalysisReport {
        voltage_a,
        voltage_b,
        comparisons,
    })
}

/// Writes a JSON report with a trailing newline.
pub fn write_json_report<T: Serialize>(path: &Path, report: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|source| ArchiveError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsga2::EvoConfig;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: dir.to_path_buf(),
            runs_per_voltage: 1,
            evo: EvoConfig {
                population: 4,
                generations: 2,
                ..EvoConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn tiny_experiment_archives_every_run() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        let outcomes = run_experiment(&cfg).unwrap();
        assert_eq!(outcomes.len(), 2);
        let runs = archive::discover_runs(tmp.path()).unwrap();
        assert_eq!(runs.len(), 2);
        for run in &runs {
            assert_eq!(run.records.len(), 8);
            assert_eq!(run.generations.len(), 2);
            assert!(run.meta.abort.is_none());
        }
        let voltages: Vec<f64> = runs.iter().map(|r| r.meta.voltage).collect();
        assert_eq!(voltages, vec![12.0, 14.8]);
    }

    #[test]
    fn identical_configs_reproduce_logs_byte_for_byte() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_a = tiny_config(&tmp.path().join("a"));
        let cfg_b = tiny_config(&tmp.path().join("b"));
        run_experiment(&cfg_a).unwrap();
        run_experiment(&cfg_b).unwrap();
        for voltage in [14.8, 12.0] {
            let log_a = std::fs::read(
                archive::run_dir(&cfg_a.output_dir, voltage, 0).join("log.jsonl"),
            )
            .unwrap();
            let log_b = std::fs::read(
                archive::run_dir(&cfg_b.output_dir, voltage, 0).join("log.jsonl"),
            )
            .unwrap();
            assert_eq!(log_a, log_b);
            assert!(!log_a.is_empty());
        }
    }

    #[test]
    fn candidate_selection_is_speed_ordered_and_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        run_experiment(&cfg).unwrap();
        let runs = archive::discover_runs(tmp.path()).unwrap();
        let picks = select_candidates(&runs, 14.8, 3).unwrap();
        assert_eq!(picks.len(), 3);
        assert_eq!(picks[0].0, 0.0);
        assert_eq!(picks[2].0, 1.0);
        assert!(picks[0].2.fitness.speed <= picks[1].2.fitness.speed);
        assert!(picks[1].2.fitness.speed <= picks[2].2.fitness.speed);
        let again = select_candidates(&runs, 14.8, 3).unwrap();
        assert_eq!(picks, again);
    }

    #[test]
    fn reevaluation_report_is_deterministic_and_consistent() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = tiny_config(tmp.path());
        run_experiment(&cfg).unwrap();
        let runs = archive::discover_runs(tmp.path()).unwrap();
        let report = reevaluation_report(&runs, 14.8, 12.0, 3, 2).unwrap();
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert_eq!(
                row.speed_change_pct,
                percent_change(row.source_speed_mean, row.target_speed_mean)
            );
            assert!(row.speed_p_holm >= row.speed_p_raw);
            assert!(row.stability_p_holm >= row.stability_p_raw);
        }
        let again = reevaluation_report(&runs, 14.8, 12.0, 3, 2).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn missing_voltage_group_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.voltages = vec![14.8];
        run_experiment(&cfg).unwrap();
        let runs = archive::discover_runs(tmp.path()).unwrap();
        assert!(matches!(
            reevaluation_report(&runs, 12.0, 14.8, 3, 2),
            Err(HarnessError::NoRuns { .. })
        ));
        assert!(matches!(
            analysis_report(&runs, 14.8, 12.0),
            Err(HarnessError::NoRuns { .. })
        ));
    }

    #[test]
    fn self_comparison_shows_no_effect() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.voltages = vec![14.8];
        cfg.evo.generations = 3;
        run_experiment(&cfg).unwrap();
        let runs = archive::discover_runs(tmp.path()).unwrap();
        let report = analysis_report(&runs, 14.8, 14.8).unwrap();
        assert_eq!(report.comparisons.len(), 2);
        for cmp in &report.comparisons {
            assert!(cmp.p_holm > 0.9, "{}: p {}", cmp.label, cmp.p_holm);
            assert!(cmp.cliffs_delta.abs() < 1e-9);
            assert!(!cmp.significant);
        }
        assert_eq!(report.comparisons[0].gene_names.len(), 2);
        assert_eq!(report.comparisons[1].gene_names.len(), 8);
    }

    #[test]
    fn planted_morphology_shift_is_detected() {
        // Clone a run group and push the morphology genes of the copy to
        // the opposite corner; the morphology comparison must flag it.
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(tmp.path());
        cfg.voltages = vec![14.8];
        cfg.runs_per_voltage = 2;
        cfg.evo.population = 6;
        run_experiment(&cfg).unwrap();
        let mut runs = archive::discover_runs(tmp.path()).unwrap();
        let mut shifted = runs.clone();
        for run in &mut shifted {
            run.meta.voltage = 12.0;
            for generation in &mut run.generations {
                for ind in generation.iter_mut() {
                    ind.genotype.0[8] = 1.0 - 0.95 * ind.genotype.0[8];
                    ind.genotype.0[9] = 1.0 - 0.95 * ind.genotype.0[9];
                }
            }
        }
        runs.extend(shifted);
        let report = analysis_report(&runs, 14.8, 12.0).unwrap();
        let morphology = &report.comparisons[0];
        assert!(
            morphology.p_raw < 0.01,
            "planted shift should be significant, p {}",
            morphology.p_raw
        );
    }
}
