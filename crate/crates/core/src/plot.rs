//! Figure and table emission from run archives.
//!
//! Output is deliberately plain: self-contained SVG scatter plots plus one
//! CSV holding every archived evaluation, so any external tool can re-plot
//! the data. Emission is a pure function of the archives; identical
//! archives produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::archive::{voltage_label, StoredRun};
use crate::nsga2::Individual;

/// Errors raised during figure emission.
#[derive(Debug, Error)]
pub enum PlotError {
    #[error("figure io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no archives to plot")]
    NoArchives,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

/// Data ranges of one plot, padded so points stay inside the axes.
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn around(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64>) -> Frame {
        let pad = |lo: f64, hi: f64| {
            if (hi - lo).abs() < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let span = hi - lo;
                (lo - 0.05 * span, hi + 0.05 * span)
            }
        };
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
        }
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in ys {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        let (x_min, x_max) = pad(x_lo, x_hi);
        let (y_min, y_max) = pad(y_lo, y_hi);
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn map_x(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn map_y(&self, y: f64) -> f64 {
        // SVG y grows downward; data y grows upward.
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Blue-to-red ramp for a normalized value.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(43.0, 214.0), lerp(83.0, 69.0), lerp(177.0, 47.0))
}

fn svg_header(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>",
        WIDTH / 2.0
    );
    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let xp = frame.map_x(xv);
        let yp = frame.map_y(yv);
        let _ = writeln!(
            s,
            "<line x1=\"{xp:.2}\" y1=\"{y0}\" x2=\"{xp:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{xp:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{xv:.2}</text>",
            y0 + 18.0
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{yp:.2}\" x2=\"{x0}\" y2=\"{yp:.2}\" stroke=\"black\"/>",
            x0 - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{yv:.3}</text>",
            x0 - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{y_label}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s
}

fn write_file(path: &Path, content: &str) -> Result<(), PlotError> {
    fs::write(path, content).map_err(|source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Final-population objective scatter: speed right, stability up.
fn objectives_svg(label: &str, population: &[Individual]) -> String {
    let frame = Frame::around(
        population.iter().map(|i| i.fitness.speed),
        population.iter().map(|i| i.fitness.stability),
    );
    let mut s = svg_header(
        &format!("Final populations at {label}"),
        "speed (m/min)",
        "stability",
        &frame,
    );
    for ind in population {
        let fill = if ind.rank == 0 { "#d6452f" } else { "#2b53b1" };
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\" fill-opacity=\"0.8\"/>",
            frame.map_x(ind.fitness.speed),
            frame.map_y(ind.fitness.stability)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Morphology scatter of the final populations, colored by speed.
fn morphology_svg(label: &str, population: &[Individual]) -> String {
    let params: Vec<(f64, f64, f64)> = population
        .iter()
        .filter_map(|ind| {
            ind.genotype
                .decode()
                .ok()
                .map(|p| (p.femur_ext, p.tibia_ext, ind.fitness.speed))
        })
        .collect();
    let frame = Frame::around(
        params.iter().map(|p| p.0 * 1000.0),
        params.iter().map(|p| p.1 * 1000.0),
    );
    let (speed_lo, speed_hi) = params
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.2), hi.max(p.2))
        });
    let span = (speed_hi - speed_lo).max(1e-12);
    let mut s = svg_header(
        &format!("Leg extensions at {label} (color: speed)"),
        "femur extension (mm)",
        "tibia extension (mm)",
        &frame,
    );
    for (femur, tibia, speed) in &params {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.85\"/>",
            frame.map_x(femur * 1000.0),
            frame.map_y(tibia * 1000.0),
            ramp((speed - speed_lo) / span)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Per-generation non-dominated front traces, colored early-to-late.
fn fronts_svg(label: &str, generations: &[Vec<Individual>]) -> String {
    let all: Vec<&Individual> = generations.iter().flatten().collect();
    let frame = Frame::around(
        all.iter().map(|i| i.fitness.speed),
        all.iter().map(|i| i.fitness.stability),
    );
    let mut s = svg_header(
        &format!("Front progression at {label}"),
        "speed (m/min)",
        "stability",
        &frame,
    );
    let last = generations.len().saturating_sub(1).max(1);
    for (g, population) in generations.iter().enumerate() {
        let mut front: Vec<&Individual> = population.iter().filter(|i| i.rank == 0).collect();
        front.sort_by(|a, b| {
            a.fitness
                .speed
                .partial_cmp(&b.fitness.speed)
                .expect("finite speeds")
        });
        let color = ramp(g as f64 / last as f64);
        if front.len() > 1 {
            let points: Vec<String> = front
                .iter()
                .map(|i| {
                    format!(
                        "{:.2},{:.2}",
                        frame.map_x(i.fitness.speed),
                        frame.map_y(i.fitness.stability)
                    )
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                points.join(" ")
            );
        }
        for i in &front {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                frame.map_x(i.fitness.speed),
                frame.map_y(i.fitness.stability)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One CSV row per archived evaluation, across every run.
fn evaluations_csv(runs: &[StoredRun]) -> String {
    let mut s = String::from(
        "voltage,run,generation,index,speed,stability,slip_count,fell,sigma,\
         step_length,step_height,step_smoothing,gait_frequency,lift_duration,\
         wag_phase,wag_x_amp,wag_y_amp,femur_length,tibia_length\n",
    );
    for run in runs {
        for rec in &run.records {
            let e = &rec.eval;
            let sigma = e.sigma.map(|v| v.to_string()).unwrap_or_default();
            let p = &e.params;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{sigma},{},{},{},{},{},{},{},{},{},{}",
                run.meta.voltage,
                rec.run,
                e.generation,
                e.index,
                e.speed,
                e.stability,
                e.slip_count,
                e.fell,
                p.step_length,
                p.step_height,
                p.step_smoothing,
                p.gait_frequency,
                p.lift_duration,
                p.wag_phase,
                p.wag_x_amp,
                p.wag_y_amp,
                p.femur_ext,
                p.tibia_ext,
            );
        }
    }
    s
}

/// Emits every figure and the evaluations CSV into `dir`.
///
/// Per voltage group: a final-population objective scatter, a morphology
/// scatter colored by speed, and a front-progression plot pooling every
/// run's per-generation fronts. Returns the created paths in stable order.
pub fn emit_all(runs: &[StoredRun], dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if runs.is_empty() {
        return Err(PlotError::NoArchives);
    }
    fs::create_dir_all(dir).map_err(|source| PlotError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    // Group by printed voltage label; BTreeMap fixes the emission order.
    let mut groups: BTreeMap<String, Vec<&StoredRun>> = BTreeMap::new();
    for run in runs {
        groups
            .entry(voltage_label(run.meta.voltage))
            .or_default()
            .push(run);
    }

    let mut written = Vec::new();
    let csv_path = dir.join("evaluations.csv");
    write_file(&csv_path, &evaluations_csv(runs))?;
    written.push(csv_path);

    for (label, group) in &groups {
        let pooled_final: Vec<Individual> = group
            .iter()
            .flat_map(|r| r.final_population().iter().copied())
            .collect();
        // Generations pooled index-wise across runs so one figure shows
        // every run's front at each stage.
        let depth = group.iter().map(|r| r.generations.len()).max().unwrap_or(0);
        let pooled_generations: Vec<Vec<Individual>> = (0..depth)
            .map(|g| {
                group
                    .iter()
                    .filter_map(|r| r.generations.get(g))
                    .flat_map(|gen| gen.iter().copied())
                    .collect()
            })
            .collect();

        let display = label.trim_start_matches('v');
        let display = format!("{display} V");
        for (name, content) in [
            (format!("objectives_{label}.svg"), objectives_svg(&display, &pooled_final)),
            (format!("morphology_{label}.svg"), morphology_svg(&display, &pooled_final)),
            (format!("fronts_{label}.svg"), fronts_svg(&display, &pooled_generations)),
        ] {
            let path = dir.join(name);
            write_file(&path, &content)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{self, RunMeta};
    use crate::genome::Genotype;
    use crate::nsga2::{run, EvalOutcome, Evaluator, EvoConfig};
    use crate::sim::{EvalConfig, SimError};

    struct LinearEvaluator;

    impl Evaluator for LinearEvaluator {
        fn evaluate(&self, genotype: &Genotype, _seed: u64) -> Result<EvalOutcome, SimError> {
            Ok(EvalOutcome {
                speed: genotype.0[0] * 10.0,
                stability: -genotype.0[1],
                slip_count: 0,
                fell: false,
            })
        }
    }

    fn stored_runs(tmp: &Path) -> Vec<StoredRun> {
        let evo = EvoConfig {
            population: 4,
            generations: 3,
            ..EvoConfig::default()
        };
        for (voltage, seed) in [(14.8, 1u64), (12.0, 1u64)] {
            let history = run(&LinearEvaluator, &evo, seed);
            let meta = RunMeta {
                voltage,
                run_index: 0,
                seed,
                evo: evo.clone(),
                eval: EvalConfig::default(),
                abort: None,
            };
            archive::write_run(tmp, &meta, &history).unwrap();
        }
        archive::discover_runs(tmp).unwrap()
    }

    #[test]
    fn emits_three_figures_per_voltage_plus_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = stored_runs(tmp.path());
        let figures = tmp.path().join("figures");
        let written = emit_all(&runs, &figures).unwrap();
        assert_eq!(written.len(), 7);
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"evaluations.csv".to_string()));
        for label in ["v12.0", "v14.8"] {
            for kind in ["objectives", "morphology", "fronts"] {
                assert!(names.contains(&format!("{kind}_{label}.svg")));
            }
        }
        for path in &written {
            assert!(path.is_file());
        }
    }

    #[test]
    fn csv_rows_equal_total_evaluations() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = stored_runs(tmp.path());
        let total: usize = runs.iter().map(|r| r.records.len()).sum();
        let csv = evaluations_csv(&runs);
        assert_eq!(csv.lines().count(), total + 1);
        assert!(total > 0);
    }

    #[test]
    fn emission_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let runs = stored_runs(tmp.path());
        let dir_a = tmp.path().join("a");
        let dir_b = tmp.path().join("b");
        emit_all(&runs, &dir_a).unwrap();
        emit_all(&runs, &dir_b).unwrap();
        for name in ["evaluations.csv", "objectives_v14.8.svg", "fronts_v12.0.svg"] {
            let a = fs::read(dir_a.join(name)).unwrap();
            let b = fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} should be byte-identical");
            assert!(!a.is_empty());
        }
    }

    #[test]
    fn empty_archive_set_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_all(&[], tmp.path()),
            Err(PlotError::NoArchives)
        ));
        assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());
    }

    #[test]
    fn ramp_endpoints_are_blue_and_red() {
        assert_eq!(ramp(0.0), "#2b53b1");
        assert_eq!(ramp(1.0), "#d6452f");
    }
}
