//! Deterministic quasi-static walking simulation.
//!
//! One evaluation walks the robot a target distance forward and back at a
//! fixed control rate. Each step commands foot targets from the gait module,
//! converts them per leg through inverse kinematics, perturbs the joint
//! commands with seeded Gaussian noise, advances every servo along its
//! voltage- and load-dependent speed limit, and re-derives the body pose as
//! the rigid transform that best pins the achieved stance feet to their
//! world anchors. Feet whose residual exceeds the slip threshold slide their
//! anchor and log a slip event. The model has no momentum: all speed loss,
//! wobble, and slip come from servo tracking deficits.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{
    max_speed, spec_for_voltage, stance_load_torque, step_tracking, ActuationError, ServoState,
};
use crate::fitness::{speed_fitness, stability_fitness, FitnessError, StabilityWeights};
use crate::gait::{
    sample_sagittal, wag_offset, FootPath, LegSchedule, LATERAL_HOME_OFFSET, LEG_COUNT,
    STANDING_HEIGHT,
};
use crate::genome::{GaitParams, GenomeError, Genotype};
use crate::kinematics::{
    forward_kinematics, inverse_kinematics_clamped, JointAngles, KinematicsError, LegGeometry,
};
use crate::nsga2::{EvalOutcome, Evaluator};

/// Half the hip rectangle along x, metres.
pub const BODY_HALF_LENGTH: f64 = 0.24;

/// Half the hip rectangle along y, metres.
pub const BODY_HALF_WIDTH: f64 = 0.15;

/// Robot mass carried by the stance legs, kg.
pub const TOTAL_MASS_KG: f64 = 5.5;

/// Hip position of a leg in the body frame, leg order FL, FR, HL, HR.
pub fn hip_offset(leg: usize) -> Vector3<f64> {
    let x = if leg < 2 { BODY_HALF_LENGTH } else { -BODY_HALF_LENGTH };
    let y = if leg.is_multiple_of(2) {
        BODY_HALF_WIDTH
    } else {
        -BODY_HALF_WIDTH
    };
    Vector3::new(x, y, 0.0)
}

/// Walking direction of one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    /// Sign applied to the sagittal foot path.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    /// Noise stream of the pass, so both passes draw independent noise from
    /// one seed.
    fn stream(self) -> u64 {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }
}

/// Simulation and scoring settings for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Servo supply voltage, V.
    pub voltage: f64,
    /// Control loop rate, Hz.
    pub control_rate: f64,
    /// Trace sampling rate, Hz; must divide the control rate.
    pub trace_rate: f64,
    /// Distance each pass tries to cover, metres.
    pub target_distance: f64,
    /// Wall-clock cap per pass, seconds.
    pub timeout: f64,
    /// Std of the per-joint command noise, radians.
    pub actuation_noise_std: f64,
    /// Stance residual beyond which a foot slips, metres.
    pub slip_threshold: f64,
    /// Weight of the acceleration term in the stability score.
    pub stability_alpha: f64,
    /// Stability score magnitude assigned to a fall.
    pub fall_stability_penalty: f64,
    /// Base seed of the command noise.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            voltage: 14.8,
            control_rate: 100.0,
            trace_rate: 100.0,
            target_distance: 1.5,
            timeout: 15.0,
            actuation_noise_std: 0.002,
            slip_threshold: 0.005,
            stability_alpha: 0.02,
            fall_stability_penalty: 0.5,
            seed: 0,
        }
    }
}

/// Errors raised by the simulation backend.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("infeasible gait: commanded speed {product:.3} m/min exceeds the cap")]
    Infeasible { product: f64 },
    #[error("trace_rate must be positive and divide control_rate")]
    BadRates,
    #[error("target_distance and timeout must be positive")]
    BadLimits,
    #[error(transparent)]
    Actuation(#[from] ActuationError),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// One stance foot sliding past the slip threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipEvent {
    pub t: f64,
    pub leg: usize,
    /// Distance the anchor slid, metres.
    pub magnitude: f64,
}

/// Body state at one trace instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub body_position: Vector3<f64>,
    /// Roll, pitch, yaw of the body, radians.
    pub orientation: Vector3<f64>,
    /// Second central difference of the position, m/s^2.
    pub linear_acceleration: Vector3<f64>,
}

/// Recorded body motion of one pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    pub slip_events: Vec<SlipEvent>,
}

/// Trace of one pass plus whether the robot fell during it.
#[derive(Debug, Clone, PartialEq)]
pub struct PassResult {
    pub trace: Trace,
    pub fell: bool,
}

/// Aggregated scores of a forward plus reverse evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Mean walking speed of both passes, metres per minute.
    pub speed: f64,
    /// Mean stability score of both passes (0 is best, more negative is
    /// shakier).
    pub stability: f64,
    pub distance_forward: f64,
    pub distance_back: f64,
    pub duration_forward: f64,
    pub duration_back: f64,
    pub fell: bool,
}

// Negated comparisons are deliberate: NaN must fail validation too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn validate(cfg: &EvalConfig) -> Result<usize, SimError> {
    spec_for_voltage(cfg.voltage)?;
    if !(cfg.control_rate > 0.0) || !(cfg.trace_rate > 0.0) {
        return Err(SimError::BadRates);
    }
    let ratio = cfg.control_rate / cfg.trace_rate;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
        return Err(SimError::BadRates);
    }
    if !(cfg.target_distance > 0.0) || !(cfg.timeout > 0.0) {
        return Err(SimError::BadLimits);
    }
    Ok(ratio.round() as usize)
}

/// Least-squares rigid transform pinning body-frame points to world points.
///
/// Returns the rotation and translation minimizing the summed squared
/// residuals, or None for fewer than 3 points or a degenerate solve.
pub fn fit_rigid_transform(
    body: &[Vector3<f64>],
    world: &[Vector3<f64>],
) -> Option<(Rotation3<f64>, Vector3<f64>)> {
    if body.len() < 3 || body.len() != world.len() {
        return None;
    }
    let n = body.len() as f64;
    let cb: Vector3<f64> = body.iter().sum::<Vector3<f64>>() / n;
    let cw: Vector3<f64> = world.iter().sum::<Vector3<f64>>() / n;
    let mut m = Matrix3::zeros();
    for (b, w) in body.iter().zip(world.iter()) {
        m += (w - cw) * (b - cb).transpose();
    }
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut d = Matrix3::identity();
    d[(2, 2)] = (u * v_t).determinant().signum();
    let rotation = Rotation3::from_matrix_unchecked(u * d * v_t);
    let translation = cw - rotation * cb;
    Some((rotation, translation))
}

/// Commanded foot target of one leg relative to its hip, body axes.
fn commanded_target(
    path: &FootPath,
    p: &GaitParams,
    leg_phase: f64,
    global_phase: f64,
    direction: Direction,
) -> Vector3<f64> {
    let sag = sample_sagittal(path, p, leg_phase);
    let wag = wag_offset(p, global_phase);
    Vector3::new(
        direction.sign() * sag.x + wag.x,
        LATERAL_HOME_OFFSET + wag.y,
        sag.y - STANDING_HEIGHT,
    )
}

/// Walks one pass and records the body trace.
///
/// The pass ends once net progress along the commanded direction reaches
/// `target_distance` or the timeout elapses. The robot starts posed on the
/// phase-0 commands with its body frame at the world origin.
pub fn simulate_pass(
    p: &GaitParams,
    geom: &LegGeometry,
    cfg: &EvalConfig,
    direction: Direction,
) -> Result<PassResult, SimError> {
    let trace_every = validate(cfg)?;
    let spec = spec_for_voltage(cfg.voltage)?;
    let path = FootPath::build(p);
    let schedule = LegSchedule::crawl(p.lift_duration);
    let dt = 1.0 / cfg.control_rate;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(direction.stream());
    let noise = Normal::new(0.0, cfg.actuation_noise_std).expect("non-negative noise std");

    // Start posed exactly on the phase-0 commands, body frame at the origin.
    let mut servos: Vec<[ServoState; 3]> = Vec::with_capacity(LEG_COUNT);
    let mut feet = [Vector3::zeros(); LEG_COUNT];
    for (leg, foot) in feet.iter_mut().enumerate() {
        let leg_phase = schedule.leg_phase(0.0, leg);
        let target = commanded_target(&path, p, leg_phase, 0.0, direction);
        let (q, _) = inverse_kinematics_clamped(geom, &target);
        servos.push([
            ServoState::at(q.hip_roll),
            ServoState::at(q.hip_pitch),
            ServoState::at(q.knee_pitch),
        ]);
        *foot = hip_offset(leg) + forward_kinematics(geom, &q);
    }

    let mut rotation = Rotation3::identity();
    let mut position = Vector3::zeros();
    let mut anchors: [Option<Vector3<f64>>; LEG_COUNT] = [None; LEG_COUNT];
    for leg in 0..LEG_COUNT {
        if !schedule.is_swing(schedule.leg_phase(0.0, leg)) {
            anchors[leg] = Some(feet[leg]);
        }
    }

    let mut times = vec![0.0];
    let mut positions = vec![position];
    let mut orientations = vec![Vector3::zeros()];
    let mut slip_events = Vec::new();
    let mut fell = false;

    let mut step = 0usize;
    loop {
        step += 1;
        let t = step as f64 * dt;
        let global_phase = (t * p.gait_frequency).fract();
        let in_stance: Vec<bool> = (0..LEG_COUNT)
            .map(|leg| !schedule.is_swing(schedule.leg_phase(global_phase, leg)))
            .collect();
        let n_stance = in_stance.iter().filter(|&&s| s).count();

        for leg in 0..LEG_COUNT {
            let leg_phase = schedule.leg_phase(global_phase, leg);
            let target = commanded_target(&path, p, leg_phase, global_phase, direction);
            let (q, _) = inverse_kinematics_clamped(geom, &target);
            let commands = [
                q.hip_roll + noise.sample(&mut rng),
                q.hip_pitch + noise.sample(&mut rng),
                q.knee_pitch + noise.sample(&mut rng),
            ];
            // The quasi-static weight estimate loads pitch and knee on every
            // leg, swing included; only the roll joint runs unloaded. Lever
            // arm is the commanded sagittal foot offset.
            let load = if n_stance > 0 {
                stance_load_torque(TOTAL_MASS_KG, n_stance, target.x)
                    .expect("n_stance > 0 checked above")
            } else {
                0.0
            };
            let speeds = [
                max_speed(&spec, 0.0),
                max_speed(&spec, load),
                max_speed(&spec, load),
            ];
            for joint in 0..3 {
                servos[leg][joint] =
                    step_tracking(&servos[leg][joint], commands[joint], dt, speeds[joint]);
            }
            let achieved = JointAngles {
                hip_roll: servos[leg][0].angle,
                hip_pitch: servos[leg][1].angle,
                knee_pitch: servos[leg][2].angle,
            };
            feet[leg] = hip_offset(leg) + forward_kinematics(geom, &achieved);
        }

        let anchored: Vec<usize> = (0..LEG_COUNT)
            .filter(|&leg| in_stance[leg] && anchors[leg].is_some())
            .collect();
        if anchored.len() < 3 {
            fell = true;
        } else {
            let body: Vec<Vector3<f64>> = anchored.iter().map(|&leg| feet[leg]).collect();
            let world: Vec<Vector3<f64>> =
                anchored.iter().map(|&leg| anchors[leg].unwrap()).collect();
            match fit_rigid_transform(&body, &world) {
                Some((r, tr)) => {
                    rotation = r;
                    position = tr;
                }
                None => fell = true,
            }
        }

        if !fell {
            // Slide anchors that resist more than the slip threshold.
            for &leg in &anchored {
                let world_foot = rotation * feet[leg] + position;
                let anchor = anchors[leg].unwrap();
                let residual = (world_foot - anchor).norm();
                if residual > cfg.slip_threshold {
                    let slid =
                        world_foot + (anchor - world_foot) * (cfg.slip_threshold / residual);
                    anchors[leg] = Some(slid);
                    slip_events.push(SlipEvent {
                        t,
                        leg,
                        magnitude: residual - cfg.slip_threshold,
                    });
                }
            }
            // Touch-downs anchor at the achieved world position; lifted legs
            // drop their anchor.
            for leg in 0..LEG_COUNT {
                if in_stance[leg] {
                    if anchors[leg].is_none() {
                        anchors[leg] = Some(rotation * feet[leg] + position);
                    }
                } else {
                    anchors[leg] = None;
                }
            }
        }

        if step.is_multiple_of(trace_every) {
            times.push(t);
            positions.push(position);
            let (roll, pitch, yaw) = rotation.euler_angles();
            orientations.push(Vector3::new(roll, pitch, yaw));
        }

        let progress = direction.sign() * position.x;
        if fell || progress >= cfg.target_distance || t >= cfg.timeout - 1e-12 {
            break;
        }
    }

    // Accelerations are the second central difference of the recorded
    // positions; endpoints copy their interior neighbour.
    let trace_dt = trace_every as f64 * dt;
    let n = positions.len();
    let mut accelerations = vec![Vector3::zeros(); n];
    for i in 1..n.saturating_sub(1) {
        accelerations[i] =
            (positions[i + 1] - 2.0 * positions[i] + positions[i - 1]) / (trace_dt * trace_dt);
    }
    if n >= 3 {
        accelerations[0] = accelerations[1];
        accelerations[n - 1] = accelerations[n - 2];
    }

    let samples = (0..n)
        .map(|i| TraceSample {
            t: times[i],
            body_position: positions[i],
            orientation: orientations[i],
            linear_acceleration: accelerations[i],
        })
        .collect();

    Ok(PassResult {
        trace: Trace {
            samples,
            slip_events,
        },
        fell,
    })
}

fn pass_scores(pass: &PassResult, cfg: &EvalConfig) -> Result<(f64, f64), SimError> {
    if pass.fell {
        return Ok((0.0, -cfg.fall_stability_penalty));
    }
    let weights = StabilityWeights {
        alpha: cfg.stability_alpha,
    };
    Ok((
        speed_fitness(&pass.trace)?,
        stability_fitness(&pass.trace, &weights)?,
    ))
}

fn pass_extent(pass: &PassResult) -> (f64, f64) {
    let samples = &pass.trace.samples;
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => ((b.body_position - a.body_position).norm(), b.t - a.t),
        _ => (0.0, 0.0),
    }
}

/// Runs the forward and reverse passes and keeps their traces.
pub fn evaluate_with_traces(
    p: &GaitParams,
    geom: &LegGeometry,
    cfg: &EvalConfig,
) -> Result<(EvaluationResult, PassResult, PassResult), SimError> {
    if !p.is_feasible() {
        return Err(SimError::Infeasible {
            product: p.speed_product(),
        });
    }
    let forward = simulate_pass(p, geom, cfg, Direction::Forward)?;
    let reverse = simulate_pass(p, geom, cfg, Direction::Reverse)?;
    let (speed_f, stability_f) = pass_scores(&forward, cfg)?;
    let (speed_r, stability_r) = pass_scores(&reverse, cfg)?;
    let (distance_forward, duration_forward) = pass_extent(&forward);
    let (distance_back, duration_back) = pass_extent(&reverse);
    let result = EvaluationResult {
        speed: (speed_f + speed_r) / 2.0,
        stability: (stability_f + stability_r) / 2.0,
        distance_forward,
        distance_back,
        duration_forward,
        duration_back,
        fell: forward.fell || reverse.fell,
    };
    Ok((result, forward, reverse))
}

/// Scores one gait: forward pass, reverse pass, objectives averaged.
pub fn evaluate(
    p: &GaitParams,
    geom: &LegGeometry,
    cfg: &EvalConfig,
) -> Result<EvaluationResult, SimError> {
    evaluate_with_traces(p, geom, cfg).map(|(result, _, _)| result)
}

/// Repeats an evaluation `n` times with seeds `cfg.seed + index`.
pub fn reevaluate(
    p: &GaitParams,
    geom: &LegGeometry,
    cfg: &EvalConfig,
    n: usize,
) -> Result<Vec<EvaluationResult>, SimError> {
    (0..n)
        .map(|i| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = cfg.seed + i as u64;
            evaluate(p, geom, &run_cfg)
        })
        .collect()
}

/// Evaluation backend wiring the simulation into the evolutionary engine.
///
/// The per-individual seed handed down by the optimizer replaces the seed
/// of the base config; everything else is shared across the run. Slip
/// counts sum both passes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvaluator {
    pub base: EvalConfig,
}

impl Evaluator for SimEvaluator {
    fn evaluate(&self, genotype: &Genotype, seed: u64) -> Result<EvalOutcome, SimError> {
        let p = genotype.decode()?;
        let geom = LegGeometry::from_extensions(p.femur_ext, p.tibia_ext)?;
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        let (result, forward, reverse) = evaluate_with_traces(&p, &geom, &cfg)?;
        Ok(EvalOutcome {
            speed: result.speed,
            stability: result.stability,
            slip_count: forward.trace.slip_events.len() + reverse.trace.slip_events.len(),
            fell: result.fell,
        })
    }
}
