//! Crawl-gait foot paths: stance line, Catmull-Rom swing arc, and body wag.
//!
//! Foot targets are expressed relative to each hip in body axes (x forward,
//! y left, z up) and never depend on leg geometry, so the same commanded
//! motion is sent to every morphology. During stance the foot travels a
//! straight ground line from front to back; during swing it returns along a
//! spline that rises to `step_height` and, with `step_smoothing`, flattens
//! the touch-down approach by overshooting the landing point.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::genome::GaitParams;

/// Neutral body height above the ground line, metres.
///
/// Fixed for every morphology so the controller stays geometry-free; the
/// value keeps all commanded targets inside the reach of the shortest leg
/// and the foot clear of the folded-knee inner radius of the longest one.
/// The crouch keeps swing sweeps wide, so fast gaits run near the loaded
/// servo speed limit instead of the step-length cap.
pub const STANDING_HEIGHT: f64 = 0.150;

/// Lateral offset of the foot home position from its hip, metres.
pub const LATERAL_HOME_OFFSET: f64 = 0.0;

/// Number of legs.
pub const LEG_COUNT: usize = 4;

/// Errors raised by path construction and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaitError {
    #[error("spline needs at least 2 control points, got {count}")]
    TooFewControls { count: usize },
}

/// Uniform Catmull-Rom interpolation over an open control polygon.
///
/// `u` in [0, 1] maps proportionally onto the segments (values outside are
/// clamped). The curve passes through every control point; endpoint tangents
/// come from reflecting the neighbouring point through each end.
pub fn catmull_rom(controls: &[Vector2<f64>], u: f64) -> Result<Vector2<f64>, GaitError> {
    let n = controls.len();
    if n < 2 {
        return Err(GaitError::TooFewControls { count: n });
    }
    let point = |i: isize| -> Vector2<f64> {
        if i < 0 {
            2.0 * controls[0] - controls[1]
        } else if i as usize >= n {
            2.0 * controls[n - 1] - controls[n - 2]
        } else {
            controls[i as usize]
        }
    };
    let segments = (n - 1) as f64;
    let s = u.clamp(0.0, 1.0) * segments;
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    let i = i as isize;

    let (p0, p1, p2, p3) = (point(i - 1), point(i), point(i + 1), point(i + 2));
    let a = 2.0 * p1;
    let b = p2 - p0;
    let c = 2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3;
    let d = -p0 + 3.0 * p1 - 3.0 * p2 + p3;
    Ok(0.5 * (a + b * t + c * (t * t) + d * (t * t * t)))
}

/// Sagittal foot path of one leg over a gait cycle, ground at z = 0.
///
/// The swing controls are, in order: lift-off (equal to `stance_end`), apex,
/// smoothing point, touch-down (equal to `stance_start`).
#[derive(Debug, Clone, PartialEq)]
pub struct FootPath {
    pub stance_start: Vector2<f64>,
    pub stance_end: Vector2<f64>,
    pub swing_controls: [Vector2<f64>; 4],
}

impl FootPath {
    /// Lays out the stance line and swing controls for the given parameters.
    pub fn build(p: &GaitParams) -> Self {
        let half = p.step_length / 2.0;
        let stance_start = Vector2::new(half, 0.0);
        let stance_end = Vector2::new(-half, 0.0);
        let apex = Vector2::new(-p.step_length / 4.0, p.step_height);
        let smoothing = Vector2::new(half + p.step_smoothing, 0.1 * p.step_height);
        FootPath {
            stance_start,
            stance_end,
            swing_controls: [stance_end, apex, smoothing, stance_start],
        }
    }
}

/// Sagittal path sample at `leg_phase` in [0, 1): swing first, then stance.
///
/// Swing occupies [0, lift_duration) and retraces the spline from
/// `stance_end` back to `stance_start`; stance covers the rest at constant
/// parameter rate. The two junctions and the cycle wrap are continuous.
pub fn sample_sagittal(path: &FootPath, p: &GaitParams, leg_phase: f64) -> Vector2<f64> {
    if leg_phase < p.lift_duration {
        let u = leg_phase / p.lift_duration;
        catmull_rom(&path.swing_controls, u).expect("4 swing controls")
    } else {
        let w = (leg_phase - p.lift_duration) / (1.0 - p.lift_duration);
        path.stance_start + w * (path.stance_end - path.stance_start)
    }
}

/// Body-frame (x, y) wag offset at a global cycle phase.
///
/// The fore-aft component runs at twice the gait frequency, the lateral one
/// at the gait frequency, both shifted by `wag_phase`.
pub fn wag_offset(p: &GaitParams, global_phase: f64) -> Vector2<f64> {
    let shifted = global_phase + p.wag_phase;
    Vector2::new(
        p.wag_x_amp * (4.0 * std::f64::consts::PI * shifted).sin(),
        p.wag_y_amp * (2.0 * std::f64::consts::PI * shifted).sin(),
    )
}

/// Complete foot target relative to the hip: sagittal path plus home offset
/// and wag, lowered by the standing height.
///
/// `leg_phase` selects the point on the path; `global_phase` drives the wag,
/// which is shared by all legs at any instant.
pub fn sample_foot_position(
    path: &FootPath,
    p: &GaitParams,
    leg_phase: f64,
    global_phase: f64,
) -> Vector3<f64> {
    let sagittal = sample_sagittal(path, p, leg_phase);
    let wag = wag_offset(p, global_phase);
    Vector3::new(
        sagittal.x + wag.x,
        LATERAL_HOME_OFFSET + wag.y,
        sagittal.y - STANDING_HEIGHT,
    )
}

/// Phase offsets of the crawl sequence, leg order FL, FR, HL, HR.
///
/// The lift order over a cycle is FL, HR, FR, HL, one quarter apart.
pub const CRAWL_PHASE_OFFSETS: [f64; LEG_COUNT] = [0.0, 0.5, 0.75, 0.25];

/// Per-leg phase offsets plus the shared swing fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct LegSchedule {
    pub phase_offsets: [f64; LEG_COUNT],
    pub lift_duration: f64,
}

impl LegSchedule {
    /// Crawl schedule: legs lift one at a time, quarter-cycle apart.
    pub fn crawl(lift_duration: f64) -> Self {
        LegSchedule {
            phase_offsets: CRAWL_PHASE_OFFSETS,
            lift_duration,
        }
    }

    /// Phase of one leg: global phase minus the leg offset, wrapped to [0, 1).
    pub fn leg_phase(&self, global_phase: f64, leg: usize) -> f64 {
        (global_phase - self.phase_offsets[leg]).rem_euclid(1.0)
    }

    /// A leg swings during the first `lift_duration` fraction of its cycle.
    pub fn is_swing(&self, leg_phase: f64) -> bool {
        leg_phase < self.lift_duration
    }

    /// Number of legs on the ground at a global phase.
    pub fn stance_count(&self, global_phase: f64) -> usize {
        (0..LEG_COUNT)
            .filter(|&leg| !self.is_swing(self.leg_phase(global_phase, leg)))
            .count()
    }
}
