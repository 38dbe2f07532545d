//! Voltage-dependent servo model: speed-torque line and rate-limited
//! tracking.
//!
//! The joint servos were bench-measured at two supply voltages; between
//! those rows the no-load speed and stall torque interpolate linearly.
//! Available speed under load follows the usual DC-motor line from no-load
//! speed down to zero at stall. Tracking is kinematic: an angle moves toward
//! its command at the available speed and never overshoots.

use thiserror::Error;

/// Standard gravity, m/s^2.
pub const GRAVITY_M_PER_S2: f64 = 9.81;

/// Measured servo rows: (supply voltage V, no-load speed rpm, stall torque Nm).
pub const SERVO_TABLE: [(f64, f64, f64); 2] = [(12.0, 63.0, 6.0), (14.8, 78.0, 7.3)];

const RPM_TO_RAD_PER_S: f64 = std::f64::consts::PI / 30.0;

/// Errors raised by the servo model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActuationError {
    #[error("supply voltage {voltage} V outside the measured range [{lo}, {hi}] V")]
    VoltageOutOfRange { voltage: f64, lo: f64, hi: f64 },
    #[error("stance load is undefined with zero stance legs")]
    NoStanceLegs,
}

/// Servo capabilities at one supply voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoSpec {
    pub voltage: f64,
    /// No-load speed, rad/s.
    pub no_load_speed: f64,
    /// Stall torque, Nm.
    pub stall_torque: f64,
}

/// Interpolates the measured table at a supply voltage.
///
/// Only voltages between the two measured rows are meaningful; anything
/// outside errors rather than extrapolating.
pub fn spec_for_voltage(voltage: f64) -> Result<ServoSpec, ActuationError> {
    let (v_lo, rpm_lo, stall_lo) = SERVO_TABLE[0];
    let (v_hi, rpm_hi, stall_hi) = SERVO_TABLE[1];
    if voltage < v_lo || voltage > v_hi {
        return Err(ActuationError::VoltageOutOfRange {
            voltage,
            lo: v_lo,
            hi: v_hi,
        });
    }
    let t = (voltage - v_lo) / (v_hi - v_lo);
    let rpm = rpm_lo * (1.0 - t) + rpm_hi * t;
    let stall = stall_lo * (1.0 - t) + stall_hi * t;
    Ok(ServoSpec {
        voltage,
        no_load_speed: rpm * RPM_TO_RAD_PER_S,
        stall_torque: stall,
    })
}

/// Fastest achievable speed under a load torque, rad/s.
///
/// Linear speed-torque line: no-load speed at zero load, zero at or beyond
/// stall.
pub fn max_speed(spec: &ServoSpec, load_torque: f64) -> f64 {
    let load = load_torque.max(0.0);
    spec.no_load_speed * (1.0 - load / spec.stall_torque).max(0.0)
}

/// Quasi-static torque on a stance joint from supporting the body, Nm.
///
/// The body weight splits evenly over the stance legs and acts at the
/// horizontal lever arm between foot and hip-pitch axis.
pub fn stance_load_torque(
    total_mass: f64,
    n_stance: usize,
    lever_arm: f64,
) -> Result<f64, ActuationError> {
    if n_stance == 0 {
        return Err(ActuationError::NoStanceLegs);
    }
    Ok(total_mass * GRAVITY_M_PER_S2 / n_stance as f64 * lever_arm.abs())
}

/// One tracked joint: its present angle and the current command, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoState {
    pub angle: f64,
    pub commanded: f64,
}

impl ServoState {
    /// A servo resting exactly on its command.
    pub fn at(angle: f64) -> Self {
        ServoState {
            angle,
            commanded: angle,
        }
    }
}

/// Advances a servo toward a command for one step without overshoot.
///
/// The angle moves by at most `available_speed * dt` and lands exactly on
/// the command when it is within reach.
pub fn step_tracking(
    state: &ServoState,
    commanded: f64,
    dt: f64,
    available_speed: f64,
) -> ServoState {
    let reach = available_speed.max(0.0) * dt;
    let delta = commanded - state.angle;
    let angle = if delta.abs() <= reach {
        commanded
    } else {
        state.angle + reach.copysign(delta)
    };
    ServoState { angle, commanded }
}
