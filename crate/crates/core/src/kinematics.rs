//! Analytic kinematics of one 3-DoF leg: hip roll, hip pitch, knee pitch.
//!
//! The hip sits at the origin of a frame with x forward, y left, z up. Roll
//! is the outermost joint; with all angles zero the leg points straight down
//! and positive roll swings the foot toward +y. A fixed structural offset is
//! rigid along the thigh, so the effective upper segment is offset + femur.
//! The knee only bends backward (knee_pitch <= 0), which makes the inverse
//! solution unique.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Structural hip-to-femur offset, metres, rigid along the thigh.
pub const FIXED_OFFSET: f64 = 0.110;

/// Femur length range, metres.
pub const FEMUR_RANGE: (f64, f64) = (0.185, 0.210);

/// Tibia length range, metres.
pub const TIBIA_RANGE: (f64, f64) = (0.255, 0.350);

/// Mechanical knee fold limit, radians (knee_pitch lies in [KNEE_MIN, 0]).
pub const KNEE_MIN: f64 = -2.8;

/// Linear speed of the leg-length actuators, metres per second.
pub const RECONFIG_SPEED_M_PER_S: f64 = 0.001;

/// Errors raised by geometry construction and the inverse solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("{name} length {value} outside [{lo}, {hi}]")]
    SegmentOutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("target at {distance} m is outside reach [{r_min}, {r_max}]; {gap} m past the boundary")]
    Unreachable {
        distance: f64,
        r_min: f64,
        r_max: f64,
        gap: f64,
    },
}

/// Segment lengths of one leg, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub femur: f64,
    pub tibia: f64,
}

impl LegGeometry {
    /// Validates segment lengths against their mechanical ranges.
    pub fn new(femur: f64, tibia: f64) -> Result<Self, KinematicsError> {
        if femur < FEMUR_RANGE.0 || femur > FEMUR_RANGE.1 {
            return Err(KinematicsError::SegmentOutOfRange {
                name: "femur",
                value: femur,
                lo: FEMUR_RANGE.0,
                hi: FEMUR_RANGE.1,
            });
        }
        if tibia < TIBIA_RANGE.0 || tibia > TIBIA_RANGE.1 {
            return Err(KinematicsError::SegmentOutOfRange {
                name: "tibia",
                value: tibia,
                lo: TIBIA_RANGE.0,
                hi: TIBIA_RANGE.1,
            });
        }
        Ok(LegGeometry { femur, tibia })
    }

    /// Geometry from extensions above the shortest configuration.
    pub fn from_extensions(femur_ext: f64, tibia_ext: f64) -> Result<Self, KinematicsError> {
        LegGeometry::new(FEMUR_RANGE.0 + femur_ext, TIBIA_RANGE.0 + tibia_ext)
    }

    /// Effective upper segment: structural offset plus femur.
    pub fn thigh(&self) -> f64 {
        FIXED_OFFSET + self.femur
    }

    /// Hip-to-foot length with the leg fully extended.
    pub fn total_length(&self) -> f64 {
        FIXED_OFFSET + self.femur + self.tibia
    }

    /// Outer radius of the reach annulus.
    pub fn max_reach(&self) -> f64 {
        self.thigh() + self.tibia
    }

    /// Inner radius of the reach annulus, set by the knee fold limit.
    pub fn min_reach(&self) -> f64 {
        let (a, b) = (self.thigh(), self.tibia);
        (a * a + b * b + 2.0 * a * b * KNEE_MIN.cos()).max(0.0).sqrt()
    }
}

/// Joint angles of one leg, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAngles {
    pub hip_roll: f64,
    pub hip_pitch: f64,
    pub knee_pitch: f64,
}

impl JointAngles {
    pub const ZERO: JointAngles = JointAngles {
        hip_roll: 0.0,
        hip_pitch: 0.0,
        knee_pitch: 0.0,
    };
}

/// Foot position for given joint angles, relative to the hip.
pub fn forward_kinematics(geom: &LegGeometry, q: &JointAngles) -> Vector3<f64> {
    let (a, b) = (geom.thigh(), geom.tibia);
    let inner = Vector3::new(
        -b * q.knee_pitch.sin(),
        0.0,
        -(a + b * q.knee_pitch.cos()),
    );
    let pitched = Rotation3::from_axis_angle(&Vector3::y_axis(), q.hip_pitch) * inner;
    Rotation3::from_axis_angle(&Vector3::x_axis(), q.hip_roll) * pitched
}

/// True when the target lies inside the reach annulus.
pub fn reachable(geom: &LegGeometry, target: &Vector3<f64>) -> bool {
    let r = target.norm();
    r >= geom.min_reach() && r <= geom.max_reach()
}

fn wrap_angle(x: f64) -> f64 {
    x.sin().atan2(x.cos())
}

/// Solver core; assumes the radius was already confined to the annulus.
fn solve(geom: &LegGeometry, target: &Vector3<f64>, r: f64) -> JointAngles {
    let (a, b) = (geom.thigh(), geom.tibia);
    let hip_roll = if target.y == 0.0 && target.z == 0.0 {
        0.0
    } else {
        target.y.atan2(-target.z)
    };
    let v = Rotation3::from_axis_angle(&Vector3::x_axis(), -hip_roll) * target;
    let cos_knee = ((r * r - a * a - b * b) / (2.0 * a * b)).clamp(-1.0, 1.0);
    let knee_pitch = -cos_knee.acos();
    // Foot position before hip pitch; subtracting its bearing from the
    // target bearing yields the pitch. A point (x, z) = (-c sin t, -c cos t)
    // has bearing t = atan2(-x, -z).
    let px = -b * knee_pitch.sin();
    let pz = -(a + b * knee_pitch.cos());
    let hip_pitch = wrap_angle((-v.x).atan2(-v.z) - (-px).atan2(-pz));
    JointAngles {
        hip_roll,
        hip_pitch,
        knee_pitch,
    }
}

/// Unique backward-knee joint solution for a reachable target.
///
/// Unreachable targets yield an error carrying the distance past the
/// annulus boundary.
pub fn inverse_kinematics(
    geom: &LegGeometry,
    target: &Vector3<f64>,
) -> Result<JointAngles, KinematicsError> {
    let r = target.norm();
    let (r_min, r_max) = (geom.min_reach(), geom.max_reach());
    if r < r_min || r > r_max {
        let gap = if r < r_min { r_min - r } else { r - r_max };
        return Err(KinematicsError::Unreachable {
            distance: r,
            r_min,
            r_max,
            gap,
        });
    }
    Ok(solve(geom, target, r))
}

/// Inverse solution with the target radially clamped onto the annulus.
///
/// Never fails; returns the angles together with the clamp distance
/// (0 for reachable targets). Targets at the origin map straight down onto
/// the inner radius.
pub fn inverse_kinematics_clamped(
    geom: &LegGeometry,
    target: &Vector3<f64>,
) -> (JointAngles, f64) {
    let r = target.norm();
    let (r_min, r_max) = (geom.min_reach(), geom.max_reach());
    if r < 1e-12 {
        let down = Vector3::new(0.0, 0.0, -r_min);
        return (solve(geom, &down, r_min), r_min);
    }
    let clamped = r.clamp(r_min, r_max);
    if clamped == r {
        (solve(geom, target, r), 0.0)
    } else {
        let scaled = target * (clamped / r);
        (solve(geom, &scaled, clamped), (r - clamped).abs())
    }
}

/// Time to morph between two geometries, seconds.
///
/// Femur and tibia actuators run in parallel at the reconfiguration speed,
/// so the slower segment sets the duration.
pub fn reconfigure_duration(from: &LegGeometry, to: &LegGeometry) -> f64 {
    let df = (to.femur - from.femur).abs();
    let dt = (to.tibia - from.tibia).abs();
    df.max(dt) / RECONFIG_SPEED_M_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn min_geom() -> LegGeometry {
        LegGeometry::new(FEMUR_RANGE.0, TIBIA_RANGE.0).unwrap()
    }

    fn max_geom() -> LegGeometry {
        LegGeometry::new(FEMUR_RANGE.1, TIBIA_RANGE.1).unwrap()
    }

    #[test]
    fn zero_angles_point_straight_down() {
        let foot = forward_kinematics(&min_geom(), &JointAngles::ZERO);
        assert_eq!(foot.x, 0.0);
        assert_eq!(foot.y, 0.0);
        assert_eq!(foot.z, -min_geom().total_length());
        assert_abs_diff_eq!(foot.z, -0.550, epsilon = 1e-12);

        let foot = forward_kinematics(&max_geom(), &JointAngles::ZERO);
        assert_eq!(foot.z, -max_geom().total_length());
        assert_abs_diff_eq!(foot.z, -0.670, epsilon = 1e-12);
    }

    #[test]
    fn quarter_roll_swings_the_foot_to_plus_y() {
        let q = JointAngles {
            hip_roll: FRAC_PI_2,
            hip_pitch: 0.0,
            knee_pitch: 0.0,
        };
        let foot = forward_kinematics(&min_geom(), &q);
        assert_abs_diff_eq!(foot.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(foot.y, 0.550, epsilon = 1e-12);
        assert_abs_diff_eq!(foot.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn total_length_spans_the_documented_range() {
        assert_abs_diff_eq!(min_geom().total_length(), 0.550, epsilon = 1e-12);
        assert_abs_diff_eq!(max_geom().total_length(), 0.670, epsilon = 1e-12);
    }

    #[test]
    fn geometry_rejects_out_of_range_segments() {
        assert!(matches!(
            LegGeometry::new(0.25, 0.30),
            Err(KinematicsError::SegmentOutOfRange { name: "femur", .. })
        ));
        assert!(matches!(
            LegGeometry::new(0.20, 0.40),
            Err(KinematicsError::SegmentOutOfRange { name: "tibia", .. })
        ));
        assert!(LegGeometry::from_extensions(0.025, 0.095).is_ok());
        assert!(LegGeometry::from_extensions(0.026, 0.0).is_err());
    }

    #[test]
    fn straight_down_target_solves_to_zero_angles() {
        let geom = min_geom();
        let target = Vector3::new(0.0, 0.0, -geom.total_length());
        let q = inverse_kinematics(&geom, &target).unwrap();
        assert_abs_diff_eq!(q.hip_roll, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.hip_pitch, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.knee_pitch, 0.0, epsilon = 1e-9);
        let back = forward_kinematics(&geom, &q);
        assert_eq!(back.z, -geom.total_length());
    }

    #[test]
    fn knee_branch_is_always_backward() {
        let geom = max_geom();
        for k in 1..50 {
            let r = geom.min_reach() + (geom.max_reach() - geom.min_reach()) * k as f64 / 50.0;
            let target = Vector3::new(0.1, 0.05, -(r * r - 0.0125).max(0.01).sqrt());
            if let Ok(q) = inverse_kinematics(&geom, &target) {
                assert!(q.knee_pitch <= 0.0);
                assert!(q.knee_pitch >= KNEE_MIN - 1e-9);
            }
        }
    }

    #[test]
    fn far_target_reports_distance_past_outer_radius() {
        let geom = min_geom();
        let err = inverse_kinematics(&geom, &Vector3::new(0.0, 0.0, -1.0)).unwrap_err();
        match err {
            KinematicsError::Unreachable { gap, r_max, .. } => {
                assert_abs_diff_eq!(gap, 1.0 - r_max, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn near_target_reports_distance_inside_inner_radius() {
        let geom = min_geom();
        let err = inverse_kinematics(&geom, &Vector3::new(0.0, 0.0, -0.05)).unwrap_err();
        match err {
            KinematicsError::Unreachable { gap, r_min, .. } => {
                assert_abs_diff_eq!(gap, r_min - 0.05, epsilon = 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn reach_annulus_agrees_with_dense_forward_sampling() {
        let geom = max_geom();
        let (r_min, r_max) = (geom.min_reach(), geom.max_reach());
        let mut seen_min = f64::INFINITY;
        let mut seen_max = 0.0f64;
        for i in 0..30 {
            for j in 0..30 {
                for k in 0..30 {
                    let q = JointAngles {
                        hip_roll: -1.5 + 3.0 * i as f64 / 29.0,
                        hip_pitch: -3.0 + 6.0 * j as f64 / 29.0,
                        knee_pitch: KNEE_MIN * k as f64 / 29.0,
                    };
                    let foot = forward_kinematics(&geom, &q);
                    let r = foot.norm();
                    assert!(r >= r_min - 1e-9 && r <= r_max + 1e-9);
                    assert!(reachable(&geom, &foot) || r > r_max || r < r_min);
                    seen_min = seen_min.min(r);
                    seen_max = seen_max.max(r);
                }
            }
        }
        assert_abs_diff_eq!(seen_min, r_min, epsilon = 1e-6);
        assert_abs_diff_eq!(seen_max, r_max, epsilon = 1e-6);
    }

    #[test]
    fn clamped_solver_projects_onto_the_annulus() {
        let geom = min_geom();
        let far = Vector3::new(0.3, 0.1, -0.9);
        let (q, gap) = inverse_kinematics_clamped(&geom, &far);
        let foot = forward_kinematics(&geom, &q);
        assert_abs_diff_eq!(foot.norm(), geom.max_reach(), epsilon = 1e-9);
        assert_abs_diff_eq!(gap, far.norm() - geom.max_reach(), epsilon = 1e-9);
        // Clamping preserves the bearing.
        assert_abs_diff_eq!(
            (foot.normalize() - far.normalize()).norm(),
            0.0,
            epsilon = 1e-9
        );

        let near = Vector3::new(0.0, 0.0, -0.02);
        let (q, _) = inverse_kinematics_clamped(&geom, &near);
        let foot = forward_kinematics(&geom, &q);
        assert_abs_diff_eq!(foot.norm(), geom.min_reach(), epsilon = 1e-9);

        let origin = Vector3::zeros();
        let (q, gap) = inverse_kinematics_clamped(&geom, &origin);
        let foot = forward_kinematics(&geom, &q);
        assert_abs_diff_eq!(foot.norm(), geom.min_reach(), epsilon = 1e-9);
        assert_abs_diff_eq!(gap, geom.min_reach(), epsilon = 1e-12);

        let fine = Vector3::new(0.05, 0.02, -0.4);
        let (q, gap) = inverse_kinematics_clamped(&geom, &fine);
        assert_eq!(gap, 0.0);
        let direct = inverse_kinematics(&geom, &fine).unwrap();
        assert_eq!(q, direct);
    }

    #[test]
    fn reconfigure_duration_uses_the_slower_parallel_segment() {
        let from = min_geom();
        let to = max_geom();
        assert_abs_diff_eq!(reconfigure_duration(&from, &to), 95.0, epsilon = 1e-9);
        assert_abs_diff_eq!(reconfigure_duration(&to, &from), 95.0, epsilon = 1e-9);
        assert_eq!(reconfigure_duration(&from, &from), 0.0);
        let partial = LegGeometry::new(0.210, 0.255).unwrap();
        assert_abs_diff_eq!(reconfigure_duration(&from, &partial), 25.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn forward_inverse_round_trip(
            femur_ext in 0.0f64..=0.025,
            tibia_ext in 0.0f64..=0.095,
            roll in -1.2f64..=1.2,
            pitch in -1.5f64..=1.5,
            knee in KNEE_MIN..=0.0,
        ) {
            let geom = LegGeometry::from_extensions(femur_ext, tibia_ext).unwrap();
            let target = forward_kinematics(&geom, &JointAngles {
                hip_roll: roll,
                hip_pitch: pitch,
                knee_pitch: knee,
            });
            let q = inverse_kinematics(&geom, &target).unwrap();
            let back = forward_kinematics(&geom, &q);
            prop_assert!((back - target).norm() < 1e-6);
        }
    }
}
