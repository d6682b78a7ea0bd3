//! Forward/inverse kinematics and joint-space trajectory planning for a
//! four-axis desktop arm: base yaw, shoulder, elbow, and a suction tip whose
//! orientation is held fixed (pointing down), so only three joints matter.
//!
//! Angles are degrees at every public boundary. Lengths are millimetres.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position equality tolerance used by checks on FK/IK results (mm).
pub const POSITION_TOLERANCE_MM: f64 = 1e-6;

/// Angle equality tolerance (degrees).
pub const ANGLE_TOLERANCE_DEG: f64 = 1e-9;

// Slack allowed when a solution sits on a joint limit or on the outer/inner
// shell of the envelope. Anything inside the slack is clamped.
const LIMIT_SLACK_DEG: f64 = 1e-9;
const ENVELOPE_SLACK_MM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target unreachable: {reason}")]
    Unreachable { reason: UnreachableReason },
    #[error("trajectory needs at least 2 waypoints, got {0}")]
    InvalidWaypointCount(usize),
    #[error("invalid arm profile: {0}")]
    InvalidProfile(String),
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnreachableReason {
    OutOfEnvelope,
    JointLimit,
}

impl fmt::Display for UnreachableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnreachableReason::OutOfEnvelope => "out_of_envelope",
            UnreachableReason::JointLimit => "joint_limit",
        })
    }
}

/// Geometry and limits of the simulated arm.
///
/// The JSON form is `{"l1", "l2", "base_height", "joint_limits": [[min, max]; 3],
/// "max_joint_speed"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmProfile {
    /// Rear-arm length (mm).
    pub l1: f64,
    /// Forearm length (mm).
    pub l2: f64,
    /// Tip height offset at the zero pose (mm).
    pub base_height: f64,
    /// `[min, max]` for base yaw, shoulder, elbow (degrees).
    pub joint_limits: [[f64; 2]; 3],
    /// Degrees per second, shared by all joints.
    pub max_joint_speed: f64,
}

impl Default for ArmProfile {
    fn default() -> Self {
        ArmProfile {
            l1: 135.0,
            l2: 147.0,
            base_height: 138.0,
            joint_limits: [[-135.0, 135.0], [0.0, 85.0], [-10.0, 95.0]],
            max_joint_speed: 90.0,
        }
    }
}

impl ArmProfile {
    pub fn from_json(text: &str) -> Result<Self, KinematicsError> {
        let profile: ArmProfile = serde_json::from_str(text)
            .map_err(|e| KinematicsError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |msg: String| Err(KinematicsError::InvalidProfile(msg));
        let scalars = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("base_height", self.base_height),
            ("max_joint_speed", self.max_joint_speed),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.l1 <= 0.0 || self.l2 <= 0.0 {
            return bad("link lengths must be positive".into());
        }
        if self.base_height < 0.0 {
            return bad("base_height must be non-negative".into());
        }
        if self.max_joint_speed <= 0.0 {
            return bad("max_joint_speed must be positive".into());
        }
        for (j, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return bad(format!("joint {} limits must satisfy min < max", j + 1));
            }
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointState) -> bool {
        q.as_array()
            .iter()
            .zip(self.joint_limits.iter())
            .all(|(a, [lo, hi])| *a >= *lo && *a <= *hi)
    }

    /// Maximum reach from the shoulder axis.
    pub fn reach(&self) -> f64 {
        self.l1 + self.l2
    }
}

/// Joint angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    /// Base yaw.
    pub theta1: f64,
    /// Shoulder, measured from horizontal.
    pub theta2: f64,
    /// Elbow, relative to the rear arm.
    pub theta3: f64,
}

impl JointState {
    pub const fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        JointState {
            theta1,
            theta2,
            theta3,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        JointState::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|a| a.is_finite())
    }

    /// Per-joint linear interpolation, `t` in `[0, 1]`. Each joint is kept
    /// between its two endpoints, and `t == 1` yields `to` exactly.
    pub fn lerp(&self, to: &JointState, t: f64) -> JointState {
        if t >= 1.0 {
            return *to;
        }
        let a = self.as_array();
        let b = to.as_array();
        let mut out = [0.0; 3];
        for j in 0..3 {
            let v = a[j] + (b[j] - a[j]) * t;
            out[j] = v.clamp(a[j].min(b[j]), a[j].max(b[j]));
        }
        JointState::from_array(out)
    }

    /// Largest absolute per-joint difference (degrees).
    pub fn max_delta(&self, other: &JointState) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Cartesian tip position (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Pose { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (*self - *other).norm()
    }

    pub fn scale(&self, k: f64) -> Pose {
        Pose::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Pose::new(a[0], a[1], a[2])
    }
}

impl Add for Pose {
    type Output = Pose;
    fn add(self, o: Pose) -> Pose {
        Pose::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Pose {
    type Output = Pose;
    fn sub(self, o: Pose) -> Pose {
        Pose::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Planned joint-space motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<JointState>,
    /// Unscaled duration in seconds.
    pub duration: f64,
}

impl Trajectory {
    pub fn start(&self) -> &JointState {
        &self.waypoints[0]
    }

    pub fn goal(&self) -> &JointState {
        self.waypoints
            .last()
            .expect("trajectory has >= 2 waypoints")
    }
}

pub fn forward_kinematics(profile: &ArmProfile, q: &JointState) -> Pose {
    let yaw = q.theta1.to_radians();
    let shoulder = q.theta2.to_radians();
    let forearm = (q.theta2 + q.theta3).to_radians();
    let r = profile.l1 * shoulder.cos() + profile.l2 * forearm.cos();
    Pose::new(
        r * yaw.cos(),
        r * yaw.sin(),
        profile.base_height + profile.l1 * shoulder.sin() + profile.l2 * forearm.sin(),
    )
}

/// Closed-form IK. Yaw is `atan2(y, x)`; when that yaw is out of limits or
/// yields no in-limit arm pose, the reach-over configuration (yaw turned by
/// 180 degrees, tip behind the shoulder) is tried next. For each yaw, the
/// elbow branch with a non-negative angle comes first and the mirrored branch
/// second. Candidate order is fixed, so the result is deterministic.
pub fn inverse_kinematics(
    profile: &ArmProfile,
    target: &Pose,
) -> Result<JointState, KinematicsError> {
    if !target.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    let unreachable = |reason| Err(KinematicsError::Unreachable { reason });

    let (l1, l2) = (profile.l1, profile.l2);
    let r = target.x.hypot(target.y);
    let h = target.z - profile.base_height;
    let d2 = r * r + h * h;
    let d = d2.sqrt();
    if d > l1 + l2 + ENVELOPE_SLACK_MM || d < (l1 - l2).abs() - ENVELOPE_SLACK_MM {
        return unreachable(UnreachableReason::OutOfEnvelope);
    }

    // (yaw, signed radius in the arm plane)
    let candidates: Vec<(f64, f64)> = if r == 0.0 {
        vec![(
            0.0f64.clamp(profile.joint_limits[0][0], profile.joint_limits[0][1]),
            0.0,
        )]
    } else {
        let yaw = target.y.atan2(target.x).to_degrees();
        let flipped = if yaw > 0.0 { yaw - 180.0 } else { yaw + 180.0 };
        vec![(yaw, r), (flipped, -r)]
    };

    let cos_elbow = ((d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let elbow = cos_elbow.acos();
    let mut slack_only = false;
    for (yaw, radius) in candidates {
        let Some(yaw) = fit_limit(yaw, profile.joint_limits[0]) else {
            continue;
        };
        let elevation = h.atan2(radius);
        for branch in [elbow, -elbow] {
            let shoulder = elevation - (l2 * branch.sin()).atan2(l1 + l2 * branch.cos());
            let (Some(t2), Some(t3)) = (
                fit_limit(shoulder.to_degrees(), profile.joint_limits[1]),
                fit_limit(branch.to_degrees(), profile.joint_limits[2]),
            ) else {
                continue;
            };
            let q = JointState::new(yaw, t2, t3);
            if forward_kinematics(profile, &q).distance(target) < POSITION_TOLERANCE_MM {
                return Ok(q);
            }
            slack_only = true;
        }
    }
    if slack_only {
        unreachable(UnreachableReason::OutOfEnvelope)
    } else {
        unreachable(UnreachableReason::JointLimit)
    }
}

fn fit_limit(angle: f64, [lo, hi]: [f64; 2]) -> Option<f64> {
    if angle < lo - LIMIT_SLACK_DEG || angle > hi + LIMIT_SLACK_DEG {
        None
    } else {
        Some(angle.clamp(lo, hi))
    }
}

pub fn is_reachable(profile: &ArmProfile, target: &Pose) -> bool {
    inverse_kinematics(profile, target).is_ok()
}

/// Unscaled time for a joint move: the slowest joint at full speed.
pub fn move_duration(profile: &ArmProfile, from: &JointState, to: &JointState) -> f64 {
    from.max_delta(to) / profile.max_joint_speed
}

/// Linear per-joint interpolation with `n` waypoints, endpoints included.
pub fn plan_trajectory(
    profile: &ArmProfile,
    from: &JointState,
    to: &JointState,
    n: usize,
) -> Result<Trajectory, KinematicsError> {
    if n < 2 {
        return Err(KinematicsError::InvalidWaypointCount(n));
    }
    if !from.is_finite() || !to.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    let last = (n - 1) as f64;
    let waypoints = (0..n)
        .map(|k| match k {
            0 => *from,
            k if k == n - 1 => *to,
            k => from.lerp(to, k as f64 / last),
        })
        .collect();
    Ok(Trajectory {
        waypoints,
        duration: move_duration(profile, from, to),
    })
}
