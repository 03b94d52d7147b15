//! 6-joint robot arm: forward kinematics, geometric Jacobian,
//! pseudoinverse-IK stepping with joint-limit clamping, and elbow-elevation
//! base configurations.
//!
//! The kinematic chain is `base * [T(offset_i) R(axis_i, angle_i)]_{i=0..5}
//! * T(ee_offset)`. Joint 0 rotates about the depth (z) axis; the remaining
//! joint axes are a documented modeling choice (pitch/pitch/roll/pitch/roll)
//! chosen so the wrist can realize arbitrary orientations.

use crate::config::{ConfigError, KeyValues};
use crate::frames::{Pose, UnitQuat, Vec3};
use nalgebra::{Matrix6, Vector6};
use thiserror::Error;

/// Joint angle limit shared by all joints, degrees.
pub const DEFAULT_LIMIT_DEG: f64 = 160.0;

/// Default posture (degrees): the documented start configuration of the arm.
pub const DEFAULT_POSTURE_DEG: [f64; 6] = [0.0, 65.0, -140.0, 0.0, 75.0, 0.0];

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint {joint} angle {angle} deg outside +/-{limit} deg")]
    LimitViolation { joint: usize, angle: f64, limit: f64 },
    #[error("invalid arm geometry: {0}")]
    BadGeometry(String),
}

/// Six joint angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointVector(pub [f64; 6]);

impl JointVector {
    pub fn new(angles: [f64; 6]) -> JointVector {
        JointVector(angles)
    }

    pub fn default_posture() -> JointVector {
        JointVector(DEFAULT_POSTURE_DEG)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }
}

/// Shoulder-abduction base configurations, rotating the whole chain about
/// the table z-axis at the shoulder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElbowElevation {
    /// 0 deg: arm plane vertical.
    Low,
    /// 45 deg: arm plane tilted.
    Mid,
    /// 90 deg: arm plane horizontal, elbow at shoulder height.
    High,
}

impl ElbowElevation {
    pub fn angle_deg(self) -> f64 {
        match self {
            ElbowElevation::Low => 0.0,
            ElbowElevation::Mid => 45.0,
            ElbowElevation::High => 90.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ElbowElevation::Low => "e_low",
            ElbowElevation::Mid => "e_mid",
            ElbowElevation::High => "e_high",
        }
    }
}

/// One revolute joint: translation from the previous frame, then rotation
/// about a fixed local axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSpec {
    pub axis: Vec3,
    pub offset: Vec3,
}

/// Immutable arm description. Construct with [`ArmModel::default_geometry`]
/// or load from a key/value config.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    base_reference: Pose,
    elevation: ElbowElevation,
    pub joints: [JointSpec; 6],
    pub ee_offset: Vec3,
    pub limit_deg: f64,
}

impl ArmModel {
    /// Default geometry: joint axes (z, x, x, y, x, y), link offsets chosen
    /// so the end-effector at the default posture presents the peg roughly
    /// 0.70 m in z from the table front edge at a comfortable height.
    pub fn default_geometry() -> ArmModel {
        let axis_x = Vec3::new(1.0, 0.0, 0.0);
        let axis_y = Vec3::new(0.0, 1.0, 0.0);
        let axis_z = Vec3::new(0.0, 0.0, 1.0);
        ArmModel {
            base_reference: Pose::from_position(Vec3::new(0.60, -0.18, 0.79)),
            elevation: ElbowElevation::Low,
            joints: [
                JointSpec { axis: axis_z, offset: Vec3::ZERO },
                JointSpec { axis: axis_x, offset: Vec3::new(0.0, 0.13, 0.0) },
                JointSpec { axis: axis_x, offset: Vec3::new(0.0, 0.30, 0.0) },
                JointSpec { axis: axis_y, offset: Vec3::new(0.0, 0.16, 0.0) },
                JointSpec { axis: axis_x, offset: Vec3::new(0.0, 0.16, 0.0) },
                JointSpec { axis: axis_y, offset: Vec3::new(0.0, 0.10, 0.0) },
            ],
            ee_offset: Vec3::new(0.0, 0.06, 0.0),
            limit_deg: DEFAULT_LIMIT_DEG,
        }
    }

    /// Loads geometry from the documented key/value schema:
    ///
    /// ```text
    /// base.position = 0.6 -0.18 0.79
    /// joint0.axis   = 0 0 1
    /// joint0.offset = 0 0 0
    /// ...
    /// joint5.axis   = 0 1 0
    /// joint5.offset = 0 0.10 0
    /// ee.offset     = 0 0.06 0
    /// limit_deg     = 160
    /// ```
    pub fn from_key_values(kv: &KeyValues) -> Result<ArmModel, ConfigError> {
        let mut arm = ArmModel::default_geometry();
        if kv.contains("base.position") {
            arm.base_reference.position = kv.get_vec3("base.position")?;
        }
        for i in 0..6 {
            let axis_key = format!("joint{i}.axis");
            if kv.contains(&axis_key) {
                let axis = kv.get_vec3(&axis_key)?;
                arm.joints[i].axis = axis.normalized().ok_or_else(|| ConfigError::BadValue {
                    key: axis_key.clone(),
                    msg: "axis must be nonzero".to_string(),
                })?;
            }
            let off_key = format!("joint{i}.offset");
            if kv.contains(&off_key) {
                arm.joints[i].offset = kv.get_vec3(&off_key)?;
            }
        }
        if kv.contains("ee.offset") {
            arm.ee_offset = kv.get_vec3("ee.offset")?;
        }
        arm.limit_deg = kv.get_f64_or("limit_deg", DEFAULT_LIMIT_DEG)?;
        if !(arm.limit_deg > 0.0 && arm.limit_deg <= 180.0) {
            return Err(ConfigError::BadValue {
                key: "limit_deg".to_string(),
                msg: format!("limit must be in (0, 180], got {}", arm.limit_deg),
            });
        }
        Ok(arm)
    }

    /// Current base pose, elevation rotation applied.
    pub fn base(&self) -> Pose {
        let rot = UnitQuat::from_axis_angle(
            Vec3::new(0.0, 0.0, 1.0),
            self.elevation.angle_deg().to_radians(),
        );
        Pose {
            position: self.base_reference.position,
            orientation: rot.compose(self.base_reference.orientation),
        }
    }

    pub fn elevation(&self) -> ElbowElevation {
        self.elevation
    }

    fn check_limits(&self, joints: &JointVector) -> Result<(), KinematicsError> {
        for (i, &a) in joints.0.iter().enumerate() {
            if !a.is_finite() || a.abs() > self.limit_deg {
                return Err(KinematicsError::LimitViolation {
                    joint: i,
                    angle: a,
                    limit: self.limit_deg,
                });
            }
        }
        Ok(())
    }
}

/// Rotates the base chain about the table z-axis by the elevation angle.
/// Idempotent: the elevation is stored, not accumulated.
pub fn apply_elevation(arm: &ArmModel, level: ElbowElevation) -> ArmModel {
    let mut out = arm.clone();
    out.elevation = level;
    out
}

/// Link frames (one per joint, after its rotation) plus the end-effector.
#[derive(Debug, Clone, Copy)]
pub struct FkResult {
    pub links: [Pose; 6],
    pub end_effector: Pose,
}

/// Forward kinematics: link and end-effector poses for a joint posture.
pub fn forward_kinematics(arm: &ArmModel, joints: &JointVector) -> Result<FkResult, KinematicsError> {
    arm.check_limits(joints)?;
    let mut pose = arm.base();
    let mut links = [Pose::default(); 6];
    for i in 0..6 {
        let j = &arm.joints[i];
        let origin = pose.position + pose.orientation.rotate(j.offset);
        let rot = UnitQuat::from_axis_angle(j.axis, joints.0[i].to_radians());
        pose = Pose { position: origin, orientation: pose.orientation.compose(rot) };
        links[i] = pose;
    }
    let ee = Pose {
        position: pose.position + pose.orientation.rotate(arm.ee_offset),
        orientation: pose.orientation,
    };
    Ok(FkResult { links, end_effector: ee })
}

/// Geometric Jacobian: rows 0..3 are end-effector linear velocity, rows 3..6
/// angular velocity (table frame), per unit joint rate in radians.
pub fn jacobian(arm: &ArmModel, joints: &JointVector) -> Result<Matrix6<f64>, KinematicsError> {
    let fk = forward_kinematics(arm, joints)?;
    let ee = fk.end_effector.position;
    let mut j = Matrix6::zeros();
    let mut parent = arm.base().orientation;
    for k in 0..6 {
        let axis_world = parent.rotate(arm.joints[k].axis);
        let origin = fk.links[k].position;
        let lin = axis_world.cross(ee - origin);
        j[(0, k)] = lin.x;
        j[(1, k)] = lin.y;
        j[(2, k)] = lin.z;
        j[(3, k)] = axis_world.x;
        j[(4, k)] = axis_world.y;
        j[(5, k)] = axis_world.z;
        parent = fk.links[k].orientation;
    }
    Ok(j)
}

/// Desired end-effector displacement for one IK step: translation in meters
/// plus a world-frame rotation vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseDelta {
    pub translation: Vec3,
    pub rotation: Vec3,
}

impl PoseDelta {
    pub fn norm(&self) -> f64 {
        (self.translation.dot(self.translation) + self.rotation.dot(self.rotation)).sqrt()
    }

    fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        )
    }
}

/// Relative threshold for rank truncation in the Moore-Penrose
/// pseudoinverse: singular values below `1e-8 * sigma_max` are dropped.
pub const PINV_RELATIVE_EPS: f64 = 1e-8;

fn pseudoinverse(j: &Matrix6<f64>) -> Matrix6<f64> {
    let svd = j.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = PINV_RELATIVE_EPS * sigma_max.max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).unwrap_or_else(|_| Matrix6::zeros())
}

/// One pseudoinverse-IK update. Applies `pinv(J) * delta` to the joint
/// angles; if any resulting angle leaves the open interval
/// (-limit, +limit), the input joints are returned unchanged
/// (all-or-nothing clamp).
///
/// `dt` is the interframe interval the displacement is applied over; it
/// scales joint velocities into the predicted displacement and must be
/// positive.
pub fn ik_step(
    arm: &ArmModel,
    joints: &JointVector,
    delta: &PoseDelta,
    dt: f64,
) -> Result<JointVector, KinematicsError> {
    assert!(dt > 0.0, "interframe interval must be positive");
    let j = jacobian(arm, joints)?;
    // Joint velocities (rad/s) times dt give the predicted displacement.
    let rates = pseudoinverse(&j) * (delta.as_vector() / dt);
    let mut next = joints.0;
    for (k, angle) in next.iter_mut().enumerate() {
        *angle += (rates[k] * dt).to_degrees();
        if !angle.is_finite() || angle.abs() >= arm.limit_deg {
            return Ok(*joints);
        }
    }
    Ok(JointVector(next))
}

/// Outcome of [`solve_to_target`]: best joints found, whether the 6D error
/// dropped below tolerance, and iterations used.
#[derive(Debug, Clone, Copy)]
pub struct IkSolution {
    pub joints: JointVector,
    pub converged: bool,
    pub iterations: usize,
}

fn pose_error(current: &Pose, target: &Pose) -> PoseDelta {
    PoseDelta {
        translation: target.position - current.position,
        rotation: target.orientation.compose(current.orientation.conjugate()).rotation_vector(),
    }
}

/// Iterates [`ik_step`] until the end-effector is within `tol` of the target
/// (6D norm over meters and radians), up to `max_iters`. Non-convergence is
/// flagged, never an error.
pub fn solve_to_target(
    arm: &ArmModel,
    joints: &JointVector,
    target: &Pose,
    tol: f64,
    max_iters: usize,
) -> Result<IkSolution, KinematicsError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut current = *joints;
    let mut err = pose_error(&forward_kinematics(arm, &current)?.end_effector, target);
    let mut err_norm = err.norm();
    // Per-iteration step cap keeps the linearization honest on long moves.
    const STEP_CAP: f64 = 0.1;
    for iter in 0..max_iters {
        if err_norm <= tol {
            return Ok(IkSolution { joints: current, converged: true, iterations: iter });
        }
        let mut cap = STEP_CAP;
        let mut advanced = false;
        for _ in 0..8 {
            let scale = (cap / err_norm).min(1.0);
            let step = PoseDelta {
                translation: err.translation * scale,
                rotation: err.rotation * scale,
            };
            let candidate = ik_step(arm, &current, &step, 1.0 / 90.0)?;
            if candidate == current {
                // Limit clamp fired; retry with a smaller step.
                cap *= 0.5;
                continue;
            }
            let cand_err =
                pose_error(&forward_kinematics(arm, &candidate)?.end_effector, target);
            let cand_norm = cand_err.norm();
            if cand_norm < err_norm {
                current = candidate;
                err = cand_err;
                err_norm = cand_norm;
                advanced = true;
                break;
            }
            cap *= 0.5;
        }
        if !advanced {
            return Ok(IkSolution { joints: current, converged: false, iterations: iter });
        }
    }
    Ok(IkSolution {
        joints: current,
        converged: err_norm <= tol,
        iterations: max_iters,
    })
}
