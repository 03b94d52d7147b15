//! The four interaction algorithms mapping participant tip motion to robot
//! (peg) motion, plus return policies.
//!
//! Robot-initiation and participant-initiation drive a preplanned
//! trajectory; temporal alignment slaves the peg's forward progress to the
//! tip's z-progress; spatiotemporal alignment mirrors the full tip position.

use crate::frames::Vec3;
use crate::trajectory::{min_jerk_eval, TrajectorySpec};

/// Tip displacement that triggers a participant-initiated start, meters.
pub const START_TRIGGER_M: f64 = 0.010;
/// Tip retreat from the robot tip that triggers the adaptive return, meters.
pub const RETURN_TRIGGER_M: f64 = 0.020;
/// Forward progress fraction at which the peg freezes ("stopped in the last
/// 3% of the distance to be covered").
pub const FREEZE_FRACTION: f64 = 0.97;
/// Mirror direction of the spatiotemporal coupling: x and y match the tip,
/// z is reversed (tip away from participant moves the peg toward them).
pub const MIRROR_DIRECTION: Vec3 = Vec3::new(1.0, 1.0, -1.0);
/// Constant downward offset of the spatiotemporal coupling, meters.
pub const VERTICAL_OFFSET_M: f64 = 0.04;
/// Movement time of the robot-initiated forward trajectory, seconds.
pub const ROBOT_INITIATION_MT: f64 = 1.0;
/// Speed multiplier of the preplanned return relative to the forward leg.
pub const RETURN_RATE: f64 = 1.5;

/// Which interaction algorithm runs a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingKind {
    RobotInitiation,
    ParticipantInitiation,
    TemporalAlignment,
    SpatiotemporalAlignment,
}

impl CouplingKind {
    pub fn label(self) -> &'static str {
        match self {
            CouplingKind::RobotInitiation => "ri",
            CouplingKind::ParticipantInitiation => "pi",
            CouplingKind::TemporalAlignment => "ta",
            CouplingKind::SpatiotemporalAlignment => "sa",
        }
    }

    /// Adaptive algorithms slave the peg to the tip frame by frame.
    pub fn is_adaptive(self) -> bool {
        matches!(self, CouplingKind::TemporalAlignment | CouplingKind::SpatiotemporalAlignment)
    }
}

/// Per-trial state of the interaction algorithm. Single writer (the engine);
/// read-only snapshots may be shared.
#[derive(Debug, Clone)]
pub struct CouplingState {
    pub kind: CouplingKind,
    /// Initial peg position.
    pub peg0: Vec3,
    /// Initial receptacle top (where the tip starts the trial).
    pub rec0: Vec3,
    /// Interaction depth: the z-plane midway between receptacle and peg.
    pub z_int: f64,
    /// Predefined final peg position.
    pub pos_int: Vec3,
    pub started: bool,
    pub frozen: bool,
    pub returning: bool,
    current: Vec3,
}

impl CouplingState {
    /// `z_int` is derived as the midpoint of the initial receptacle and peg
    /// z-coordinates.
    pub fn new(kind: CouplingKind, peg0: Vec3, rec0: Vec3, pos_int: Vec3) -> CouplingState {
        let z_int = 0.5 * (peg0.z + rec0.z);
        debug_assert!(
            (z_int - rec0.z) * (peg0.z - z_int) > 0.0,
            "interaction depth must lie strictly between receptacle and peg"
        );
        CouplingState {
            kind,
            peg0,
            rec0,
            z_int,
            pos_int,
            started: !matches!(kind, CouplingKind::ParticipantInitiation),
            frozen: false,
            returning: false,
            current: peg0,
        }
    }

    /// Current commanded peg position.
    pub fn position(&self) -> Vec3 {
        self.current
    }

    /// Tip z-progress toward the interaction depth, unclamped.
    pub fn raw_fraction(&self, tip_z: f64) -> f64 {
        (tip_z - self.rec0.z) / (self.z_int - self.rec0.z)
    }

    /// Tip z-progress clamped to [0, 1]; participant overshoot past the
    /// interaction depth cannot drive the peg beyond its final position.
    pub fn fraction(&self, tip_z: f64) -> f64 {
        self.raw_fraction(tip_z).clamp(0.0, 1.0)
    }

    /// Latches the participant-initiation trigger; returns `started`.
    pub fn check_start_trigger(&mut self, tip: Vec3, tip0: Vec3) -> bool {
        if !self.started && participant_initiation_trigger(tip, tip0) {
            self.started = true;
        }
        self.started
    }

    /// One forward update of an adaptive coupling. Updating stops (the peg
    /// freezes at its last commanded position) once the tip's raw progress
    /// fraction reaches the freeze fraction, and never resumes on the
    /// forward leg.
    pub fn step_forward(&mut self, tip: Vec3) -> Vec3 {
        debug_assert!(self.kind.is_adaptive());
        if !self.started || self.frozen {
            return self.current;
        }
        if self.raw_fraction(tip.z) >= FREEZE_FRACTION {
            self.frozen = true;
            return self.current;
        }
        self.current = match self.kind {
            CouplingKind::TemporalAlignment => temporal_alignment_pos(tip.z, self),
            CouplingKind::SpatiotemporalAlignment => spatiotemporal_alignment_pos(tip, self),
            _ => unreachable!(),
        };
        self.current
    }

    /// Marks the return leg and resumes coupled updates toward the start
    /// position, using the same equations as the forward leg.
    pub fn begin_return(&mut self) {
        self.returning = true;
        self.frozen = false;
    }

    /// One return update of an adaptive coupling.
    pub fn step_return(&mut self, tip: Vec3) -> Vec3 {
        debug_assert!(self.kind.is_adaptive() && self.returning);
        self.current = match self.kind {
            CouplingKind::TemporalAlignment => temporal_alignment_pos(tip.z, self),
            CouplingKind::SpatiotemporalAlignment => spatiotemporal_alignment_pos(tip, self),
            _ => unreachable!(),
        };
        self.current
    }
}

/// Robot-initiated forward position: minimum jerk from the initial peg
/// position to the final position over 1000 ms, starting at trial onset.
pub fn robot_initiation_pos(state: &CouplingState, t: f64) -> Vec3 {
    min_jerk_eval(state.peg0, state.pos_int, ROBOT_INITIATION_MT, t).0
}

/// True once the tip has moved 10 mm (3D) from its position at trial onset.
/// The caller latches the result; the trigger never un-fires.
pub fn participant_initiation_trigger(tip: Vec3, tip0: Vec3) -> bool {
    (tip - tip0).norm() >= START_TRIGGER_M
}

/// Temporal alignment: the peg sits at the same relative forward distance
/// from its start to the interaction depth as the tip.
pub fn temporal_alignment_pos(tip_z: f64, state: &CouplingState) -> Vec3 {
    let f = state.fraction(tip_z);
    state.peg0 + (state.pos_int - state.peg0) * f
}

/// Spatiotemporal alignment: the peg mirrors the tip position, corrected for
/// the offset between the initial peg and receptacle positions and shifted
/// 4 cm downward.
pub fn spatiotemporal_alignment_pos(tip: Vec3, state: &CouplingState) -> Vec3 {
    state.peg0 + MIRROR_DIRECTION.hadamard(tip - state.rec0) - sa_offset(tip.z, state)
}

/// The offset term of the spatiotemporal coupling.
pub fn sa_offset(tip_z: f64, state: &CouplingState) -> Vec3 {
    (state.peg0 - state.rec0) * state.fraction(tip_z) + Vec3::new(0.0, VERTICAL_OFFSET_M, 0.0)
}

/// Preplanned return position: the forward trajectory reversed in time at
/// `RETURN_RATE` times its original speed. `t_return` is seconds since the
/// return started; past the end the position clamps to the start point.
pub fn reversed_return_pos(spec: &TrajectorySpec, t_return: f64) -> Vec3 {
    spec.eval((spec.mt - RETURN_RATE * t_return).max(0.0)).0
}

/// Duration of the preplanned return leg.
pub fn return_duration(mt: f64) -> f64 {
    mt / RETURN_RATE
}

/// True once the tip has retreated at least 20 mm (3D) from the robot tip
/// after a pickup attempt.
pub fn return_trigger(tip: Vec3, robot_tip: Vec3) -> bool {
    (tip - robot_tip).norm() >= RETURN_TRIGGER_M
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::ProfileKind;
    use approx::assert_abs_diff_eq;

    fn state(kind: CouplingKind) -> CouplingState {
        let peg0 = Vec3::new(0.6, 0.32, 0.75);
        let rec0 = Vec3::new(0.6, 0.10, 0.05);
        let pos_int = peg0 + Vec3::new(0.15, 0.15, -0.35);
        CouplingState::new(kind, peg0, rec0, pos_int)
    }

    #[test]
    fn robot_initiation_endpoints_and_midpoint() {
        let s = state(CouplingKind::RobotInitiation);
        assert!((robot_initiation_pos(&s, 0.0) - s.peg0).norm() < 1e-12);
        assert!((robot_initiation_pos(&s, 1.0) - s.pos_int).norm() < 1e-12);
        let mid = robot_initiation_pos(&s, 0.5);
        let want = s.peg0 + (s.pos_int - s.peg0) * 0.5;
        assert!((mid - want).norm() < 1e-12);
    }

    #[test]
    fn participant_trigger_boundary_and_latch() {
        let tip0 = Vec3::new(0.6, 0.10, 0.05);
        assert!(!participant_initiation_trigger(tip0 + Vec3::new(0.0, 0.0, 0.0099), tip0));
        assert!(participant_initiation_trigger(tip0 + Vec3::new(0.0, 0.0, 0.010), tip0));

        let mut s = state(CouplingKind::ParticipantInitiation);
        assert!(!s.started);
        assert!(!s.check_start_trigger(tip0 + Vec3::new(0.0, 0.0, 0.0099), tip0));
        assert!(s.check_start_trigger(tip0 + Vec3::new(0.0, 0.0, 0.0101), tip0));
        // Tip returning to start does not un-latch.
        assert!(s.check_start_trigger(tip0, tip0));
    }

    #[test]
    fn temporal_alignment_fraction_endpoints() {
        let s = state(CouplingKind::TemporalAlignment);
        assert!((temporal_alignment_pos(s.rec0.z, &s) - s.peg0).norm() < 1e-12);
        assert!((temporal_alignment_pos(s.z_int, &s) - s.pos_int).norm() < 1e-12);
        let half_z = s.rec0.z + 0.5 * (s.z_int - s.rec0.z);
        let want = s.peg0 + (s.pos_int - s.peg0) * 0.5;
        assert!((temporal_alignment_pos(half_z, &s) - want).norm() < 1e-12);
    }

    #[test]
    fn temporal_alignment_clamps_overshoot() {
        let s = state(CouplingKind::TemporalAlignment);
        let beyond = s.z_int + 0.1;
        assert!((temporal_alignment_pos(beyond, &s) - s.pos_int).norm() < 1e-12);
        let behind = s.rec0.z - 0.1;
        assert!((temporal_alignment_pos(behind, &s) - s.peg0).norm() < 1e-12);
    }

    #[test]
    fn spatiotemporal_examples() {
        let s = state(CouplingKind::SpatiotemporalAlignment);
        // Zero displacement: peg0 minus the 4 cm vertical offset.
        let at_rest = spatiotemporal_alignment_pos(s.rec0, &s);
        assert!((at_rest - (s.peg0 - Vec3::new(0.0, VERTICAL_OFFSET_M, 0.0))).norm() < 1e-12);
        // Pure x displacement mirrors in x with zero z-progress.
        let tip = s.rec0 + Vec3::new(0.05, 0.0, 0.0);
        let got = spatiotemporal_alignment_pos(tip, &s);
        let want = s.peg0 + Vec3::new(0.05, -VERTICAL_OFFSET_M, 0.0);
        assert!((got - want).norm() < 1e-12);
        // Advancing the tip in z moves the peg in -z before offset terms.
        let tip_b = s.rec0 + Vec3::new(0.0, 0.0, 0.01);
        let mirrored = MIRROR_DIRECTION.hadamard(tip_b - s.rec0);
        assert_abs_diff_eq!(mirrored.z, -0.01, epsilon = 1e-15);
    }

    #[test]
    fn sa_mirror_identity() {
        let s = state(CouplingKind::SpatiotemporalAlignment);
        for k in 0..50 {
            let f = k as f64 / 49.0;
            let tip = s.rec0
                + Vec3::new(
                    0.02 * (k as f64).sin(),
                    0.03 * (k as f64).cos(),
                    f * (s.z_int - s.rec0.z),
                );
            let peg = spatiotemporal_alignment_pos(tip, &s);
            let lhs = peg - s.peg0 + sa_offset(tip.z, &s);
            let rhs = MIRROR_DIRECTION.hadamard(tip - s.rec0);
            assert!((lhs - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn forward_freeze_at_097_and_never_resumes() {
        let mut s = state(CouplingKind::TemporalAlignment);
        let span = s.z_int - s.rec0.z;
        let p_before = s.step_forward(s.rec0 + Vec3::new(0.0, 0.0, 0.9 * span));
        assert!(!s.frozen);
        // Crossing the freeze fraction stops updates at the last position.
        let p_frozen = s.step_forward(s.rec0 + Vec3::new(0.0, 0.0, 0.98 * span));
        assert!(s.frozen);
        assert_eq!(p_frozen, p_before);
        // Forward updates never resume, even if the tip retreats.
        let p_after = s.step_forward(s.rec0 + Vec3::new(0.0, 0.0, 0.5 * span));
        assert_eq!(p_after, p_frozen);
    }

    #[test]
    fn return_leg_resumes_coupling_toward_start() {
        let mut s = state(CouplingKind::TemporalAlignment);
        let span = s.z_int - s.rec0.z;
        s.step_forward(s.rec0 + Vec3::new(0.0, 0.0, 0.96 * span));
        s.step_forward(s.rec0 + Vec3::new(0.0, 0.0, 0.99 * span));
        assert!(s.frozen);
        s.begin_return();
        let p = s.step_return(s.rec0 + Vec3::new(0.0, 0.0, 0.5 * span));
        let want = s.peg0 + (s.pos_int - s.peg0) * 0.5;
        assert!((p - want).norm() < 1e-12);
        let home = s.step_return(s.rec0);
        assert!((home - s.peg0).norm() < 1e-12);
    }

    #[test]
    fn reversed_return_timing() {
        let spec = TrajectorySpec::new(
            ProfileKind::MinJerk,
            Vec3::new(0.6, 0.32, 0.75),
            Vec3::new(0.75, 0.47, 0.40),
            1.0,
            None,
            None,
        )
        .unwrap();
        // Return duration is the forward time divided by the speed factor.
        assert_abs_diff_eq!(return_duration(spec.mt), 2.0 / 3.0, epsilon = 1e-12);
        // Reversal starts at the final position and ends at the start.
        assert!((reversed_return_pos(&spec, 0.0) - spec.xe).norm() < 1e-12);
        assert!((reversed_return_pos(&spec, return_duration(spec.mt)) - spec.x0).norm() < 1e-9);
        assert!((reversed_return_pos(&spec, 10.0) - spec.x0).norm() < 1e-12);
        // The return path is the forward path's point set: each return
        // sample lies on the forward trajectory.
        for k in 0..=20 {
            let tr = return_duration(spec.mt) * k as f64 / 20.0;
            let p = reversed_return_pos(&spec, tr);
            let forward_t = (spec.mt - RETURN_RATE * tr).max(0.0);
            let q = spec.eval(forward_t).0;
            assert!((p - q).norm() < 1e-12);
        }
    }

    #[test]
    fn retreat_trigger_boundary() {
        let robot_tip = Vec3::new(0.6, 0.4, 0.4);
        assert!(!return_trigger(robot_tip + Vec3::new(0.0, 0.0, -0.019), robot_tip));
        assert!(return_trigger(robot_tip + Vec3::new(0.0, 0.0, -0.020), robot_tip));
    }

    #[test]
    fn ta_synchrony_invariant() {
        // On every non-frozen frame the peg's z-progress fraction equals the
        // clamped tip fraction.
        let mut s = state(CouplingKind::TemporalAlignment);
        let span = s.z_int - s.rec0.z;
        for k in 0..200 {
            let f = -0.1 + 1.2 * k as f64 / 199.0;
            let tip = s.rec0 + Vec3::new(0.01, -0.02, f * span);
            let was_frozen = s.frozen;
            let peg = s.step_forward(tip);
            if !was_frozen && !s.frozen {
                let peg_fraction = (peg.z - s.peg0.z) / (s.pos_int.z - s.peg0.z);
                assert!((peg_fraction - s.fraction(tip.z)).abs() < 1e-9);
            }
            if f >= FREEZE_FRACTION {
                assert!(s.frozen);
            }
        }
    }
}
