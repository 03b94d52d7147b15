//! Fixed-step (90 Hz) trial state machine: pre-trial hold, trial onset beep,
//! magnetic-snap pickup, drop-off, dwell/return, and per-frame logging.
//!
//! The commanded peg trajectory is authoritative; the arm follows it with
//! per-frame IK. One engine instance runs one trial; distinct trials are
//! independent and may run in parallel.

use crate::actor::{Actor, ActorPolicy, WorldSnapshot};
use crate::coupling::{
    return_duration, return_trigger, reversed_return_pos, CouplingKind, CouplingState,
};
use crate::frames::{axis_angle_between, Axis, Pose, UnitQuat, Vec3};
use crate::kinematics::{
    apply_elevation, forward_kinematics, solve_to_target, ArmModel, ElbowElevation, JointVector,
    KinematicsError,
};
use crate::trajectory::{ProfileKind, RotationPlan, TrajectoryError, TrajectorySpec};
use thiserror::Error;

/// Native simulation rate, matching the analysis resampling target.
pub const FRAME_RATE_HZ: f64 = 90.0;
/// Fixed step.
pub const DT: f64 = 1.0 / FRAME_RATE_HZ;
/// Magnetic-snap distance between tip magnet and peg top, meters.
pub const PICKUP_DISTANCE_M: f64 = 0.007;
/// Orientation criterion on both pertinent cardinal axes, degrees.
pub const ORIENTATION_LIMIT_DEG: f64 = 10.0;
/// Pre-trial hold radius around the receptacle top, meters.
pub const PRETRIAL_RADIUS_M: f64 = 0.007;
/// Consecutive pre-trial hold duration, seconds.
pub const PRETRIAL_HOLD_S: f64 = 0.200;
/// Pre-trial hold duration in whole frames.
pub const PRETRIAL_HOLD_FRAMES: usize = (PRETRIAL_HOLD_S * FRAME_RATE_HZ) as usize;
/// Drop-off distance between peg center and receptacle top, meters.
pub const DROPOFF_DISTANCE_M: f64 = 0.007;
/// Dwell at the final location before an unattended return, seconds.
pub const DWELL_S: f64 = 0.550;
/// "Robot reached its starting position" tolerance, meters.
pub const ROBOT_HOME_TOL_M: f64 = 0.005;
/// Default per-trial watchdog, seconds; a stalled trial is flagged and ends.
pub const DEFAULT_WATCHDOG_S: f64 = 10.0;
/// Half height of the cylindrical peg: top = center + R*(0, h, 0), meters.
pub const PEG_HALF_HEIGHT_M: f64 = 0.05;
/// Forward displacement of the handover, meters (peg moves toward the
/// participant, -z).
pub const FORWARD_DISTANCE_M: f64 = 0.35;
/// Receptacle top height above the table surface, meters.
pub const RECEPTACLE_HEIGHT_M: f64 = 0.10;
/// z-gap between the initial peg and the receptacle top, meters.
pub const RECEPTACLE_GAP_Z_M: f64 = 0.70;
/// IK tracking tolerance (6D norm) per frame.
pub const IK_TRACK_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("scene setup failed: {0}")]
    SceneSetup(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

/// Experimental protocol states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolState {
    Idle,
    SetScene,
    PreTrial,
    Trial,
    SaveTrialData,
}

impl ProtocolState {
    pub fn label(self) -> &'static str {
        match self {
            ProtocolState::Idle => "idle",
            ProtocolState::SetScene => "set_scene",
            ProtocolState::PreTrial => "pre_trial",
            ProtocolState::Trial => "trial",
            ProtocolState::SaveTrialData => "save_trial_data",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolState> {
        Some(match s {
            "idle" => ProtocolState::Idle,
            "set_scene" => ProtocolState::SetScene,
            "pre_trial" => ProtocolState::PreTrial,
            "trial" => ProtocolState::Trial,
            "save_trial_data" => ProtocolState::SaveTrialData,
            _ => return None,
        })
    }

    /// Allowed transitions of the experimental state flow.
    pub fn can_transition_to(self, next: ProtocolState) -> bool {
        use ProtocolState::*;
        matches!(
            (self, next),
            (Idle, SetScene)
                | (SetScene, PreTrial)
                | (PreTrial, Trial)
                | (Trial, SaveTrialData)
                | (SaveTrialData, SetScene)
                | (SaveTrialData, Idle)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PegHolder {
    Robot,
    Grabber,
}

impl PegHolder {
    pub fn label(self) -> &'static str {
        match self {
            PegHolder::Robot => "robot",
            PegHolder::Grabber => "grabber",
        }
    }

    pub fn parse(s: &str) -> Option<PegHolder> {
        match s {
            "robot" => Some(PegHolder::Robot),
            "grabber" => Some(PegHolder::Grabber),
            _ => None,
        }
    }
}

/// Per-frame protocol flags, stored as a bitmask in the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameFlags(pub u16);

impl FrameFlags {
    pub const STARTED: u16 = 1;
    pub const FROZEN: u16 = 2;
    pub const RETURNING: u16 = 4;
    pub const BEEPED: u16 = 8;
    pub const IK_MISS: u16 = 16;
    pub const WATCHDOG: u16 = 32;

    pub fn has(self, bit: u16) -> bool {
        self.0 & bit != 0
    }

    fn set(&mut self, bit: u16, on: bool) {
        if on {
            self.0 |= bit;
        } else {
            self.0 &= !bit;
        }
    }
}

/// One 90 Hz sample of all object poses plus protocol state flags; the unit
/// of logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    /// Seconds since trial onset (negative before the beep).
    pub t: f64,
    pub state: ProtocolState,
    pub tip: Pose,
    pub peg: Pose,
    pub joints: JointVector,
    pub holder: PegHolder,
    pub flags: FrameFlags,
}

impl FrameRecord {
    pub const CSV_HEADER: &'static str = "t,state,tip_x,tip_y,tip_z,tip_qw,tip_qx,tip_qy,tip_qz,peg_x,peg_y,peg_z,peg_qw,peg_qx,peg_qy,peg_qz,j0,j1,j2,j3,j4,j5,holder,flags";

    pub fn to_csv_row(&self) -> String {
        let p = &self.tip;
        let g = &self.peg;
        let j = &self.joints.0;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.state.label(),
            p.position.x,
            p.position.y,
            p.position.z,
            p.orientation.w,
            p.orientation.x,
            p.orientation.y,
            p.orientation.z,
            g.position.x,
            g.position.y,
            g.position.z,
            g.orientation.w,
            g.orientation.x,
            g.orientation.y,
            g.orientation.z,
            j[0],
            j[1],
            j[2],
            j[3],
            j[4],
            j[5],
            self.holder.label(),
            self.flags.0,
        )
    }

    /// Parses a complete frame-log CSV (header plus rows). Never panics on
    /// malformed input; every defect maps to a line-numbered error.
    pub fn parse_csv(src: &str, path_label: &str) -> Result<Vec<FrameRecord>, EngineError> {
        let err = |line: usize, msg: String| EngineError::Parse {
            path: path_label.to_string(),
            line,
            msg,
        };
        let mut lines = src.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == Self::CSV_HEADER => {}
            Some((_, h)) => return Err(err(1, format!("unexpected header {h:?}"))),
            None => return Err(err(1, "empty file".to_string())),
        }
        let mut out = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 24 {
                return Err(err(idx + 1, format!("expected 24 fields, found {}", f.len())));
            }
            let num = |k: usize| -> Result<f64, EngineError> {
                let v: f64 = f[k]
                    .parse()
                    .map_err(|e| err(idx + 1, format!("field {}: {e}", k + 1)))?;
                if !v.is_finite() {
                    return Err(err(idx + 1, format!("field {} is not finite", k + 1)));
                }
                Ok(v)
            };
            let state = ProtocolState::parse(f[1])
                .ok_or_else(|| err(idx + 1, format!("unknown state {:?}", f[1])))?;
            let holder = PegHolder::parse(f[22])
                .ok_or_else(|| err(idx + 1, format!("unknown holder {:?}", f[22])))?;
            let flags: u16 = f[23]
                .parse()
                .map_err(|e| err(idx + 1, format!("flags: {e}")))?;
            let tip_q = UnitQuat::new(num(5)?, num(6)?, num(7)?, num(8)?)
                .ok_or_else(|| err(idx + 1, "tip quaternion has zero norm".to_string()))?;
            let peg_q = UnitQuat::new(num(12)?, num(13)?, num(14)?, num(15)?)
                .ok_or_else(|| err(idx + 1, "peg quaternion has zero norm".to_string()))?;
            out.push(FrameRecord {
                t: num(0)?,
                state,
                tip: Pose::new(Vec3::new(num(2)?, num(3)?, num(4)?), tip_q),
                peg: Pose::new(Vec3::new(num(9)?, num(10)?, num(11)?), peg_q),
                joints: JointVector::new([num(16)?, num(17)?, num(18)?, num(19)?, num(20)?, num(21)?]),
                holder,
                flags: FrameFlags(flags),
            });
        }
        Ok(out)
    }
}

/// Trial milestones, seconds relative to trial onset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrialEvents {
    pub onset: f64,
    pub robot_start: Option<f64>,
    pub robot_arrival: Option<f64>,
    pub pickup: Option<f64>,
    pub robot_return_start: Option<f64>,
    pub dropoff: Option<f64>,
    pub success: bool,
    pub watchdog: bool,
    /// Diagnostic: when the synthetic participant scripted its pickup reach.
    pub actor_reach_onset: Option<f64>,
    pub ik_missed_frames: usize,
}

/// Fixed landmarks of a trial's scene: arm (elevation applied), solved home
/// posture, initial peg and receptacle positions, interaction depth.
#[derive(Debug, Clone)]
pub struct SceneGeometry {
    pub arm: ArmModel,
    pub home_joints: JointVector,
    pub peg0: Vec3,
    pub rec0: Vec3,
    pub z_int: f64,
}

impl SceneGeometry {
    /// The initial peg position is wherever the low-elevation arm presents
    /// the peg at the default posture, so it is identical across elevation
    /// conditions; elevated arms solve their home posture by IK.
    pub fn new(base_arm: &ArmModel, elevation: ElbowElevation) -> Result<SceneGeometry, EngineError> {
        let low = apply_elevation(base_arm, ElbowElevation::Low);
        let posture = JointVector::default_posture();
        let peg0 = forward_kinematics(&low, &posture)?.end_effector.position;
        let rec0 = Vec3::new(peg0.x, RECEPTACLE_HEIGHT_M, peg0.z - RECEPTACLE_GAP_Z_M);
        let arm = apply_elevation(base_arm, elevation);
        let target = Pose::from_position(peg0);
        // Joint 0 shares the abduction axis, so the compensated posture is
        // the exact solution for an upright peg at the shared start point;
        // seeding there makes the solve immediate for every elevation.
        let mut seed = posture;
        seed.0[0] -= elevation.angle_deg();
        let sol = solve_to_target(&arm, &seed, &target, IK_TRACK_TOL, 400)?;
        if !sol.converged {
            return Err(EngineError::SceneSetup(format!(
                "home IK did not converge for elevation {:?}",
                elevation
            )));
        }
        Ok(SceneGeometry { arm, home_joints: sol.joints, peg0, rec0, z_int: 0.5 * (peg0.z + rec0.z) })
    }

    /// Peg top for a commanded peg pose.
    pub fn peg_top(peg: &Pose) -> Vec3 {
        peg.position + peg.orientation.rotate(Vec3::new(0.0, PEG_HALF_HEIGHT_M, 0.0))
    }
}

/// Everything that varies between trials.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub coupling: CouplingKind,
    pub profile: ProfileKind,
    /// Final-position grid offset (x, y) relative to the initial peg
    /// position; the z displacement is the forward distance plus jitter.
    pub grid_offset: (f64, f64),
    pub depth_jitter: f64,
    pub forward_mt: f64,
    pub rotation: Option<RotationPlan>,
    pub playback: Option<TrajectorySpec>,
    /// Dwell before an unattended return; `None` waits indefinitely.
    pub dwell_s: Option<f64>,
    pub orientation_criterion: bool,
    pub watchdog_s: f64,
}

impl TrialSetup {
    pub fn pos_int(&self, scene: &SceneGeometry) -> Vec3 {
        scene.peg0
            + Vec3::new(
                self.grid_offset.0,
                self.grid_offset.1,
                -FORWARD_DISTANCE_M + self.depth_jitter,
            )
    }
}

/// Advances a pre-trial hold clock by one frame; returns true (armed) once
/// the tip has stayed within the hold radius for the full consecutive hold.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoldClock {
    run: usize,
}

impl HoldClock {
    pub fn frames_held(&self) -> usize {
        self.run
    }

    pub fn tick(&mut self, tip: Vec3, receptacle_top: Vec3) -> bool {
        if (tip - receptacle_top).norm() <= PRETRIAL_RADIUS_M {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= PRETRIAL_HOLD_FRAMES
    }
}

/// Magnetic-snap criterion: 7 mm between tip magnet and peg top, plus (in
/// the extended mode) at most 10 degrees between the images of both
/// pertinent cardinal axes of the peg (its long axis and the depth axis).
pub fn pickup_check(tip: &Pose, peg: &Pose, orientation_criterion: bool) -> bool {
    let within = (tip.position - SceneGeometry::peg_top(peg)).norm() <= PICKUP_DISTANCE_M;
    if !within {
        return false;
    }
    if orientation_criterion {
        let dy = axis_angle_between(tip.orientation, peg.orientation, Axis::Y);
        let dz = axis_angle_between(tip.orientation, peg.orientation, Axis::Z);
        if dy > ORIENTATION_LIMIT_DEG || dz > ORIENTATION_LIMIT_DEG {
            return false;
        }
    }
    true
}

/// Drop-off criterion: peg center within 7 mm of the receptacle top center.
pub fn dropoff_check(peg_center: Vec3, receptacle_top: Vec3) -> bool {
    (peg_center - receptacle_top).norm() <= DROPOFF_DISTANCE_M
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RobotPhase {
    /// Participant-initiation: parked until the 10 mm trigger.
    WaitTrigger,
    Forward { start: f64 },
    /// Arrived with a dwell limit running.
    Dwell { arrived: f64 },
    /// Arrived, waiting indefinitely (or for the adaptive retreat trigger).
    Holding,
    Returning { start: f64 },
}

/// A finished trial: the frame log and its event summary.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub frames: Vec<FrameRecord>,
    pub events: TrialEvents,
}

struct PendingFrame {
    state: ProtocolState,
    tip: Pose,
    peg: Pose,
    joints: JointVector,
    holder: PegHolder,
    flags: FrameFlags,
}

/// Drives one trial: actor, coupling, trajectory, IK, logging.
pub struct TrialEngine {
    scene: SceneGeometry,
    setup: TrialSetup,
    traj: TrajectorySpec,
    coupling: CouplingState,
    actor: Actor,
    delay_frames: usize,

    state: ProtocolState,
    phase: RobotPhase,
    holder: PegHolder,
    joints: JointVector,
    ee_cmd: Pose,
    peg: Pose,
    snap_offset: Option<(Vec3, UnitQuat)>,
    peg_released: Option<Pose>,
    return_orientation: UnitQuat,
    robot_home: bool,
    hold: HoldClock,
    events: TrialEvents,
    watchdog_fired: bool,

    frames: Vec<PendingFrame>,
    history: Vec<WorldSnapshot>,
    onset_idx: Option<usize>,
    include_idle: bool,
    done: bool,
}

impl TrialEngine {
    pub fn new(
        scene: SceneGeometry,
        setup: TrialSetup,
        policy: ActorPolicy,
        actor_seed: u64,
        include_idle: bool,
    ) -> Result<TrialEngine, EngineError> {
        let pos_int = setup.pos_int(&scene);
        let traj = match &setup.playback {
            Some(spec) => spec.clone(),
            None => TrajectorySpec::new(
                setup.profile,
                scene.peg0,
                pos_int,
                setup.forward_mt,
                setup.rotation,
                None,
            )?,
        };
        let coupling = CouplingState::new(setup.coupling, scene.peg0, scene.rec0, pos_int);
        let actor = Actor::new(policy, scene.rec0, scene.z_int, actor_seed);
        let delay_frames = policy.delay_frames();
        let home = scene.home_joints;
        let peg0 = scene.peg0;
        Ok(TrialEngine {
            scene,
            setup,
            traj,
            coupling,
            actor,
            delay_frames,
            state: if include_idle { ProtocolState::Idle } else { ProtocolState::SetScene },
            phase: RobotPhase::WaitTrigger,
            holder: PegHolder::Robot,
            joints: home,
            ee_cmd: Pose::from_position(peg0),
            peg: Pose::from_position(peg0),
            snap_offset: None,
            peg_released: None,
            return_orientation: UnitQuat::IDENTITY,
            robot_home: false,
            hold: HoldClock::default(),
            events: TrialEvents::default(),
            watchdog_fired: false,
            frames: Vec::with_capacity(512),
            history: Vec::with_capacity(512),
            onset_idx: None,
            include_idle,
            done: false,
        })
    }

    pub fn scene(&self) -> &SceneGeometry {
        &self.scene
    }

    /// Commanded peg orientation at trial time `t` (before any snap).
    fn peg_orientation(&self, t: f64) -> UnitQuat {
        if self.setup.coupling.is_adaptive() {
            UnitQuat::IDENTITY
        } else {
            self.traj.orientation(t)
        }
    }

    fn observation(&self) -> Option<&WorldSnapshot> {
        let idx = self.frames.len();
        if idx < self.delay_frames {
            None
        } else {
            self.history.get(idx - self.delay_frames)
        }
    }

    fn track_ik(&mut self, target: &Pose) -> bool {
        match solve_to_target(&self.scene.arm, &self.joints, target, IK_TRACK_TOL, 40) {
            Ok(sol) if sol.converged => {
                self.joints = sol.joints;
                true
            }
            _ => false,
        }
    }

    fn push_frame(&mut self, tip: Pose, flags: FrameFlags, t_pred: f64) {
        let returning = matches!(self.phase, RobotPhase::Returning { .. });
        self.history.push(WorldSnapshot {
            t: t_pred,
            peg: self.peg,
            peg_top: SceneGeometry::peg_top(&self.peg),
            robot_tip: SceneGeometry::peg_top(&self.ee_cmd),
            holder_is_robot: self.holder == PegHolder::Robot,
            robot_returning: returning || self.events.robot_return_start.is_some(),
        });
        self.frames.push(PendingFrame {
            state: self.state,
            tip,
            peg: self.peg,
            joints: self.joints,
            holder: self.holder,
            flags,
        });
    }

    /// Runs the whole trial and returns the frame log plus events.
    pub fn run(mut self) -> Result<TrialRun, EngineError> {
        // Idle: the tip rests on the start position; one bookkeeping frame.
        if self.include_idle {
            let tip = Pose::from_position(self.scene.rec0);
            self.peg = Pose {
                position: self.scene.peg0,
                orientation: self.peg_orientation(-(PRETRIAL_HOLD_FRAMES as f64 + 2.0) * DT),
            };
            self.ee_cmd = self.peg;
            self.push_frame(tip, FrameFlags::default(), f64::NAN);
            self.state = ProtocolState::SetScene;
        }

        // Set Scene: robot positioned, objects activated.
        {
            let t_pred = -((PRETRIAL_HOLD_FRAMES + 1) as f64) * DT;
            let tip = Pose::from_position(self.scene.rec0);
            self.peg = Pose { position: self.scene.peg0, orientation: self.peg_orientation(t_pred) };
            self.ee_cmd = self.peg;
            let target = self.ee_cmd;
            self.track_ik(&target);
            self.push_frame(tip, FrameFlags::default(), t_pred);
            self.state = ProtocolState::PreTrial;
        }

        // Pre-trial: wait for the consecutive hold, then beep.
        let mut guard = 0usize;
        loop {
            let remaining = PRETRIAL_HOLD_FRAMES.saturating_sub(self.hold.frames_held());
            let t_pred = -(remaining as f64) * DT;
            let obs_tip = {
                let obs = self.observation().copied();
                self.actor.act(obs.as_ref(), t_pred)
            };
            self.peg = Pose { position: self.scene.peg0, orientation: self.peg_orientation(t_pred) };
            self.ee_cmd = self.peg;
            let target = self.ee_cmd;
            let ik_ok = self.track_ik(&target);
            let armed = self.hold.tick(obs_tip.position, self.scene.rec0);
            let mut flags = FrameFlags::default();
            flags.set(FrameFlags::IK_MISS, !ik_ok);
            self.push_frame(obs_tip, flags, t_pred);
            if armed {
                // Beep: trial onset is the next frame.
                self.state = ProtocolState::Trial;
                break;
            }
            guard += 1;
            if guard > 20_000 {
                return Err(EngineError::SceneSetup(
                    "pre-trial hold never satisfied (actor misconfigured)".to_string(),
                ));
            }
        }
        self.onset_idx = Some(self.frames.len());

        // Trial frames.
        let onset_idx = self.frames.len();
        while !self.done {
            let t = (self.frames.len() - onset_idx) as f64 * DT;
            self.step_trial(t);
            if self.frames.len() - onset_idx > 30_000 {
                return Err(EngineError::SceneSetup("trial failed to terminate".to_string()));
            }
        }

        // Save Trial Data: one bookkeeping frame.
        self.state = ProtocolState::SaveTrialData;
        let t_last = (self.frames.len() - onset_idx) as f64 * DT;
        let tip = self.frames.last().map(|f| f.tip).unwrap();
        let mut flags = self.frames.last().map(|f| f.flags).unwrap();
        flags.set(FrameFlags::WATCHDOG, self.watchdog_fired);
        self.push_frame(tip, flags, t_last);

        // Assign final timestamps relative to onset.
        let onset = self.onset_idx.unwrap() as i64;
        let frames: Vec<FrameRecord> = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| FrameRecord {
                t: (i as i64 - onset) as f64 * DT,
                state: f.state,
                tip: f.tip,
                peg: f.peg,
                joints: f.joints,
                holder: f.holder,
                flags: f.flags,
            })
            .collect();
        let mut events = self.events;
        events.actor_reach_onset = self.actor.scripted_onset();
        events.success = events.pickup.is_some();
        events.watchdog = self.watchdog_fired;
        Ok(TrialRun { frames, events })
    }

    fn step_trial(&mut self, t: f64) {
        let obs = self.observation().copied();
        let tip = self.actor.act(obs.as_ref(), t);

        // Robot start conditions.
        if self.events.robot_start.is_none() {
            let started = match self.setup.coupling {
                CouplingKind::ParticipantInitiation => {
                    self.coupling.check_start_trigger(tip.position, self.scene.rec0)
                }
                _ => true,
            };
            if started {
                self.events.robot_start = Some(t);
                if !self.setup.coupling.is_adaptive() {
                    self.phase = RobotPhase::Forward { start: t };
                } else {
                    self.phase = RobotPhase::Forward { start: t };
                }
            }
        }

        // Robot command update.
        match self.phase {
            RobotPhase::WaitTrigger => {
                self.ee_cmd = Pose {
                    position: self.scene.peg0,
                    orientation: self.peg_orientation(t),
                };
            }
            RobotPhase::Forward { start } => {
                if self.setup.coupling.is_adaptive() {
                    let pos = self.coupling.step_forward(tip.position);
                    self.ee_cmd = Pose { position: pos, orientation: UnitQuat::IDENTITY };
                    if self.coupling.frozen {
                        self.events.robot_arrival = Some(t);
                        self.phase = RobotPhase::Holding;
                    }
                } else {
                    let tm = t - start;
                    let (pos, _) = self.traj.eval(tm);
                    self.ee_cmd = Pose { position: pos, orientation: self.traj.orientation(tm) };
                    if tm >= self.traj.mt {
                        self.events.robot_arrival = Some(t);
                        self.phase = match self.setup.dwell_s {
                            Some(_) => RobotPhase::Dwell { arrived: t },
                            None => RobotPhase::Holding,
                        };
                    }
                }
            }
            RobotPhase::Dwell { .. } | RobotPhase::Holding => {
                // Robot holds its pose; transitions handled below.
            }
            RobotPhase::Returning { start } => {
                if self.setup.coupling.is_adaptive() {
                    let pos = self.coupling.step_return(tip.position);
                    self.ee_cmd = Pose { position: pos, orientation: self.return_orientation };
                } else {
                    let pos = reversed_return_pos(&self.traj, t - start);
                    self.ee_cmd = Pose { position: pos, orientation: self.return_orientation };
                }
                if !self.robot_home
                    && (self.ee_cmd.position - self.scene.peg0).norm() <= ROBOT_HOME_TOL_M
                {
                    self.robot_home = true;
                }
            }
        }

        // Peg pose follows the holder.
        match self.holder {
            PegHolder::Robot => {
                self.peg = self.ee_cmd;
            }
            PegHolder::Grabber => {
                if let Some(frozen) = self.peg_released {
                    self.peg = frozen;
                } else if let Some((off, rel)) = self.snap_offset {
                    self.peg = Pose {
                        position: tip.position + tip.orientation.rotate(off),
                        orientation: tip.orientation.compose(rel),
                    };
                }
            }
        }

        // Magnetic snap.
        if self.holder == PegHolder::Robot
            && !matches!(self.phase, RobotPhase::Returning { .. })
            && pickup_check(&tip, &self.peg, self.setup.orientation_criterion)
        {
            self.events.pickup = Some(t);
            self.holder = PegHolder::Grabber;
            // The snap pulls the peg top onto the magnet; orientation is
            // held as-is and the peg rides rigidly in the tip frame.
            let center = tip.position
                - self.peg.orientation.rotate(Vec3::new(0.0, PEG_HALF_HEIGHT_M, 0.0));
            let inv = tip.orientation.conjugate();
            let off = inv.rotate(center - tip.position);
            let rel = inv.compose(self.peg.orientation);
            self.snap_offset = Some((off, rel));
            self.peg = Pose { position: center, orientation: self.peg.orientation };
            // Preplanned modes return immediately on pickup.
            if !self.setup.coupling.is_adaptive() {
                self.return_orientation = self.ee_cmd.orientation;
                self.events.robot_return_start = Some(t);
                self.phase = RobotPhase::Returning { start: t };
            }
        }

        // Dwell expiry and adaptive retreat trigger.
        match self.phase {
            RobotPhase::Dwell { arrived } => {
                if let Some(dwell) = self.setup.dwell_s {
                    if self.events.pickup.is_none() && t - arrived > dwell {
                        self.return_orientation = self.ee_cmd.orientation;
                        self.events.robot_return_start = Some(t);
                        self.phase = RobotPhase::Returning { start: t };
                    }
                }
            }
            RobotPhase::Holding => {
                if self.setup.coupling.is_adaptive() {
                    if self.events.pickup.is_some()
                        && return_trigger(tip.position, SceneGeometry::peg_top(&self.ee_cmd))
                    {
                        self.return_orientation = self.ee_cmd.orientation;
                        self.events.robot_return_start = Some(t);
                        self.coupling.begin_return();
                        self.phase = RobotPhase::Returning { start: t };
                    }
                }
                // Preplanned holding exits via the snap handler above.
            }
            _ => {}
        }

        // Drop-off: the peg seats in the receptacle and the magnet releases.
        if self.holder == PegHolder::Grabber
            && self.peg_released.is_none()
            && dropoff_check(self.peg.position, self.scene.rec0)
        {
            self.events.dropoff = Some(t);
            self.peg_released = Some(self.peg);
        }

        // IK tracks the commanded end-effector.
        let target = self.ee_cmd;
        let ik_ok = self.track_ik(&target);
        if !ik_ok {
            self.events.ik_missed_frames += 1;
        }

        // Watchdog.
        if t >= self.setup.watchdog_s {
            self.watchdog_fired = true;
        }

        let mut flags = FrameFlags::default();
        flags.set(FrameFlags::STARTED, self.events.robot_start.is_some());
        flags.set(FrameFlags::FROZEN, self.coupling.frozen);
        flags.set(
            FrameFlags::RETURNING,
            matches!(self.phase, RobotPhase::Returning { .. }),
        );
        flags.set(FrameFlags::BEEPED, true);
        flags.set(FrameFlags::IK_MISS, !ik_ok);
        flags.set(FrameFlags::WATCHDOG, self.watchdog_fired);
        self.push_frame(tip, flags, t);

        // Trial end: the robot has completed a return and the magnet is
        // back within the receptacle radius.
        let tip_home = (tip.position - self.scene.rec0).norm() <= DROPOFF_DISTANCE_M;
        let return_finished = self.events.robot_return_start.is_some() && self.robot_home;
        if (return_finished && tip_home) || self.watchdog_fired {
            self.done = true;
        }
    }
}
