//! Synthetic participant models producing grabber-tip motion so the full
//! protocol runs without humans.
//!
//! All actors hold the tip at the receptacle top through the pre-trial
//! phase, then move in minimum-jerk segments. They see the world through a
//! visuomotor delay: the engine hands them the world state from
//! `t - delay`. Reach endpoint noise applies to the pickup reach only; the
//! drop-off placement is exact, so trials terminate deterministically.

use crate::frames::{Pose, UnitQuat, Vec3};
use crate::sigproc::ANALYSIS_RATE_HZ;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Plausible human tip speed bound, m/s; actor output never exceeds it
/// between frames.
pub const SPEED_BOUND_M_S: f64 = 2.0;

/// Peg displacement from its start that counts as "the robot has presented
/// something" for the Waiter.
const PEG_MOVED_THRESHOLD_M: f64 = 0.01;
/// Per-frame peg displacement below which a frame counts as stationary.
const STATIONARY_STEP_M: f64 = 1e-5;
/// Consecutive stationary observed frames before the Waiter commits.
const STATIONARY_FRAMES: usize = 3;
/// Time constant of the corrective decay of reach endpoint noise, seconds.
const NOISE_DECAY_S: f64 = 0.3;
/// Leader head start: the forward profile is evaluated this far into its
/// time course at onset (reshaped so the position still starts at zero),
/// giving the eager nonzero launch speed that trips the 10 mm trigger
/// within three frames.
const LEADER_HEAD_START_S: f64 = 0.2;
/// Movement time of the post-release settle reach to the receptacle.
const SETTLE_MT_S: f64 = 0.35;
/// Movement time of the Leader's second-phase homing reach.
const HOMING_MT_S: f64 = 0.4;

#[derive(Debug, Error)]
pub enum ActorError {
    #[error("visuomotor delay {0} s outside [0.05, 0.5]")]
    BadDelay(f64),
    #[error("noise sd must be non-negative, got {0}")]
    BadNoise(f64),
    #[error("reach movement time must be positive, got {0}")]
    BadReachTime(f64),
}

/// What the actor can see, delayed by its visuomotor latency.
#[derive(Debug, Clone, Copy)]
pub struct WorldSnapshot {
    /// Seconds since trial onset of the observed state.
    pub t: f64,
    pub peg: Pose,
    pub peg_top: Vec3,
    /// End-effector tip of the robot (where the peg top attaches).
    pub robot_tip: Vec3,
    pub holder_is_robot: bool,
    pub robot_returning: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActorKind {
    /// Waits for the peg to be presented and come to rest, then reaches.
    Waiter,
    /// Reaches from trial onset, continuously re-aiming at the delayed
    /// observed peg top.
    Tracker,
    /// Launches toward the interaction depth at onset (exercises the
    /// participant-initiation and alignment couplings), then homes in.
    Leader,
}

impl ActorKind {
    pub fn label(self) -> &'static str {
        match self {
            ActorKind::Waiter => "waiter",
            ActorKind::Tracker => "tracker",
            ActorKind::Leader => "leader",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ActorPolicy {
    pub kind: ActorKind,
    /// Visuomotor delay in seconds (typical arm movements: 0.1 to 0.2).
    pub visuomotor_delay_s: f64,
    /// Movement time of the main reach segments.
    pub reach_mt: f64,
    /// Standard deviation of pickup-reach endpoint noise, meters per axis.
    pub noise_sd_m: f64,
}

impl ActorPolicy {
    pub fn new(kind: ActorKind, delay: f64, reach_mt: f64, noise_sd: f64) -> Result<ActorPolicy, ActorError> {
        if !(0.05..=0.5).contains(&delay) {
            return Err(ActorError::BadDelay(delay));
        }
        if !(noise_sd >= 0.0) {
            return Err(ActorError::BadNoise(noise_sd));
        }
        if !(reach_mt > 0.0) {
            return Err(ActorError::BadReachTime(reach_mt));
        }
        Ok(ActorPolicy { kind, visuomotor_delay_s: delay, reach_mt, noise_sd_m: noise_sd })
    }

    pub fn with_kind(kind: ActorKind) -> ActorPolicy {
        ActorPolicy { kind, visuomotor_delay_s: 0.150, reach_mt: 0.8, noise_sd_m: 0.0 }
    }

    /// Observation delay in whole frames at the engine rate.
    pub fn delay_frames(&self) -> usize {
        (self.visuomotor_delay_s * ANALYSIS_RATE_HZ).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TargetSpec {
    Fixed(Vec3),
    /// Re-aim every frame at the delayed observed peg top.
    PegTop,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    mt: f64,
    from: Vec3,
    from_orientation: UnitQuat,
    target: TargetSpec,
    noise: Vec3,
    /// Fraction of `mt` the profile is advanced at the segment start; the
    /// shape is renormalized so the position still begins at `from`.
    head_fraction: f64,
    /// Slerp the tip orientation toward the observed peg orientation.
    match_orientation: bool,
}

impl Segment {
    fn shape(tau: f64) -> f64 {
        let t = tau.clamp(0.0, 1.0);
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }

    fn progress(&self, t: f64) -> f64 {
        let tau = (t - self.t0) / self.mt + self.head_fraction;
        let s0 = Self::shape(self.head_fraction);
        ((Self::shape(tau) - s0) / (1.0 - s0)).clamp(0.0, 1.0)
    }

    fn complete(&self, t: f64) -> bool {
        (t - self.t0) / self.mt + self.head_fraction >= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Hold,
    /// Main forward reach (Waiter reach, Tracker track, Leader launch).
    Forward,
    /// Leader second phase: homing to the peg top.
    Homing,
    /// Carrying the peg to the receptacle.
    Dropoff,
    /// Post-release settle back onto the receptacle top.
    Settle,
    /// Robot left without a pickup; going back empty-handed.
    GiveUp,
}

/// One synthetic participant, stepped by the engine once per frame.
#[derive(Debug, Clone)]
pub struct Actor {
    policy: ActorPolicy,
    rec0: Vec3,
    z_int: f64,
    rng: ChaCha12Rng,
    phase: Phase,
    segment: Option<Segment>,
    tip: Pose,
    first_peg: Option<Vec3>,
    prev_peg: Option<Vec3>,
    stationary_run: usize,
    peg_moved: bool,
    reach_onset: Option<f64>,
    last_obs_peg_top: Vec3,
    last_obs_peg_orientation: UnitQuat,
}

impl Actor {
    /// `rec0` is the receptacle top (the hold position); `z_int` the
    /// interaction depth the Leader launches toward.
    pub fn new(policy: ActorPolicy, rec0: Vec3, z_int: f64, seed: u64) -> Actor {
        Actor {
            policy,
            rec0,
            z_int,
            rng: ChaCha12Rng::seed_from_u64(seed),
            phase: Phase::Hold,
            segment: None,
            tip: Pose::from_position(rec0),
            first_peg: None,
            prev_peg: None,
            stationary_run: 0,
            peg_moved: false,
            reach_onset: None,
            last_obs_peg_top: rec0,
            last_obs_peg_orientation: UnitQuat::IDENTITY,
        }
    }

    pub fn policy(&self) -> &ActorPolicy {
        &self.policy
    }

    /// Time the forward pickup reach was scripted to start, once known.
    pub fn scripted_onset(&self) -> Option<f64> {
        self.reach_onset
    }

    fn draw_noise(&mut self) -> Vec3 {
        let sd = self.policy.noise_sd_m;
        if sd == 0.0 {
            return Vec3::ZERO;
        }
        // Box-Muller pairs from a seeded stream.
        let mut normal = || {
            let u1: f64 = self.rng.random::<f64>().max(1e-12);
            let u2: f64 = self.rng.random::<f64>();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        Vec3::new(normal() * sd, normal() * sd, normal() * sd)
    }

    fn observe(&mut self, obs: Option<&WorldSnapshot>) {
        let Some(o) = obs else { return };
        self.last_obs_peg_top = o.peg_top;
        self.last_obs_peg_orientation = o.peg.orientation;
        let p = o.peg.position;
        if self.first_peg.is_none() {
            self.first_peg = Some(p);
        }
        if let Some(p0) = self.first_peg {
            if (p - p0).norm() > PEG_MOVED_THRESHOLD_M {
                self.peg_moved = true;
            }
        }
        if let Some(prev) = self.prev_peg {
            if (p - prev).norm() < STATIONARY_STEP_M {
                self.stationary_run += 1;
            } else {
                self.stationary_run = 0;
            }
        }
        self.prev_peg = Some(p);
    }

    fn begin(&mut self, t: f64, mt: f64, target: TargetSpec, noise: Vec3, head: f64, match_orientation: bool) {
        self.segment = Some(Segment {
            t0: t,
            mt,
            from: self.tip.position,
            from_orientation: self.tip.orientation,
            target,
            noise,
            head_fraction: head,
            match_orientation,
        });
    }

    fn waiter_ready(&self, obs: Option<&WorldSnapshot>) -> bool {
        let Some(o) = obs else { return false };
        o.holder_is_robot
            && !o.robot_returning
            && self.peg_moved
            && self.stationary_run >= STATIONARY_FRAMES
    }

    /// Produces the tip pose for this frame. `obs` is the world state from
    /// `t - delay` (None before any world state exists).
    pub fn act(&mut self, obs: Option<&WorldSnapshot>, t: f64) -> Pose {
        self.observe(obs);

        // Snap seen: switch to the drop-off reach no matter the phase.
        let snapped = obs.map(|o| !o.holder_is_robot).unwrap_or(false);
        if snapped && !matches!(self.phase, Phase::Dropoff | Phase::Settle) {
            if let Some(o) = obs {
                // Place the peg center on the receptacle top; the peg rides
                // rigidly below the tip, so aim the tip at rec0 plus the
                // current tip-to-peg offset.
                let target = self.rec0 + (self.tip.position - o.peg.position);
                self.phase = Phase::Dropoff;
                self.begin(t, self.policy.reach_mt, TargetSpec::Fixed(target), Vec3::ZERO, 0.0, false);
            }
        }

        // Robot gave up on us (dwell expired): go home empty-handed.
        let abandoned = obs
            .map(|o| o.holder_is_robot && o.robot_returning)
            .unwrap_or(false);
        if abandoned && matches!(self.phase, Phase::Forward | Phase::Homing) {
            self.phase = Phase::GiveUp;
            self.begin(t, 0.6, TargetSpec::Fixed(self.rec0), Vec3::ZERO, 0.0, false);
        }

        match self.phase {
            Phase::Hold => {
                if t >= 0.0 {
                    let start = match self.policy.kind {
                        ActorKind::Waiter => self.waiter_ready(obs),
                        // The tracker aims at the observed peg; it cannot
                        // start before anything has been seen.
                        ActorKind::Tracker => self.prev_peg.is_some(),
                        ActorKind::Leader => true,
                    };
                    if start {
                        let noise = self.draw_noise();
                        self.reach_onset = Some(t);
                        self.phase = Phase::Forward;
                        match self.policy.kind {
                            ActorKind::Leader => {
                                let launch = Vec3::new(self.rec0.x, self.rec0.y, self.z_int);
                                let head = LEADER_HEAD_START_S / self.policy.reach_mt;
                                self.begin(t, self.policy.reach_mt, TargetSpec::Fixed(launch), Vec3::ZERO, head, false);
                            }
                            ActorKind::Waiter | ActorKind::Tracker => {
                                self.begin(t, self.policy.reach_mt, TargetSpec::PegTop, noise, 0.0, true);
                            }
                        }
                    }
                }
            }
            Phase::Forward => {
                if let Some(seg) = self.segment {
                    if seg.complete(t) && self.policy.kind == ActorKind::Leader {
                        let noise = self.draw_noise();
                        self.phase = Phase::Homing;
                        self.begin(t, HOMING_MT_S, TargetSpec::PegTop, noise, 0.0, true);
                    }
                }
            }
            Phase::Dropoff => {
                if let Some(seg) = self.segment {
                    if seg.complete(t) {
                        self.phase = Phase::Settle;
                        self.begin(t, SETTLE_MT_S, TargetSpec::Fixed(self.rec0), Vec3::ZERO, 0.0, false);
                    }
                }
            }
            Phase::Homing | Phase::Settle | Phase::GiveUp => {}
        }

        self.tip = self.evaluate(t);
        self.tip
    }

    fn evaluate(&mut self, t: f64) -> Pose {
        let Some(seg) = self.segment else {
            return Pose::from_position(self.rec0);
        };
        let target_now = match seg.target {
            TargetSpec::Fixed(p) => p,
            TargetSpec::PegTop => self.last_obs_peg_top,
        };
        let s = seg.progress(t);
        let position = if seg.complete(t) {
            // Segment finished: home on the (possibly moving) target while
            // the endpoint noise decays like a corrective adjustment.
            let dt_end = t - (seg.t0 + seg.mt * (1.0 - seg.head_fraction));
            let decay = (-dt_end.max(0.0) / NOISE_DECAY_S).exp();
            target_now + seg.noise * decay
        } else {
            seg.from + (target_now + seg.noise - seg.from) * s
        };
        let orientation = if seg.match_orientation {
            seg.from_orientation.slerp(self.last_obs_peg_orientation, s)
        } else {
            seg.from_orientation
        };
        Pose { position, orientation }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{min_jerk_eval, TrajectorySpec, ProfileKind};

    const DT: f64 = 1.0 / 90.0;

    fn rec0() -> Vec3 {
        Vec3::new(0.6, 0.10, 0.05)
    }

    fn snapshot(t: f64, peg: Vec3) -> WorldSnapshot {
        WorldSnapshot {
            t,
            peg: Pose::from_position(peg),
            peg_top: peg + Vec3::new(0.0, 0.05, 0.0),
            robot_tip: peg + Vec3::new(0.0, 0.05, 0.0),
            holder_is_robot: true,
            robot_returning: false,
        }
    }

    /// Drives an actor against a scripted peg trajectory; the observation
    /// lags by the policy delay, and 30 pre-trial frames precede onset as
    /// in the engine. Returns the tip trace from onset.
    fn run_actor(actor: &mut Actor, peg_at: impl Fn(f64) -> Vec3, frames: usize) -> Vec<Vec3> {
        const PRE: usize = 30;
        let delay = actor.policy().delay_frames();
        let mut history: Vec<WorldSnapshot> = Vec::new();
        let mut trace = Vec::new();
        for i in 0..frames + PRE {
            let t = (i as f64 - PRE as f64) * DT;
            let obs = if i >= delay { Some(&history[i - delay]) } else { None };
            let tip = actor.act(obs, t);
            if i >= PRE {
                trace.push(tip.position);
            }
            history.push(snapshot(t, peg_at(t.max(0.0))));
        }
        trace
    }

    #[test]
    fn waiter_reaches_stationary_peg_endpoint() {
        let peg = Vec3::new(0.6, 0.32, 0.42);
        let policy = ActorPolicy::with_kind(ActorKind::Waiter);
        let mut actor = Actor::new(policy, rec0(), 0.40, 7);
        // Peg slides forward over 1 s, then rests.
        let peg_at = move |t: f64| min_jerk_eval(Vec3::new(0.6, 0.32, 0.75), peg, 1.0, t).0;
        let trace = run_actor(&mut actor, peg_at, 300);
        let tip_end = *trace.last().unwrap();
        let want = peg + Vec3::new(0.0, 0.05, 0.0);
        assert!(
            (tip_end - want).norm() < 1e-6,
            "zero-noise waiter should converge to the peg top, off by {}",
            (tip_end - want).norm()
        );
        // The scripted onset comes after robot arrival plus delay.
        let onset = actor.scripted_onset().unwrap();
        assert!(onset > 1.0 && onset < 1.5, "onset {onset}");
    }

    #[test]
    fn tracker_zero_delay_noise_converges_to_frozen_peg() {
        let peg = Vec3::new(0.55, 0.30, 0.45);
        let policy = ActorPolicy::new(ActorKind::Tracker, 0.05, 0.6, 0.0).unwrap();
        let mut actor = Actor::new(policy, rec0(), 0.40, 3);
        let trace = run_actor(&mut actor, move |_| peg, 200);
        let want = peg + Vec3::new(0.0, 0.05, 0.0);
        assert!((*trace.last().unwrap() - want).norm() < 1e-9);
    }

    #[test]
    fn tracker_lags_more_behind_late_information_profile() {
        // Same policy and seed against a constant-acceleration peg versus a
        // minimum-jerk peg: the late-moving profile leaves the tracker
        // farther from the peg at robot arrival time.
        let x0 = Vec3::new(0.6, 0.32, 0.75);
        let xe = Vec3::new(0.6, 0.32, 0.40);
        let mt = 1.0;
        let distance_at_mt = |kind: ProfileKind| -> f64 {
            let spec = TrajectorySpec::new(kind, x0, xe, mt, None, None).unwrap();
            let policy = ActorPolicy::new(ActorKind::Tracker, 0.15, 1.0, 0.0).unwrap();
            let mut actor = Actor::new(policy, rec0(), 0.40, 99);
            let frames = (mt / DT) as usize + 1;
            let trace = run_actor(&mut actor, move |t| spec.eval(t).0, frames);
            let tip = *trace.last().unwrap();
            let peg_top = xe + Vec3::new(0.0, 0.05, 0.0);
            (tip - peg_top).norm()
        };
        let d_accel = distance_at_mt(ProfileKind::ConstAccel);
        let d_jerk = distance_at_mt(ProfileKind::MinJerk);
        assert!(
            d_accel > d_jerk,
            "late information should increase lag: accel {d_accel} vs jerk {d_jerk}"
        );
    }

    #[test]
    fn leader_trips_start_trigger_within_three_frames() {
        let policy = ActorPolicy::with_kind(ActorKind::Leader);
        let mut actor = Actor::new(policy, rec0(), 0.40, 1);
        let tip0 = actor.act(None, -DT).position;
        let mut tripped_at = None;
        for i in 0..10 {
            let t = i as f64 * DT;
            let tip = actor.act(None, t).position;
            if (tip - tip0).norm() >= crate::coupling::START_TRIGGER_M {
                tripped_at = Some(i);
                break;
            }
        }
        let frame = tripped_at.expect("leader must trip the 10 mm trigger");
        assert!(frame <= 3, "tripped at frame {frame}");
    }

    #[test]
    fn actor_output_is_continuous_under_speed_bound() {
        for kind in [ActorKind::Waiter, ActorKind::Tracker, ActorKind::Leader] {
            let policy = ActorPolicy::new(kind, 0.15, 0.8, 0.005).unwrap();
            let mut actor = Actor::new(policy, rec0(), 0.40, 42);
            let x0 = Vec3::new(0.6, 0.32, 0.75);
            let xe = Vec3::new(0.45, 0.22, 0.40);
            let peg_at = move |t: f64| min_jerk_eval(x0, xe, 1.0, t).0;
            let trace = run_actor(&mut actor, peg_at, 400);
            for w in trace.windows(2) {
                let step = (w[1] - w[0]).norm();
                assert!(
                    step <= SPEED_BOUND_M_S * DT + 1e-12,
                    "{kind:?} moved {step} m in one frame"
                );
            }
        }
    }

    #[test]
    fn same_seed_identical_trajectories() {
        let policy = ActorPolicy::new(ActorKind::Tracker, 0.15, 0.8, 0.01).unwrap();
        let peg_at = |t: f64| Vec3::new(0.6, 0.32, 0.75 - 0.3 * t.min(1.0));
        let mut a = Actor::new(policy, rec0(), 0.40, 1234);
        let mut b = Actor::new(policy, rec0(), 0.40, 1234);
        let ta = run_actor(&mut a, peg_at, 200);
        let tb = run_actor(&mut b, peg_at, 200);
        assert_eq!(ta.len(), tb.len());
        for (x, y) in ta.iter().zip(&tb) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(ActorPolicy::new(ActorKind::Waiter, 0.01, 0.8, 0.0).is_err());
        assert!(ActorPolicy::new(ActorKind::Waiter, 0.6, 0.8, 0.0).is_err());
        assert!(ActorPolicy::new(ActorKind::Waiter, 0.15, 0.8, -0.1).is_err());
        assert!(ActorPolicy::new(ActorKind::Waiter, 0.15, 0.0, 0.0).is_err());
        assert_eq!(ActorPolicy::with_kind(ActorKind::Waiter).delay_frames(), 14);
    }
}
