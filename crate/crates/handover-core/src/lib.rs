//! Headless simulator and analysis toolkit for robot-to-human handover
//! experiments.
//!
//! The crate is organized as a pipeline:
//!
//! * [`frames`] — table-centered coordinate system and quaternion primitives
//! * [`kinematics`] — 6-joint arm, forward kinematics, Jacobian, IK stepping
//! * [`trajectory`] — closed-form end-effector motion programs
//! * [`coupling`] — interaction algorithms mapping participant motion to robot motion
//! * [`engine`] — fixed-step (90 Hz) trial state machine and per-frame logging
//! * [`actor`] — synthetic participant models
//! * [`sigproc`] — resampling, filtering, differentiation
//! * [`metrics`] — movement segmentation and dependent variables
//! * [`stats`] — normality gate, RM-ANOVA, nonparametric fallbacks, post hocs
//! * [`runner`] — experiment presets, batch execution, analysis orchestration

pub mod actor;
pub mod config;
pub mod coupling;
pub mod engine;
pub mod frames;
pub mod kinematics;
pub mod metrics;
pub mod runner;
pub mod sigproc;
pub mod stats;
pub mod trajectory;
