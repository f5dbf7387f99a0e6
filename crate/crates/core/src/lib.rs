//! Deterministic dual-process agent simulation over annotated grid scenes.
//!
//! Agents walk a scene on a cheap autopilot ([`agent`]) and switch to
//! generative appraisal ([`episodic`]) when their prediction error crosses
//! a threshold or they cross an event boundary. The gap between what an
//! agent expected and what is physically there is the cognitive friction
//! accumulated by [`friction`] into heatmaps and phantom affordance
//! reports. [`runner`] ties a run together and writes auditable outputs.

pub mod agent;
pub mod canonical;
#[cfg(feature = "cli")]
pub mod cli;
pub mod embed;
pub mod episodic;
pub mod friction;
pub mod runner;
pub mod scene;
