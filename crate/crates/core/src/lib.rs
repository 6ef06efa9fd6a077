//! Workflow-level QoS coordination between industrial agents and a network
//! agent over a rolling planning window.
//!
//! The network side exposes a capability envelope (which guaranteed-bit-rate
//! profiles are sustainable, and when); the industrial side answers with a
//! demand trajectory laid out phase by phase. Capability changes trigger a
//! priority-ordered adaptation round. [`sim`] runs both sides against each
//! other, and against a request-driven baseline.

pub mod industrial;
pub mod model;
pub mod network;
pub mod protocol;
pub mod sim;
pub mod step;

pub use model::*;
