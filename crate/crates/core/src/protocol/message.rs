use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{DemandTrajectory, WorkflowId};
use crate::network::{CapabilityEnvelope, CapabilityNotification, FeasibilityVerdict};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    M1Envelope,
    M2Trajectory,
    M2Ack,
    M3Notification,
    M4Revision,
    M4Ack,
    /// Kept verbatim so newer peers can be relayed.
    Unknown(String),
}

impl MessageKind {
    pub fn as_str(&self) -> &str {
        match self {
            MessageKind::M1Envelope => "M1_ENVELOPE",
            MessageKind::M2Trajectory => "M2_TRAJECTORY",
            MessageKind::M2Ack => "M2_ACK",
            MessageKind::M3Notification => "M3_NOTIFICATION",
            MessageKind::M4Revision => "M4_REVISION",
            MessageKind::M4Ack => "M4_ACK",
            MessageKind::Unknown(s) => s,
        }
    }

    pub fn parse(s: &str) -> MessageKind {
        match s {
            "M1_ENVELOPE" => MessageKind::M1Envelope,
            "M2_TRAJECTORY" => MessageKind::M2Trajectory,
            "M2_ACK" => MessageKind::M2Ack,
            "M3_NOTIFICATION" => MessageKind::M3Notification,
            "M4_REVISION" => MessageKind::M4Revision,
            "M4_ACK" => MessageKind::M4Ack,
            other => MessageKind::Unknown(other.to_string()),
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Answer to an M2 or M4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// `seq` of the message being answered.
    pub answers: u64,
    pub workflow_id: WorkflowId,
    /// Set when the trajectory was admitted.
    pub admission_seq: Option<u64>,
    #[serde(flatten)]
    pub verdict: FeasibilityVerdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    /// Commitment being replaced; `None` revises a draft that Stage 1 did
    /// not admit.
    pub supersedes: Option<u64>,
    pub trajectory: DemandTrajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Envelope(CapabilityEnvelope),
    Trajectory(DemandTrajectory),
    Ack(Ack),
    Notification(CapabilityNotification),
    Revision(Revision),
    Opaque(serde_json::Value),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    /// Strictly increasing per sender.
    pub seq: u64,
    pub sender: String,
    pub payload: Payload,
}

impl Message {
    pub fn envelope(seq: u64, sender: impl Into<String>, e: CapabilityEnvelope) -> Self {
        Self::new(MessageKind::M1Envelope, seq, sender, Payload::Envelope(e))
    }

    pub fn trajectory(seq: u64, sender: impl Into<String>, t: DemandTrajectory) -> Self {
        Self::new(MessageKind::M2Trajectory, seq, sender, Payload::Trajectory(t))
    }

    pub fn m2_ack(seq: u64, sender: impl Into<String>, ack: Ack) -> Self {
        Self::new(MessageKind::M2Ack, seq, sender, Payload::Ack(ack))
    }

    pub fn notification(seq: u64, sender: impl Into<String>, n: CapabilityNotification) -> Self {
        Self::new(MessageKind::M3Notification, seq, sender, Payload::Notification(n))
    }

    pub fn revision(seq: u64, sender: impl Into<String>, r: Revision) -> Self {
        Self::new(MessageKind::M4Revision, seq, sender, Payload::Revision(r))
    }

    pub fn m4_ack(seq: u64, sender: impl Into<String>, ack: Ack) -> Self {
        Self::new(MessageKind::M4Ack, seq, sender, Payload::Ack(ack))
    }

    fn new(kind: MessageKind, seq: u64, sender: impl Into<String>, payload: Payload) -> Self {
        Self {
            kind,
            seq,
            sender: sender.into(),
            payload,
        }
    }
}
