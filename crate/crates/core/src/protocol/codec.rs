//! Canonical line encoding: one compact JSON object per line, keys sorted,
//! rates as integer kbps, terminated by `\n`.

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use super::{Message, MessageKind, Payload};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("decode error at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

impl DecodeError {
    fn at(offset: usize, reason: impl Into<String>) -> Self {
        Self {
            offset,
            reason: reason.into(),
        }
    }
}

fn payload_value(p: &Payload) -> Value {
    let v = match p {
        Payload::Envelope(e) => serde_json::to_value(e),
        Payload::Trajectory(t) => serde_json::to_value(t),
        Payload::Ack(a) => serde_json::to_value(a),
        Payload::Notification(n) => serde_json::to_value(n),
        Payload::Revision(r) => serde_json::to_value(r),
        Payload::Opaque(v) => Ok(v.clone()),
    };
    v.expect("payload types serialize to JSON")
}

pub fn to_value(m: &Message) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::String(m.kind.as_str().to_string()));
    obj.insert("payload".into(), payload_value(&m.payload));
    obj.insert("sender".into(), Value::String(m.sender.clone()));
    obj.insert("seq".into(), Value::from(m.seq));
    Value::Object(obj)
}

/// Canonical bytes for `m`, newline included.
pub fn encode(m: &Message) -> Vec<u8> {
    let mut out = serde_json::to_vec(&to_value(m)).expect("values always serialize");
    out.push(b'\n');
    out
}

pub fn encode_string(m: &Message) -> String {
    String::from_utf8(encode(m)).expect("JSON is UTF-8")
}

/// Decodes exactly one newline-terminated record.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let Some((&b'\n', body)) = bytes.split_last() else {
        return Err(DecodeError::at(bytes.len(), "record is not newline-terminated"));
    };
    if let Some(i) = body.iter().position(|&b| b == b'\n') {
        return Err(DecodeError::at(i, "more than one record"));
    }
    let text = std::str::from_utf8(body)
        .map_err(|e| DecodeError::at(e.valid_up_to(), "invalid UTF-8"))?;
    let value: Value = serde_json::from_str(text)
        .map_err(|e| DecodeError::at(e.column().saturating_sub(1), e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(DecodeError::at(0, "record is not an object"));
    };
    let field_at = |name: &str| text.find(&format!("\"{name}\"")).unwrap_or(0);
    let kind = match obj.remove("kind") {
        Some(Value::String(s)) => MessageKind::parse(&s),
        _ => return Err(DecodeError::at(field_at("kind"), "missing or non-string kind")),
    };
    let seq = obj
        .remove("seq")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| DecodeError::at(field_at("seq"), "missing or non-integer seq"))?;
    let sender = match obj.remove("sender") {
        Some(Value::String(s)) => s,
        _ => return Err(DecodeError::at(field_at("sender"), "missing or non-string sender")),
    };
    let raw = obj
        .remove("payload")
        .ok_or_else(|| DecodeError::at(text.len(), "missing payload"))?;
    if let Some(extra) = obj.keys().next() {
        return Err(DecodeError::at(field_at(extra), format!("unexpected field {extra}")));
    }
    fn typed<T: DeserializeOwned>(v: Value, at: usize) -> Result<T, DecodeError> {
        serde_json::from_value(v).map_err(|e| DecodeError::at(at, e.to_string()))
    }
    let at = field_at("payload");
    let payload = match kind {
        MessageKind::M1Envelope => Payload::Envelope(typed(raw, at)?),
        MessageKind::M2Trajectory => Payload::Trajectory(typed(raw, at)?),
        MessageKind::M2Ack | MessageKind::M4Ack => Payload::Ack(typed(raw, at)?),
        MessageKind::M3Notification => Payload::Notification(typed(raw, at)?),
        MessageKind::M4Revision => Payload::Revision(typed(raw, at)?),
        MessageKind::Unknown(_) => Payload::Opaque(raw),
    };
    Ok(Message {
        kind,
        seq,
        sender,
        payload,
    })
}
