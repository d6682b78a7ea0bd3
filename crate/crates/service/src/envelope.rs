//! Wire envelope: one JSON object per frame.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Call,
    Reply,
    Subscribe,
    Event,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub kind: Kind,
    pub id: String,
    pub channel: String,
    #[serde(default)]
    pub payload: Map<String, Value>,
}

/// Machine-readable `code` carried in error payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    UnknownChannel,
    BadPayload,
    NotIdle,
    ValidationFailed,
    Conflict,
    Unreachable,
    /// A subscriber fell too far behind; the subscription was dropped.
    Overflow,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownChannel => "unknown_channel",
            ErrorCode::BadPayload => "bad_payload",
            ErrorCode::NotIdle => "not_idle",
            ErrorCode::ValidationFailed => "validation_failed",
            ErrorCode::Conflict => "conflict",
            ErrorCode::Unreachable => "unreachable",
            ErrorCode::Overflow => "overflow",
        }
    }
}

/// A frame that could not be turned into an [`Envelope`]. `id` and `channel`
/// are recovered when the frame was at least a JSON object carrying them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameError {
    pub id: String,
    pub channel: String,
    pub message: String,
}

impl Envelope {
    pub fn new(
        kind: Kind,
        id: impl Into<String>,
        channel: impl Into<String>,
        payload: Map<String, Value>,
    ) -> Self {
        Envelope {
            kind,
            id: id.into(),
            channel: channel.into(),
            payload,
        }
    }

    pub fn call(id: impl Into<String>, channel: impl Into<String>, payload: Value) -> Self {
        Envelope::new(Kind::Call, id, channel, into_object(payload))
    }

    pub fn subscribe(id: impl Into<String>, channel: impl Into<String>) -> Self {
        Envelope::new(Kind::Subscribe, id, channel, Map::new())
    }

    pub fn reply(id: impl Into<String>, channel: impl Into<String>, payload: Value) -> Self {
        Envelope::new(Kind::Reply, id, channel, into_object(payload))
    }

    pub fn event(id: impl Into<String>, channel: impl Into<String>, payload: Value) -> Self {
        Envelope::new(Kind::Event, id, channel, into_object(payload))
    }

    /// Error envelope with `{code, message}` plus any fields of `extra`.
    pub fn error(
        id: impl Into<String>,
        channel: impl Into<String>,
        code: ErrorCode,
        message: impl Into<String>,
        extra: Value,
    ) -> Self {
        let mut payload = into_object(extra);
        payload.insert("code".into(), code.as_str().into());
        payload.insert("message".into(), Value::String(message.into()));
        Envelope::new(Kind::Error, id, channel, payload)
    }

    /// Error `code` of an error envelope.
    pub fn error_code(&self) -> Option<&str> {
        match self.kind {
            Kind::Error => self.payload.get("code").and_then(Value::as_str),
            _ => None,
        }
    }

    /// Compact single-line JSON.
    pub fn to_frame(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_frame(text: &str) -> Result<Self, FrameError> {
        let value: Value = serde_json::from_str(text).map_err(|e| FrameError {
            id: String::new(),
            channel: String::new(),
            message: format!("malformed JSON: {e}"),
        })?;
        let field = |name: &str| {
            value
                .get(name)
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string()
        };
        let (id, channel) = (field("id"), field("channel"));
        serde_json::from_value(value).map_err(|e| FrameError {
            id,
            channel,
            message: format!("invalid envelope: {e}"),
        })
    }
}

fn into_object(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(map) => map,
        Value::Null => Map::new(),
        other => {
            let mut map = Map::new();
            map.insert("value".into(), other);
            map
        }
    }
}
