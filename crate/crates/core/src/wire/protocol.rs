//! JSON bodies carried inside wire frames.

use serde::{Deserialize, Serialize};

use crate::router::{
    Envelope, EntityFilter, GraphSummary, ParticipantDecl, ParticipantRecord, RouterError,
};

use super::frame::VERSION;

/// Client hello: `{"node":"<name>","version":1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloBody {
    pub node: String,
    pub version: u8,
}

impl HelloBody {
    pub fn new(node: impl Into<String>) -> Self {
        HelloBody { node: node.into(), version: VERSION }
    }
}

/// Server answer to a hello.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloReply {
    pub ok: bool,
    pub version: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One router operation; mirrors [`crate::router::RouterApi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CommandOp {
    Register { decl: ParticipantDecl },
    Deregister { gid: u64 },
    Publish { envelope: Envelope },
    Fetch { gid: u64, max: u64 },
    Query { filter: EntityFilter },
    Graph,
}

/// A command frame body: client-assigned correlation token plus operation.
/// Every command receives exactly one reply bearing the same token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandBody {
    pub token: u64,
    #[serde(flatten)]
    pub op: CommandOp,
}

/// Successful command results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyResult {
    Gid(u64),
    Done,
    Delivered(u64),
    Envelopes(Vec<Envelope>),
    Records(Vec<ParticipantRecord>),
    Graph(GraphSummary),
}

/// A reply frame body, correlated to its command by token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyBody {
    pub token: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ReplyResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RouterError>,
}

impl ReplyBody {
    pub fn ok(token: u64, result: ReplyResult) -> Self {
        ReplyBody { token, ok: true, result: Some(result), error: None }
    }

    pub fn err(token: u64, error: RouterError) -> Self {
        ReplyBody { token, ok: false, result: None, error: Some(error) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::ParticipantRole;

    #[test]
    fn command_json_shape_is_flat() {
        let body = CommandBody {
            token: 7,
            op: CommandOp::Fetch { gid: 3, max: 10 },
        };
        let json = serde_json::to_string(&body).unwrap();
        assert_eq!(json, r#"{"token":7,"op":"fetch","gid":3,"max":10}"#);
        let back: CommandBody = serde_json::from_str(&json).unwrap();
        assert_eq!(back, body);
    }

    #[test]
    fn register_command_round_trips() {
        let body = CommandBody {
            token: 1,
            op: CommandOp::Register {
                decl: ParticipantDecl {
                    name: "talker".to_string(),
                    role: ParticipantRole::Publisher,
                    topic_or_service: "topic_a".to_string(),
                    type_name: "std_msgs/String".to_string(),
                },
            },
        };
        let json = serde_json::to_string(&body).unwrap();
        assert!(json.contains(r#""op":"register"#));
        assert!(json.contains(r#""role":"publisher"#));
        let back: CommandBody = serde_json::from_str(&json).unwrap();
        assert_eq!(back, body);
    }

    #[test]
    fn reply_round_trips_errors() {
        let reply = ReplyBody::err(9, RouterError::UnknownGid(42));
        let json = serde_json::to_string(&reply).unwrap();
        let back: ReplyBody = serde_json::from_str(&json).unwrap();
        assert_eq!(back.error, Some(RouterError::UnknownGid(42)));
        assert!(!back.ok);
    }

    #[test]
    fn hello_body_matches_contract() {
        let hello = HelloBody::new("node_1");
        assert_eq!(
            serde_json::to_string(&hello).unwrap(),
            r#"{"node":"node_1","version":1}"#
        );
    }
}
