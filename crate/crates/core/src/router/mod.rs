//! The routing authority: tracks every participant, answers availability
//! and graph queries, and buffers published envelopes in per-subscriber
//! message stacks until they are pulled.
//!
//! [`RouterState`] is the plain state machine; [`RouterHandle`] runs it on
//! its own thread behind an ordered command stream so callers in other
//! threads interact purely by message passing.

mod handle;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use handle::{RouterApi, RouterConn, RouterHandle};
pub use state::RouterState;


/// Default per-subscriber buffer capacity.
pub const DEFAULT_STACK_CAPACITY: usize = 1024;

/// Router settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterConfig {
    /// Maximum buffered envelopes per subscriber; overflow drops the oldest
    /// and counts the drop.
    pub stack_capacity: usize,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig { stack_capacity: DEFAULT_STACK_CAPACITY }
    }
}

/// Communication roles a participant can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantRole {
    Publisher,
    Subscriber,
    ServiceServer,
    ServiceClient,
}

impl ParticipantRole {
    pub fn is_service(self) -> bool {
        matches!(self, ParticipantRole::ServiceServer | ParticipantRole::ServiceClient)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParticipantRole::Publisher => "publisher",
            ParticipantRole::Subscriber => "subscriber",
            ParticipantRole::ServiceServer => "service_server",
            ParticipantRole::ServiceClient => "service_client",
        }
    }
}

/// Registration request for a new participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantDecl {
    pub name: String,
    pub role: ParticipantRole,
    pub topic_or_service: String,
    pub type_name: String,
}

/// A registered entity as tracked by the router.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub gid: u64,
    pub name: String,
    pub role: ParticipantRole,
    pub topic_or_service: String,
    pub type_name: String,
}

/// Correlation id for service traffic: the requesting client's gid plus a
/// client-local monotone counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestId {
    pub client_gid: u64,
    pub seq: u64,
}

/// Routed message unit; also the body carried by the wire transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender_gid: u64,
    pub topic: String,
    /// Canonical YAML text of the message payload.
    pub payload: String,
    /// Strictly increasing per sender.
    pub seq: u64,
    /// Present on service traffic only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<RequestId>,
    /// When set, deliver only to this subscriber (service responses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
}

impl Envelope {
    pub fn new(sender_gid: u64, topic: impl Into<String>, payload: impl Into<String>, seq: u64) -> Self {
        Envelope {
            sender_gid,
            topic: topic.into(),
            payload: payload.into(),
            seq,
            request_id: None,
            reply_to: None,
        }
    }
}

/// Filter for entity queries. Patterns are globs: `*` matches any run of
/// characters, `?` a single character, `[abc]` a character class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ParticipantRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_or_service: Option<String>,
}

impl EntityFilter {
    pub fn role(role: ParticipantRole) -> Self {
        EntityFilter { role: Some(role), ..Default::default() }
    }

    pub fn with_topic(mut self, pattern: impl Into<String>) -> Self {
        self.topic_or_service = Some(pattern.into());
        self
    }

    pub fn with_name(mut self, pattern: impl Into<String>) -> Self {
        self.name = Some(pattern.into());
        self
    }
}

/// Per-topic counts in a graph snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub name: String,
    pub type_name: String,
    pub publishers: usize,
    pub subscribers: usize,
    /// Envelopes dropped to overflow across all subscribers of the topic,
    /// including subscribers that have since deregistered.
    pub dropped: u64,
}

/// Per-service counts in a graph snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSummary {
    pub name: String,
    pub type_name: String,
    pub servers: usize,
    pub clients: usize,
}

/// Consistent snapshot of topics and services, sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub topics: Vec<TopicSummary>,
    pub services: Vec<ServiceSummary>,
}

impl GraphSummary {
    pub fn is_empty(&self) -> bool {
        self.topics.is_empty() && self.services.is_empty()
    }
}

/// Router operation failures.
///
/// Serializable so wire replies can carry them verbatim.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum RouterError {
    #[error("invalid router config: {0}")]
    InvalidConfig(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("topic `{topic}` is bound to type `{bound}`, not `{requested}`")]
    TypeConflict { topic: String, bound: String, requested: String },
    #[error("unknown gid {0}")]
    UnknownGid(u64),
    #[error("gid {gid} is not a publisher on topic `{topic}`")]
    NotPublisher { gid: u64, topic: String },
    #[error("gid {gid} is not a subscriber")]
    NotSubscriber { gid: u64 },
    #[error("non-monotone seq {seq} from gid {gid} (last was {last})")]
    NonMonotoneSeq { gid: u64, seq: u64, last: u64 },
    #[error("payload violates schema for `{type_name}`: {detail}")]
    SchemaViolation { type_name: String, detail: String },
    #[error("malformed pattern `{pattern}`: {detail}")]
    MalformedPattern { pattern: String, detail: String },
    #[error("router unavailable: {0}")]
    Unavailable(String),
}

