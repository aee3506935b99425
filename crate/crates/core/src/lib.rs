//! Desk-scale middleware with broker-routed pub/sub, typed message
//! introspection, and RPC composed from publisher/subscriber pairs.
//!
//! The crate is organized around a single routing authority and the
//! participants that talk to it:
//!
//! - [`msgspec`] — message-type definitions, the dynamic value model, and the
//!   three codecs (binary, canonical YAML text, JSON text).
//! - [`router`] — tracks every participant, answers graph queries, and
//!   buffers published envelopes in per-subscriber message stacks until they
//!   are pulled.
//! - [`participant`] — `Publisher`, `Subscriber`, `ServiceServer`, and
//!   `ServiceClient`; services are publisher/subscriber pairs on derived
//!   request/response topics.
//! - [`nodehost`] — runs each node on its own isolated worker with a
//!   supervisor, communicating with the router purely by message passing;
//!   supports a seeded virtual clock for deterministic runs.
//! - [`wire`] — length-prefixed framed transport so node hosts can run as
//!   separate processes against one router process.
//! - [`devbridge`] — forwards topics to a non-middleware device over a
//!   line-oriented protocol, with a mock device for testing.

pub mod devbridge;
pub mod msgspec;
pub mod nodehost;
pub mod participant;
pub mod router;
pub mod testkit;
pub mod transcript;
pub mod wire;

pub use msgspec::{MessageSchema, MessageValue, SchemaRegistry};
pub use participant::{Publisher, ServiceClient, ServiceServer, Subscriber};
pub use router::{Envelope, ParticipantRecord, RouterConfig, RouterHandle};
