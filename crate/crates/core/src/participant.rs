//! Client-side participant hierarchy: publishers, subscribers, and the
//! service endpoints composed from them.
//!
//! A [`ServiceClient`] is a publisher on the service's request topic plus a
//! subscriber on its response topic; a [`ServiceServer`] is the reverse
//! pair. Both also register a role record so availability queries work.
//!
//! All calls are non-blocking pulls: emptiness is a value, not an error.
//! A participant instance belongs to the thread driving it; cross-thread
//! effects flow only through router commands.

use std::collections::HashMap;

use thiserror::Error;

use crate::msgspec::{
    from_yaml, to_yaml, validate_value, MessageSchema, MessageValue, SchemaError, SchemaRegistry,
    ValidationReport, YamlError,
};
use crate::router::{
    Envelope, EntityFilter, ParticipantDecl, ParticipantRole, RequestId, RouterConn, RouterError,
};

#[derive(Debug, Error)]
pub enum ParticipantError {
    #[error("value does not conform to `{type_name}`: {report}")]
    Validation { type_name: String, report: ValidationReport },
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("payload failed schema parse (router/schema drift): {0}")]
    PayloadDrift(#[from] YamlError),
    #[error("participant is not registered")]
    NotRegistered,
    #[error("malformed correlation metadata on `{topic}`: {detail}")]
    MalformedCorrelation { topic: String, detail: String },
    #[error("request {0:?} was never taken by this server")]
    UnknownRequestId(RequestId),
    #[error("request {0:?} already received a response")]
    AlreadyResponded(RequestId),
}

/// Request/response topic names derived deterministically from a service
/// name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceEndpoints {
    pub request_topic: String,
    pub response_topic: String,
}

impl ServiceEndpoints {
    pub fn for_service(service: &str) -> Self {
        ServiceEndpoints {
            request_topic: format!("/{service}/request_topic"),
            response_topic: format!("/{service}/response_topic"),
        }
    }
}

macro_rules! impl_participant_debug {
    ($ty:ident, $label:literal) => {
        impl std::fmt::Debug for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.debug_struct($label)
                    .field("gid", &self.gid())
                    .field("registered", &self.registered)
                    .finish_non_exhaustive()
            }
        }
    };
}

impl_participant_debug!(Publisher, "Publisher");
impl_participant_debug!(Subscriber, "Subscriber");
impl_participant_debug!(ServiceClient, "ServiceClient");
impl_participant_debug!(ServiceServer, "ServiceServer");

/// Escape glob metacharacters so a filter matches a literal name.
pub fn glob_literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if matches!(ch, '*' | '?' | '[' | ']' | '\\') {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}

/// Sends messages on one topic.
pub struct Publisher {
    name: String,
    topic: String,
    schema: MessageSchema,
    registry: SchemaRegistry,
    conn: RouterConn,
    gid: u64,
    next_seq: u64,
    registered: bool,
}

impl Publisher {
    pub fn create(
        conn: RouterConn,
        registry: &SchemaRegistry,
        topic: &str,
        type_name: &str,
        name: &str,
    ) -> Result<Self, ParticipantError> {
        let schema = registry.require(type_name)?;
        let gid = conn.register(ParticipantDecl {
            name: name.to_string(),
            role: ParticipantRole::Publisher,
            topic_or_service: topic.to_string(),
            type_name: type_name.to_string(),
        })?;
        Ok(Publisher {
            name: name.to_string(),
            topic: topic.to_string(),
            schema,
            registry: registry.clone(),
            conn,
            gid,
            next_seq: 1,
            registered: true,
        })
    }

    pub fn gid(&self) -> u64 {
        self.gid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Validate locally, convert to canonical YAML, and route. Returns the
    /// number of subscriber stacks the envelope reached.
    pub fn publish(&mut self, value: &MessageValue) -> Result<usize, ParticipantError> {
        self.publish_envelope(value, None, None)
    }

    fn publish_envelope(
        &mut self,
        value: &MessageValue,
        request_id: Option<RequestId>,
        reply_to: Option<u64>,
    ) -> Result<usize, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let report = validate_value(&self.registry, &self.schema, value);
        if !report.is_valid() {
            return Err(ParticipantError::Validation {
                type_name: self.schema.name().to_string(),
                report,
            });
        }
        let payload = to_yaml(&self.registry, &self.schema, value)?;
        let mut envelope = Envelope::new(self.gid, self.topic.clone(), payload, self.next_seq);
        envelope.request_id = request_id;
        envelope.reply_to = reply_to;
        let delivered = self.conn.publish(envelope)?;
        self.next_seq += 1;
        Ok(delivered)
    }

    pub fn deregister(&mut self) -> Result<(), ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        self.conn.deregister(self.gid)?;
        self.registered = false;
        Ok(())
    }
}

/// Pulls messages from one topic.
pub struct Subscriber {
    name: String,
    topic: String,
    schema: MessageSchema,
    registry: SchemaRegistry,
    conn: RouterConn,
    gid: u64,
    registered: bool,
}

impl Subscriber {
    pub fn create(
        conn: RouterConn,
        registry: &SchemaRegistry,
        topic: &str,
        type_name: &str,
        name: &str,
    ) -> Result<Self, ParticipantError> {
        let schema = registry.require(type_name)?;
        let gid = conn.register(ParticipantDecl {
            name: name.to_string(),
            role: ParticipantRole::Subscriber,
            topic_or_service: topic.to_string(),
            type_name: type_name.to_string(),
        })?;
        Ok(Subscriber {
            name: name.to_string(),
            topic: topic.to_string(),
            schema,
            registry: registry.clone(),
            conn,
            gid,
            registered: true,
        })
    }

    pub fn gid(&self) -> u64 {
        self.gid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Oldest pending message, decoded; `None` when the stack is empty.
    pub fn get_message(&mut self) -> Result<Option<MessageValue>, ParticipantError> {
        Ok(self.take_envelope()?.map(|(value, _)| value))
    }

    fn take_envelope(&mut self) -> Result<Option<(MessageValue, Envelope)>, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let mut envelopes = self.conn.fetch(self.gid, 1)?;
        let Some(envelope) = envelopes.pop() else {
            return Ok(None);
        };
        let value = from_yaml(&self.registry, &self.schema, &envelope.payload)?;
        Ok(Some((value, envelope)))
    }

    pub fn deregister(&mut self) -> Result<(), ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        self.conn.deregister(self.gid)?;
        self.registered = false;
        Ok(())
    }
}

/// Invokes a service: request publisher + response subscriber + a client
/// role record for graph queries.
pub struct ServiceClient {
    service: String,
    record_gid: u64,
    request_pub: Publisher,
    response_sub: Subscriber,
    conn: RouterConn,
    next_request: u64,
    pending: Vec<u64>,
    registered: bool,
}

impl ServiceClient {
    pub fn create(
        conn: RouterConn,
        registry: &SchemaRegistry,
        service: &str,
        type_name: &str,
        name: &str,
    ) -> Result<Self, ParticipantError> {
        let endpoints = ServiceEndpoints::for_service(service);
        let mut request_pub = Publisher::create(
            conn.clone(),
            registry,
            &endpoints.request_topic,
            &format!("{type_name}_Request"),
            name,
        )?;
        let mut response_sub = match Subscriber::create(
            conn.clone(),
            registry,
            &endpoints.response_topic,
            &format!("{type_name}_Response"),
            name,
        ) {
            Ok(sub) => sub,
            Err(err) => {
                let _ = request_pub.deregister();
                return Err(err);
            }
        };
        let record_gid = match conn.register(ParticipantDecl {
            name: name.to_string(),
            role: ParticipantRole::ServiceClient,
            topic_or_service: service.to_string(),
            type_name: type_name.to_string(),
        }) {
            Ok(gid) => gid,
            Err(err) => {
                let _ = response_sub.deregister();
                let _ = request_pub.deregister();
                return Err(err.into());
            }
        };
        Ok(ServiceClient {
            service: service.to_string(),
            record_gid,
            request_pub,
            response_sub,
            conn,
            next_request: 1,
            pending: Vec::new(),
            registered: true,
        })
    }

    pub fn gid(&self) -> u64 {
        self.record_gid
    }

    pub fn service(&self) -> &str {
        &self.service
    }

    /// True iff the router currently tracks at least one server for this
    /// service.
    pub fn is_service_available(&self) -> Result<bool, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let filter = EntityFilter::role(ParticipantRole::ServiceServer)
            .with_topic(glob_literal(&self.service));
        Ok(!self.conn.query(filter)?.is_empty())
    }

    /// Publish a request on the request topic; returns its correlation id.
    pub fn send_request(&mut self, request: &MessageValue) -> Result<RequestId, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let request_id = RequestId {
            client_gid: self.response_sub.gid(),
            seq: self.next_request,
        };
        self.request_pub.publish_envelope(request, Some(request_id), None)?;
        self.next_request += 1;
        self.pending.push(request_id.seq);
        Ok(request_id)
    }

    /// Oldest response for one of this client's outstanding requests.
    pub fn take_response(
        &mut self,
    ) -> Result<Option<(MessageValue, RequestId)>, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let Some((value, envelope)) = self.response_sub.take_envelope()? else {
            return Ok(None);
        };
        let Some(request_id) = envelope.request_id else {
            return Err(ParticipantError::MalformedCorrelation {
                topic: envelope.topic,
                detail: "response envelope without request_id".to_string(),
            });
        };
        if request_id.client_gid != self.response_sub.gid() {
            return Err(ParticipantError::MalformedCorrelation {
                topic: envelope.topic,
                detail: format!("response addressed to gid {}", request_id.client_gid),
            });
        }
        let Some(pos) = self.pending.iter().position(|seq| *seq == request_id.seq) else {
            return Err(ParticipantError::MalformedCorrelation {
                topic: envelope.topic,
                detail: format!("request seq {} is not outstanding", request_id.seq),
            });
        };
        self.pending.remove(pos);
        Ok(Some((value, request_id)))
    }

    pub fn deregister(&mut self) -> Result<(), ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        self.conn.deregister(self.record_gid)?;
        let _ = self.response_sub.deregister();
        let _ = self.request_pub.deregister();
        self.registered = false;
        Ok(())
    }
}

/// Serves a service: request subscriber + response publisher + a server
/// role record that makes the service visible to availability queries.
pub struct ServiceServer {
    service: String,
    record_gid: u64,
    request_sub: Subscriber,
    response_pub: Publisher,
    conn: RouterConn,
    /// Correlation ids taken, mapped to whether they have been answered.
    taken: HashMap<RequestId, bool>,
    registered: bool,
}

impl ServiceServer {
    pub fn create(
        conn: RouterConn,
        registry: &SchemaRegistry,
        service: &str,
        type_name: &str,
        name: &str,
    ) -> Result<Self, ParticipantError> {
        let endpoints = ServiceEndpoints::for_service(service);
        let mut request_sub = Subscriber::create(
            conn.clone(),
            registry,
            &endpoints.request_topic,
            &format!("{type_name}_Request"),
            name,
        )?;
        let mut response_pub = match Publisher::create(
            conn.clone(),
            registry,
            &endpoints.response_topic,
            &format!("{type_name}_Response"),
            name,
        ) {
            Ok(pub_) => pub_,
            Err(err) => {
                let _ = request_sub.deregister();
                return Err(err);
            }
        };
        // The server role record registers last: availability flips to true
        // only once the request/response pair is in place.
        let record_gid = match conn.register(ParticipantDecl {
            name: name.to_string(),
            role: ParticipantRole::ServiceServer,
            topic_or_service: service.to_string(),
            type_name: type_name.to_string(),
        }) {
            Ok(gid) => gid,
            Err(err) => {
                let _ = response_pub.deregister();
                let _ = request_sub.deregister();
                return Err(err.into());
            }
        };
        Ok(ServiceServer {
            service: service.to_string(),
            record_gid,
            request_sub,
            response_pub,
            conn,
            taken: HashMap::new(),
            registered: true,
        })
    }

    pub fn gid(&self) -> u64 {
        self.record_gid
    }

    pub fn service(&self) -> &str {
        &self.service
    }

    /// Oldest pending request with its correlation id.
    pub fn take_request(
        &mut self,
    ) -> Result<Option<(MessageValue, RequestId)>, ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        let Some((value, envelope)) = self.request_sub.take_envelope()? else {
            return Ok(None);
        };
        let Some(request_id) = envelope.request_id else {
            return Err(ParticipantError::MalformedCorrelation {
                topic: envelope.topic,
                detail: "request envelope without request_id".to_string(),
            });
        };
        self.taken.insert(request_id, false);
        Ok(Some((value, request_id)))
    }

    /// Publish a response for a previously taken request. Each request id
    /// may be answered at most once.
    pub fn send_response(
        &mut self,
        request_id: RequestId,
        response: &MessageValue,
    ) -> Result<(), ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        match self.taken.get(&request_id) {
            None => return Err(ParticipantError::UnknownRequestId(request_id)),
            Some(true) => return Err(ParticipantError::AlreadyResponded(request_id)),
            Some(false) => {}
        }
        self.response_pub.publish_envelope(
            response,
            Some(request_id),
            Some(request_id.client_gid),
        )?;
        self.taken.insert(request_id, true);
        Ok(())
    }

    pub fn deregister(&mut self) -> Result<(), ParticipantError> {
        if !self.registered {
            return Err(ParticipantError::NotRegistered);
        }
        // Role record first so availability flips before teardown.
        self.conn.deregister(self.record_gid)?;
        let _ = self.response_pub.deregister();
        let _ = self.request_sub.deregister();
        self.registered = false;
        Ok(())
    }
}
