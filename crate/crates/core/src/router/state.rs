//! The router state machine. Single-threaded by construction; all
//! concurrency lives in [`super::handle`].

use std::collections::{BTreeMap, VecDeque};

use crate::msgspec::{from_yaml, SchemaRegistry};

use super::{
    Envelope, EntityFilter, GraphSummary, ParticipantDecl, ParticipantRecord, ParticipantRole,
    RouterConfig, RouterError, ServiceSummary, TopicSummary,
};

#[derive(Debug)]
struct SubscriberStack {
    queue: VecDeque<Envelope>,
    dropped: u64,
}

impl SubscriberStack {
    fn new() -> Self {
        SubscriberStack { queue: VecDeque::new(), dropped: 0 }
    }
}

#[derive(Debug)]
struct TopicState {
    type_name: String,
    /// Pending messages per subscriber gid, FIFO in publish order.
    stacks: BTreeMap<u64, SubscriberStack>,
    /// Drops from subscribers that already deregistered, kept so topic
    /// totals stay honest.
    retired_drops: u64,
}

/// Participant registry plus per-topic message stacks.
///
/// gids start at 1 and are never reused. Topic→type bindings exist while
/// at least one participant references the topic; the first registration
/// wins and later conflicting types are rejected.
#[derive(Debug)]
pub struct RouterState {
    registry: SchemaRegistry,
    capacity: usize,
    next_gid: u64,
    records: BTreeMap<u64, ParticipantRecord>,
    topics: BTreeMap<String, TopicState>,
    services: BTreeMap<String, String>,
    last_seq: BTreeMap<u64, u64>,
}

impl RouterState {
    /// Create a router with an empty participant registry.
    pub fn new(config: RouterConfig, registry: SchemaRegistry) -> Result<Self, RouterError> {
        if config.stack_capacity == 0 {
            return Err(RouterError::InvalidConfig(
                "stack_capacity must be at least 1".to_string(),
            ));
        }
        Ok(RouterState {
            registry,
            capacity: config.stack_capacity,
            next_gid: 1,
            records: BTreeMap::new(),
            topics: BTreeMap::new(),
            services: BTreeMap::new(),
            last_seq: BTreeMap::new(),
        })
    }

    pub fn schema_registry(&self) -> &SchemaRegistry {
        &self.registry
    }

    pub fn participant_count(&self) -> usize {
        self.records.len()
    }

    /// Register a participant and return its fresh gid.
    ///
    /// Topic roles resolve `type_name` directly; service roles resolve it
    /// through its `<type>_Request` / `<type>_Response` schema pair.
    pub fn register_participant(&mut self, decl: ParticipantDecl) -> Result<u64, RouterError> {
        let resolves = if decl.role.is_service() {
            self.registry.contains(&format!("{}_Request", decl.type_name))
                && self.registry.contains(&format!("{}_Response", decl.type_name))
        } else {
            self.registry.contains(&decl.type_name)
        };
        if !resolves {
            return Err(RouterError::UnknownType(decl.type_name));
        }

        if decl.role.is_service() {
            if let Some(bound) = self.services.get(&decl.topic_or_service) {
                if bound != &decl.type_name {
                    return Err(RouterError::TypeConflict {
                        topic: decl.topic_or_service,
                        bound: bound.clone(),
                        requested: decl.type_name,
                    });
                }
            }
        } else if let Some(topic) = self.topics.get(&decl.topic_or_service) {
            if topic.type_name != decl.type_name {
                return Err(RouterError::TypeConflict {
                    topic: decl.topic_or_service,
                    bound: topic.type_name.clone(),
                    requested: decl.type_name,
                });
            }
        }

        let gid = self.next_gid;
        self.next_gid += 1;

        match decl.role {
            ParticipantRole::Publisher => {
                self.topic_entry(&decl.topic_or_service, &decl.type_name);
            }
            ParticipantRole::Subscriber => {
                let topic = self.topic_entry(&decl.topic_or_service, &decl.type_name);
                topic.stacks.insert(gid, SubscriberStack::new());
            }
            ParticipantRole::ServiceServer | ParticipantRole::ServiceClient => {
                self.services
                    .entry(decl.topic_or_service.clone())
                    .or_insert_with(|| decl.type_name.clone());
            }
        }

        self.records.insert(
            gid,
            ParticipantRecord {
                gid,
                name: decl.name,
                role: decl.role,
                topic_or_service: decl.topic_or_service,
                type_name: decl.type_name,
            },
        );
        Ok(gid)
    }

    /// Remove a participant; subscriber buffers are discarded and empty
    /// topics/services disappear from the graph.
    pub fn deregister_participant(&mut self, gid: u64) -> Result<(), RouterError> {
        let record = self.records.remove(&gid).ok_or(RouterError::UnknownGid(gid))?;
        self.last_seq.remove(&gid);

        match record.role {
            ParticipantRole::Publisher | ParticipantRole::Subscriber => {
                let remove_topic = {
                    let Some(topic) = self.topics.get_mut(&record.topic_or_service) else {
                        return Ok(());
                    };
                    if record.role == ParticipantRole::Subscriber {
                        if let Some(stack) = topic.stacks.remove(&gid) {
                            topic.retired_drops += stack.dropped;
                        }
                    }
                    !self
                        .records
                        .values()
                        .any(|r| !r.role.is_service() && r.topic_or_service == record.topic_or_service)
                };
                if remove_topic {
                    self.topics.remove(&record.topic_or_service);
                }
            }
            ParticipantRole::ServiceServer | ParticipantRole::ServiceClient => {
                let in_use = self
                    .records
                    .values()
                    .any(|r| r.role.is_service() && r.topic_or_service == record.topic_or_service);
                if !in_use {
                    self.services.remove(&record.topic_or_service);
                }
            }
        }
        Ok(())
    }

    /// Append an envelope to every current subscriber stack on its topic
    /// (or only to `reply_to`'s stack when set). Returns the number of
    /// stacks appended to.
    pub fn route_publish(&mut self, envelope: Envelope) -> Result<usize, RouterError> {
        let sender = self
            .records
            .get(&envelope.sender_gid)
            .ok_or(RouterError::UnknownGid(envelope.sender_gid))?;
        if sender.role != ParticipantRole::Publisher || sender.topic_or_service != envelope.topic {
            return Err(RouterError::NotPublisher {
                gid: envelope.sender_gid,
                topic: envelope.topic.clone(),
            });
        }

        let last = self.last_seq.get(&envelope.sender_gid).copied().unwrap_or(0);
        if envelope.seq <= last {
            return Err(RouterError::NonMonotoneSeq {
                gid: envelope.sender_gid,
                seq: envelope.seq,
                last,
            });
        }

        let type_name = sender.type_name.clone();
        let schema = self
            .registry
            .get(&type_name)
            .ok_or_else(|| RouterError::UnknownType(type_name.clone()))?;
        match from_yaml(&self.registry, &schema, &envelope.payload) {
            Ok(_) => {}
            Err(err) => {
                return Err(RouterError::SchemaViolation {
                    type_name,
                    detail: err.to_string(),
                })
            }
        }

        self.last_seq.insert(envelope.sender_gid, envelope.seq);

        let topic = self
            .topics
            .get_mut(&envelope.topic)
            .expect("publisher registration created the topic");
        let mut delivered = 0;
        for (sub_gid, stack) in topic.stacks.iter_mut() {
            if let Some(target) = envelope.reply_to {
                if *sub_gid != target {
                    continue;
                }
            }
            if stack.queue.len() == self.capacity {
                stack.queue.pop_front();
                stack.dropped += 1;
            }
            stack.queue.push_back(envelope.clone());
            delivered += 1;
        }
        Ok(delivered)
    }

    /// Drain up to `max` oldest envelopes from a subscriber's stack.
    pub fn fetch_messages(&mut self, gid: u64, max: usize) -> Result<Vec<Envelope>, RouterError> {
        let record = self.records.get(&gid).ok_or(RouterError::UnknownGid(gid))?;
        if record.role != ParticipantRole::Subscriber {
            return Err(RouterError::NotSubscriber { gid });
        }
        let topic = self
            .topics
            .get_mut(&record.topic_or_service)
            .expect("subscriber registration created the topic");
        let stack = topic.stacks.get_mut(&gid).expect("subscriber owns a stack");
        let take = max.min(stack.queue.len());
        Ok(stack.queue.drain(..take).collect())
    }

    /// Snapshot of records matching the filter, ordered by gid.
    pub fn query_entities(
        &self,
        filter: &EntityFilter,
    ) -> Result<Vec<ParticipantRecord>, RouterError> {
        let name_glob = filter.name.as_deref().map(Glob::compile).transpose()?;
        let topic_glob = filter
            .topic_or_service
            .as_deref()
            .map(Glob::compile)
            .transpose()?;

        Ok(self
            .records
            .values()
            .filter(|r| filter.role.map_or(true, |role| r.role == role))
            .filter(|r| name_glob.as_ref().map_or(true, |g| g.matches(&r.name)))
            .filter(|r| topic_glob.as_ref().map_or(true, |g| g.matches(&r.topic_or_service)))
            .cloned()
            .collect())
    }

    /// Topics and services with participant counts, sorted by name.
    pub fn graph_summary(&self) -> GraphSummary {
        let mut topics = Vec::with_capacity(self.topics.len());
        for (name, topic) in &self.topics {
            let publishers = self
                .records
                .values()
                .filter(|r| r.role == ParticipantRole::Publisher && &r.topic_or_service == name)
                .count();
            let dropped =
                topic.retired_drops + topic.stacks.values().map(|s| s.dropped).sum::<u64>();
            topics.push(TopicSummary {
                name: name.clone(),
                type_name: topic.type_name.clone(),
                publishers,
                subscribers: topic.stacks.len(),
                dropped,
            });
        }

        let mut services = Vec::with_capacity(self.services.len());
        for (name, type_name) in &self.services {
            let count_role = |role: ParticipantRole| {
                self.records
                    .values()
                    .filter(|r| r.role == role && &r.topic_or_service == name)
                    .count()
            };
            services.push(ServiceSummary {
                name: name.clone(),
                type_name: type_name.clone(),
                servers: count_role(ParticipantRole::ServiceServer),
                clients: count_role(ParticipantRole::ServiceClient),
            });
        }
        GraphSummary { topics, services }
    }

    /// Envelopes currently buffered for a subscriber.
    pub fn buffered_len(&self, gid: u64) -> Result<usize, RouterError> {
        let record = self.records.get(&gid).ok_or(RouterError::UnknownGid(gid))?;
        if record.role != ParticipantRole::Subscriber {
            return Err(RouterError::NotSubscriber { gid });
        }
        Ok(self
            .topics
            .get(&record.topic_or_service)
            .and_then(|t| t.stacks.get(&gid))
            .map_or(0, |s| s.queue.len()))
    }

    /// Envelopes dropped to overflow for a subscriber.
    pub fn subscriber_drops(&self, gid: u64) -> Result<u64, RouterError> {
        let record = self.records.get(&gid).ok_or(RouterError::UnknownGid(gid))?;
        if record.role != ParticipantRole::Subscriber {
            return Err(RouterError::NotSubscriber { gid });
        }
        Ok(self
            .topics
            .get(&record.topic_or_service)
            .and_then(|t| t.stacks.get(&gid))
            .map_or(0, |s| s.dropped))
    }

    fn topic_entry(&mut self, name: &str, type_name: &str) -> &mut TopicState {
        self.topics.entry(name.to_string()).or_insert_with(|| TopicState {
            type_name: type_name.to_string(),
            stacks: BTreeMap::new(),
            retired_drops: 0,
        })
    }
}

/// Minimal glob matcher: `*`, `?`, and `[...]` character classes.
struct Glob {
    tokens: Vec<GlobToken>,
}

enum GlobToken {
    Any,
    One,
    Class(Vec<char>),
    Literal(char),
}

impl Glob {
    fn compile(pattern: &str) -> Result<Self, RouterError> {
        let mut tokens = Vec::new();
        let mut chars = pattern.chars().peekable();
        while let Some(ch) = chars.next() {
            match ch {
                '*' => tokens.push(GlobToken::Any),
                '?' => tokens.push(GlobToken::One),
                '[' => {
                    let mut class = Vec::new();
                    let mut closed = false;
                    for c in chars.by_ref() {
                        if c == ']' {
                            closed = true;
                            break;
                        }
                        class.push(c);
                    }
                    if !closed {
                        return Err(RouterError::MalformedPattern {
                            pattern: pattern.to_string(),
                            detail: "unclosed `[`".to_string(),
                        });
                    }
                    if class.is_empty() {
                        return Err(RouterError::MalformedPattern {
                            pattern: pattern.to_string(),
                            detail: "empty character class".to_string(),
                        });
                    }
                    tokens.push(GlobToken::Class(class));
                }
                '\\' => match chars.next() {
                    Some(c) => tokens.push(GlobToken::Literal(c)),
                    None => {
                        return Err(RouterError::MalformedPattern {
                            pattern: pattern.to_string(),
                            detail: "trailing escape".to_string(),
                        })
                    }
                },
                c => tokens.push(GlobToken::Literal(c)),
            }
        }
        Ok(Glob { tokens })
    }

    fn matches(&self, text: &str) -> bool {
        let chars: Vec<char> = text.chars().collect();
        self.match_at(0, &chars, 0)
    }

    fn match_at(&self, ti: usize, chars: &[char], ci: usize) -> bool {
        if ti == self.tokens.len() {
            return ci == chars.len();
        }
        match &self.tokens[ti] {
            GlobToken::Any => {
                (ci..=chars.len()).any(|skip| self.match_at(ti + 1, chars, skip))
            }
            GlobToken::One => ci < chars.len() && self.match_at(ti + 1, chars, ci + 1),
            GlobToken::Class(class) => {
                ci < chars.len() && class.contains(&chars[ci]) && self.match_at(ti + 1, chars, ci + 1)
            }
            GlobToken::Literal(c) => {
                ci < chars.len() && chars[ci] == *c && self.match_at(ti + 1, chars, ci + 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::{to_yaml, MessageValue};

    fn router() -> RouterState {
        RouterState::new(RouterConfig::default(), SchemaRegistry::with_standard_types()).unwrap()
    }

    fn small_router(capacity: usize) -> RouterState {
        RouterState::new(
            RouterConfig { stack_capacity: capacity },
            SchemaRegistry::with_standard_types(),
        )
        .unwrap()
    }

    fn decl(name: &str, role: ParticipantRole, topic: &str) -> ParticipantDecl {
        ParticipantDecl {
            name: name.to_string(),
            role,
            topic_or_service: topic.to_string(),
            type_name: "std_msgs/String".to_string(),
        }
    }

    fn hello(text: &str) -> String {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("std_msgs/String").unwrap();
        let value = MessageValue::record([("data", MessageValue::text(text))]);
        to_yaml(&reg, &schema, &value).unwrap()
    }

    #[test]
    fn fresh_router_is_empty_and_counts_from_one() {
        let mut r = router();
        assert_eq!(r.participant_count(), 0);
        assert!(r.graph_summary().is_empty());
        let gid = r
            .register_participant(decl("talker", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        assert_eq!(gid, 1);
    }

    #[test]
    fn zero_capacity_is_config_error() {
        let err = RouterState::new(
            RouterConfig { stack_capacity: 0 },
            SchemaRegistry::with_standard_types(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, RouterError::InvalidConfig(_)));
    }

    #[test]
    fn two_routers_have_independent_gid_spaces() {
        let mut a = router();
        let mut b = router();
        let ga = a
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let gb = b
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn same_topic_same_type_gets_distinct_gid() {
        let mut r = router();
        let g1 = r
            .register_participant(decl("p1", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let g2 = r
            .register_participant(decl("p2", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        assert_ne!(g1, g2);
    }

    #[test]
    fn type_conflict_rejected() {
        let mut r = router();
        r.register_participant(decl("p", ParticipantRole::Publisher, "topic_a")).unwrap();
        let mut conflicting = decl("s", ParticipantRole::Subscriber, "topic_a");
        conflicting.type_name = "geometry_msgs/Twist".to_string();
        let err = r.register_participant(conflicting).unwrap_err();
        assert!(matches!(err, RouterError::TypeConflict { .. }));
    }

    #[test]
    fn unknown_type_rejected() {
        let mut r = router();
        let mut bad = decl("p", ParticipantRole::Publisher, "topic_a");
        bad.type_name = "nope/Nope".to_string();
        assert!(matches!(
            r.register_participant(bad),
            Err(RouterError::UnknownType(_))
        ));
    }

    #[test]
    fn deregister_returns_router_to_empty() {
        let mut r = router();
        let gid = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        r.deregister_participant(gid).unwrap();
        assert_eq!(r.participant_count(), 0);
        assert!(r.graph_summary().is_empty());
        assert!(matches!(
            r.deregister_participant(gid),
            Err(RouterError::UnknownGid(_))
        ));
    }

    #[test]
    fn publish_fans_out_to_subscribers() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let s1 = r
            .register_participant(decl("s1", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        let s2 = r
            .register_participant(decl("s2", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();

        let delivered = r.route_publish(Envelope::new(p, "topic_a", hello("x"), 1)).unwrap();
        assert_eq!(delivered, 2);
        assert_eq!(r.buffered_len(s1).unwrap(), 1);
        assert_eq!(r.buffered_len(s2).unwrap(), 1);
    }

    #[test]
    fn publish_with_no_subscribers_is_not_stored() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let delivered = r.route_publish(Envelope::new(p, "topic_a", hello("x"), 1)).unwrap();
        assert_eq!(delivered, 0);
        // A subscriber arriving later never sees it.
        let s = r
            .register_participant(decl("s", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        assert_eq!(r.fetch_messages(s, 16).unwrap().len(), 0);
    }

    #[test]
    fn replayed_seq_rejected() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        r.route_publish(Envelope::new(p, "topic_a", hello("1"), 1)).unwrap();
        r.route_publish(Envelope::new(p, "topic_a", hello("2"), 2)).unwrap();
        let err = r
            .route_publish(Envelope::new(p, "topic_a", hello("again"), 2))
            .unwrap_err();
        assert!(matches!(err, RouterError::NonMonotoneSeq { seq: 2, last: 2, .. }));
    }

    #[test]
    fn invalid_payload_rejected() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let err = r
            .route_publish(Envelope::new(p, "topic_a", "speed: 3", 1))
            .unwrap_err();
        assert!(matches!(err, RouterError::SchemaViolation { .. }));
    }

    #[test]
    fn unknown_sender_and_wrong_topic_rejected() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        assert!(matches!(
            r.route_publish(Envelope::new(99, "topic_a", hello("x"), 1)),
            Err(RouterError::UnknownGid(99))
        ));
        assert!(matches!(
            r.route_publish(Envelope::new(p, "topic_b", hello("x"), 1)),
            Err(RouterError::NotPublisher { .. })
        ));
    }

    #[test]
    fn fetch_drains_fifo() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let s = r
            .register_participant(decl("s", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        for seq in 1..=3 {
            r.route_publish(Envelope::new(p, "topic_a", hello(&seq.to_string()), seq))
                .unwrap();
        }
        let first = r.fetch_messages(s, 2).unwrap();
        assert_eq!(first.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2]);
        let rest = r.fetch_messages(s, 2).unwrap();
        assert_eq!(rest.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![3]);
        assert!(r.fetch_messages(s, 2).unwrap().is_empty());
    }

    #[test]
    fn independent_buffers_per_subscriber() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let s1 = r
            .register_participant(decl("s1", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        let s2 = r
            .register_participant(decl("s2", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        for seq in 1..=3 {
            r.route_publish(Envelope::new(p, "topic_a", hello(&seq.to_string()), seq))
                .unwrap();
        }
        assert_eq!(r.fetch_messages(s1, 10).unwrap().len(), 3);
        assert_eq!(r.fetch_messages(s2, 10).unwrap().len(), 3);
    }

    #[test]
    fn overflow_drops_oldest_and_counts() {
        let mut r = small_router(2);
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let s = r
            .register_participant(decl("s", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        for seq in 1..=5 {
            r.route_publish(Envelope::new(p, "topic_a", hello(&seq.to_string()), seq))
                .unwrap();
        }
        assert_eq!(r.subscriber_drops(s).unwrap(), 3);
        let drained = r.fetch_messages(s, 10).unwrap();
        assert_eq!(drained.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(r.graph_summary().topics[0].dropped, 3);
    }

    #[test]
    fn service_availability_transitions() {
        let mut r = router();
        let filter = EntityFilter::role(ParticipantRole::ServiceServer)
            .with_topic("add_two_ints");
        assert!(r.query_entities(&filter).unwrap().is_empty());

        let mut server_decl = decl("server", ParticipantRole::ServiceServer, "add_two_ints");
        server_decl.type_name = "example_interfaces/AddTwoInts".to_string();
        let gid = r.register_participant(server_decl).unwrap();
        assert_eq!(r.query_entities(&filter).unwrap().len(), 1);

        r.deregister_participant(gid).unwrap();
        assert!(r.query_entities(&filter).unwrap().is_empty());
    }

    #[test]
    fn graph_summary_counts_fig1_shape() {
        let mut r = router();
        for topic in ["topic_a", "topic_b"] {
            r.register_participant(decl("pub", ParticipantRole::Publisher, topic)).unwrap();
            r.register_participant(decl("sub", ParticipantRole::Subscriber, topic)).unwrap();
        }
        let summary = r.graph_summary();
        assert_eq!(summary.topics.len(), 2);
        for topic in &summary.topics {
            assert_eq!((topic.publishers, topic.subscribers), (1, 1));
        }

        let mut sdecl = decl("srv", ParticipantRole::ServiceServer, "add_two_ints");
        sdecl.type_name = "example_interfaces/AddTwoInts".to_string();
        r.register_participant(sdecl).unwrap();
        let mut cdecl = decl("cli", ParticipantRole::ServiceClient, "add_two_ints");
        cdecl.type_name = "example_interfaces/AddTwoInts".to_string();
        r.register_participant(cdecl).unwrap();

        let summary = r.graph_summary();
        assert_eq!(summary.services.len(), 1);
        assert_eq!(summary.services[0].servers, 1);
        assert_eq!(summary.services[0].clients, 1);
    }

    #[test]
    fn query_patterns_and_errors() {
        let mut r = router();
        r.register_participant(decl("talker_a", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        r.register_participant(decl("talker_b", ParticipantRole::Publisher, "topic_b"))
            .unwrap();
        r.register_participant(decl("listener", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();

        let pubs = r
            .query_entities(&EntityFilter::role(ParticipantRole::Publisher))
            .unwrap();
        assert_eq!(pubs.len(), 2);

        let by_name = r
            .query_entities(&EntityFilter::default().with_name("talker_*"))
            .unwrap();
        assert_eq!(by_name.len(), 2);

        let by_class = r
            .query_entities(&EntityFilter::default().with_topic("topic_[ab]"))
            .unwrap();
        assert_eq!(by_class.len(), 3);

        let err = r
            .query_entities(&EntityFilter::default().with_name("bad[level"))
            .unwrap_err();
        assert!(matches!(err, RouterError::MalformedPattern { .. }));
    }

    #[test]
    fn reply_to_targets_a_single_subscriber() {
        let mut r = router();
        let p = r
            .register_participant(decl("p", ParticipantRole::Publisher, "topic_a"))
            .unwrap();
        let s1 = r
            .register_participant(decl("s1", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();
        let s2 = r
            .register_participant(decl("s2", ParticipantRole::Subscriber, "topic_a"))
            .unwrap();

        let mut env = Envelope::new(p, "topic_a", hello("secret"), 1);
        env.reply_to = Some(s2);
        assert_eq!(r.route_publish(env).unwrap(), 1);
        assert_eq!(r.buffered_len(s1).unwrap(), 0);
        assert_eq!(r.buffered_len(s2).unwrap(), 1);

        // Target gone: delivered to nobody.
        r.deregister_participant(s2).unwrap();
        let mut env = Envelope::new(p, "topic_a", hello("lost"), 2);
        env.reply_to = Some(s2);
        assert_eq!(r.route_publish(env).unwrap(), 0);
    }
}
