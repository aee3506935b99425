//! Threaded front end for [`RouterState`].
//!
//! The router runs on one thread and consumes an ordered command stream;
//! callers hold cloneable handles and block on per-command replies. No
//! shared mutable state crosses the thread boundary.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use crate::msgspec::SchemaRegistry;

use super::state::RouterState;
use super::{
    Envelope, EntityFilter, GraphSummary, ParticipantDecl, ParticipantRecord, RouterConfig,
    RouterError,
};

/// The router operations exposed to participants, in-process or remote.
///
/// Exactly the command set carried by the wire protocol.
pub trait RouterApi: Send + Sync {
    fn register(&self, decl: ParticipantDecl) -> Result<u64, RouterError>;
    fn deregister(&self, gid: u64) -> Result<(), RouterError>;
    fn publish(&self, envelope: Envelope) -> Result<usize, RouterError>;
    fn fetch(&self, gid: u64, max: usize) -> Result<Vec<Envelope>, RouterError>;
    fn query(&self, filter: EntityFilter) -> Result<Vec<ParticipantRecord>, RouterError>;
    fn graph(&self) -> Result<GraphSummary, RouterError>;
}

/// Shared connection to some router implementation.
pub type RouterConn = Arc<dyn RouterApi>;

enum Command {
    Register(ParticipantDecl, Reply<u64>),
    Deregister(u64, Reply<()>),
    Publish(Envelope, Reply<usize>),
    Fetch(u64, usize, Reply<Vec<Envelope>>),
    Query(EntityFilter, Reply<Vec<ParticipantRecord>>),
    Graph(Reply<GraphSummary>),
    SubscriberDrops(u64, Reply<u64>),
}

type Reply<T> = mpsc::SyncSender<Result<T, RouterError>>;

/// Cloneable handle to a router thread. The thread exits when the last
/// handle is dropped.
#[derive(Clone)]
pub struct RouterHandle {
    tx: mpsc::Sender<Command>,
}

impl RouterHandle {
    /// Spawn a router thread with its own participant registry.
    pub fn spawn(config: RouterConfig, registry: SchemaRegistry) -> Result<Self, RouterError> {
        let mut state = RouterState::new(config, registry)?;
        let (tx, rx) = mpsc::channel::<Command>();
        thread::Builder::new()
            .name("stackmw-router".to_string())
            .spawn(move || {
                while let Ok(command) = rx.recv() {
                    dispatch(&mut state, command);
                }
            })
            .expect("spawn router thread");
        Ok(RouterHandle { tx })
    }

    /// Buffer-overflow drop count for a subscriber (in-process only; not
    /// part of the wire command set).
    pub fn subscriber_drops(&self, gid: u64) -> Result<u64, RouterError> {
        self.call(|reply| Command::SubscriberDrops(gid, reply))
    }

    fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, RouterError> {
        let (reply_tx, reply_rx) = mpsc::sync_channel(1);
        self.tx
            .send(make(reply_tx))
            .map_err(|_| RouterError::Unavailable("router thread stopped".to_string()))?;
        reply_rx
            .recv()
            .map_err(|_| RouterError::Unavailable("router thread stopped".to_string()))?
    }
}

fn dispatch(state: &mut RouterState, command: Command) {
    match command {
        Command::Register(decl, reply) => {
            let _ = reply.send(state.register_participant(decl));
        }
        Command::Deregister(gid, reply) => {
            let _ = reply.send(state.deregister_participant(gid));
        }
        Command::Publish(envelope, reply) => {
            let _ = reply.send(state.route_publish(envelope));
        }
        Command::Fetch(gid, max, reply) => {
            let _ = reply.send(state.fetch_messages(gid, max));
        }
        Command::Query(filter, reply) => {
            let _ = reply.send(state.query_entities(&filter));
        }
        Command::Graph(reply) => {
            let _ = reply.send(Ok(state.graph_summary()));
        }
        Command::SubscriberDrops(gid, reply) => {
            let _ = reply.send(state.subscriber_drops(gid));
        }
    }
}

impl RouterApi for RouterHandle {
    fn register(&self, decl: ParticipantDecl) -> Result<u64, RouterError> {
        self.call(|reply| Command::Register(decl, reply))
    }

    fn deregister(&self, gid: u64) -> Result<(), RouterError> {
        self.call(|reply| Command::Deregister(gid, reply))
    }

    fn publish(&self, envelope: Envelope) -> Result<usize, RouterError> {
        self.call(|reply| Command::Publish(envelope, reply))
    }

    fn fetch(&self, gid: u64, max: usize) -> Result<Vec<Envelope>, RouterError> {
        self.call(|reply| Command::Fetch(gid, max, reply))
    }

    fn query(&self, filter: EntityFilter) -> Result<Vec<ParticipantRecord>, RouterError> {
        self.call(|reply| Command::Query(filter, reply))
    }

    fn graph(&self) -> Result<GraphSummary, RouterError> {
        self.call(Command::Graph)
    }
}
