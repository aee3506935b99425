//! Node host: runs each node on its own isolated worker thread that talks
//! to the router exclusively through commands, with lifecycle supervision.
//!
//! A node's behavior has two phases: a setup closure that registers its
//! participants (run while `spawn` blocks, so registrations land in spawn
//! order) and a run closure that loops on the worker clock. A panic or
//! error inside a node becomes a `failed` event; its leftover participants
//! are deregistered, and the router and sibling nodes are unaffected.
//!
//! With a seeded virtual clock ([`Clock::virtual_seeded`]) a run is fully
//! deterministic: workers execute in lockstep, one at a time.

pub mod behavior;
pub mod clock;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msgspec::SchemaRegistry;
use crate::participant::ParticipantError;
use crate::router::{
    Envelope, EntityFilter, GraphSummary, ParticipantDecl, ParticipantRecord, RouterApi,
    RouterConn, RouterError,
};
use crate::transcript::{Transcript, TranscriptKind};

pub use clock::{Clock, WorkerClock, WorkerWaker};

/// Declarative description of a node: a behavior identifier plus its
/// parameters. Built-in behaviors: `talker`, `listener`, `service_server`,
/// `service_client`, `crasher`; any other identifier resolves against
/// custom behaviors registered on the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub behavior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub type_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    /// Stop after this many publishes/requests (talker, crasher,
    /// service_client).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
    /// crasher only: panic upon reaching this message number (0 = never).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash_after: Option<u64>,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, behavior: impl Into<String>) -> Self {
        NodeSpec {
            name: name.into(),
            behavior: behavior.into(),
            topic: None,
            service: None,
            type_name: None,
            period_ms: None,
            payload: None,
            count: None,
            crash_after: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeEventKind {
    Started,
    Stopped,
    Failed,
}

impl NodeEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeEventKind::Started => "started",
            NodeEventKind::Stopped => "stopped",
            NodeEventKind::Failed => "failed",
        }
    }
}

/// Lifecycle event for one node. `Failed` always carries a non-empty
/// detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub node: String,
    pub kind: NodeEventKind,
    pub detail: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),
    #[error("invalid node spec for `{node}`: {detail}")]
    InvalidSpec { node: String, detail: String },
    #[error(transparent)]
    Participant(#[from] ParticipantError),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("{0}")]
    Behavior(String),
}

/// Second phase of a node: the loop body.
pub type NodeRun = Box<dyn FnOnce(&mut NodeCtx) -> Result<(), NodeError> + Send>;
/// First phase of a node: registers participants, returns the loop.
pub type NodeSetup = Box<dyn FnOnce(&mut NodeCtx) -> Result<NodeRun, NodeError> + Send>;
/// Builds a node's setup phase from its spec (custom behaviors).
pub type BehaviorFactory = Box<dyn Fn(&NodeSpec) -> Result<NodeSetup, NodeError> + Send + Sync>;

/// Wraps the host's router connection and records the gids registered
/// through it, so the supervisor can deregister whatever a dead node left
/// behind.
struct TrackingConn {
    inner: RouterConn,
    owned: Mutex<BTreeSet<u64>>,
}

impl TrackingConn {
    fn cleanup(&self) {
        let gids: Vec<u64> = {
            let mut owned = self.owned.lock().expect("tracker poisoned");
            // Reverse order: service role records (registered last) go
            // first, flipping availability before topic teardown.
            let gids = owned.iter().rev().copied().collect();
            owned.clear();
            gids
        };
        for gid in gids {
            let _ = self.inner.deregister(gid);
        }
    }
}

impl RouterApi for TrackingConn {
    fn register(&self, decl: ParticipantDecl) -> Result<u64, RouterError> {
        let gid = self.inner.register(decl)?;
        self.owned.lock().expect("tracker poisoned").insert(gid);
        Ok(gid)
    }

    fn deregister(&self, gid: u64) -> Result<(), RouterError> {
        self.inner.deregister(gid)?;
        self.owned.lock().expect("tracker poisoned").remove(&gid);
        Ok(())
    }

    fn publish(&self, envelope: Envelope) -> Result<usize, RouterError> {
        self.inner.publish(envelope)
    }

    fn fetch(&self, gid: u64, max: usize) -> Result<Vec<Envelope>, RouterError> {
        self.inner.fetch(gid, max)
    }

    fn query(&self, filter: EntityFilter) -> Result<Vec<ParticipantRecord>, RouterError> {
        self.inner.query(filter)
    }

    fn graph(&self) -> Result<GraphSummary, RouterError> {
        self.inner.graph()
    }
}

/// Everything a node behavior may touch. Confined to its node thread.
pub struct NodeCtx {
    name: String,
    conn: Arc<TrackingConn>,
    registry: SchemaRegistry,
    worker: WorkerClock,
    transcript: Transcript,
}

impl NodeCtx {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Router connection scoped to this node (registrations are tracked).
    pub fn conn(&self) -> RouterConn {
        self.conn.clone()
    }

    pub fn registry(&self) -> &SchemaRegistry {
        &self.registry
    }

    pub fn now_ms(&self) -> u64 {
        self.worker.now_ms()
    }

    pub fn should_run(&self) -> bool {
        self.worker.should_run()
    }

    /// Sleep until an absolute deadline; `false` means the node was asked
    /// to stop.
    pub fn sleep_until(&self, deadline_ms: u64) -> bool {
        self.worker.sleep_until(deadline_ms)
    }

    /// Write a transcript line stamped with the node clock.
    pub fn log(&self, kind: TranscriptKind, topic: &str, payload_json: &str) {
        self.transcript.line(self.now_ms(), &self.name, kind, topic, payload_json);
    }
}

struct NodeRuntime {
    stop: Arc<AtomicBool>,
    waker: WorkerWaker,
    thread: Option<JoinHandle<()>>,
}

struct StartGate {
    released: Mutex<bool>,
    cv: Condvar,
}

impl StartGate {
    fn wait(&self) {
        let mut released = self.released.lock().expect("gate poisoned");
        while !*released {
            released = self.cv.wait(released).expect("gate poisoned");
        }
    }

    fn release(&self) {
        *self.released.lock().expect("gate poisoned") = true;
        self.cv.notify_all();
    }
}

/// Spawns and supervises nodes against one router connection.
pub struct Host {
    conn: RouterConn,
    registry: SchemaRegistry,
    clock: Clock,
    transcript: Transcript,
    gate: Arc<StartGate>,
    nodes: Mutex<Vec<(String, NodeRuntime)>>,
    factories: Mutex<HashMap<String, BehaviorFactory>>,
    events_tx: mpsc::Sender<NodeEvent>,
    events_rx: Mutex<Option<mpsc::Receiver<NodeEvent>>>,
    events_log: Arc<Mutex<Vec<NodeEvent>>>,
}

impl Host {
    pub fn new(
        conn: RouterConn,
        registry: SchemaRegistry,
        clock: Clock,
        transcript: Transcript,
    ) -> Self {
        let (events_tx, events_rx) = mpsc::channel();
        Host {
            conn,
            registry,
            clock,
            transcript,
            gate: Arc::new(StartGate { released: Mutex::new(false), cv: Condvar::new() }),
            nodes: Mutex::new(Vec::new()),
            factories: Mutex::new(HashMap::new()),
            events_tx,
            events_rx: Mutex::new(Some(events_rx)),
            events_log: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    /// Make a custom behavior id available to [`spawn`](Self::spawn).
    pub fn register_behavior(&self, id: &str, factory: BehaviorFactory) {
        self.factories
            .lock()
            .expect("factories poisoned")
            .insert(id.to_string(), factory);
    }

    /// Spawn a node from its spec. Blocks until the node's participants
    /// are registered and its `started` event is emitted.
    pub fn spawn(&self, spec: NodeSpec) -> Result<(), NodeError> {
        let setup = match behavior::build_builtin(&spec)? {
            Some(setup) => setup,
            None => {
                let factories = self.factories.lock().expect("factories poisoned");
                let factory = factories
                    .get(&spec.behavior)
                    .ok_or_else(|| NodeError::UnknownBehavior(spec.behavior.clone()))?;
                factory(&spec)?
            }
        };
        self.spawn_with(&spec.name, setup)
    }

    /// Spawn a node from code.
    pub fn spawn_with(&self, name: &str, setup: NodeSetup) -> Result<(), NodeError> {
        {
            let nodes = self.nodes.lock().expect("nodes poisoned");
            if nodes.iter().any(|(n, _)| n == name) {
                return Err(NodeError::DuplicateName(name.to_string()));
            }
        }

        let stop = Arc::new(AtomicBool::new(false));
        let worker = self.clock.register_worker(name, stop.clone());
        let waker = worker.waker();
        let ctx = NodeCtx {
            name: name.to_string(),
            conn: Arc::new(TrackingConn {
                inner: self.conn.clone(),
                owned: Mutex::new(BTreeSet::new()),
            }),
            registry: self.registry.clone(),
            worker,
            transcript: self.transcript.clone(),
        };

        let (ready_tx, ready_rx) = mpsc::sync_channel::<Result<(), NodeError>>(1);
        let gate = self.gate.clone();
        let events_tx = self.events_tx.clone();
        let events_log = self.events_log.clone();

        let thread = std::thread::Builder::new()
            .name(format!("stackmw-node-{name}"))
            .spawn(move || node_main(ctx, setup, ready_tx, gate, events_tx, events_log))
            .expect("spawn node thread");

        match ready_rx.recv() {
            Ok(Ok(())) => {
                self.nodes.lock().expect("nodes poisoned").push((
                    name.to_string(),
                    NodeRuntime { stop, waker, thread: Some(thread) },
                ));
                Ok(())
            }
            Ok(Err(err)) => {
                let _ = thread.join();
                Err(err)
            }
            Err(_) => {
                let _ = thread.join();
                Err(NodeError::Behavior("node thread died during setup".to_string()))
            }
        }
    }

    /// Release all spawned nodes into their run loops.
    pub fn start(&self) {
        self.gate.release();
    }

    /// Drive a seeded run for `duration_ms` of virtual time; on a wall
    /// clock, simply sleep that long.
    pub fn run_for(&self, duration_ms: u64) {
        match &self.clock {
            Clock::Virtual(_) => {
                let t_end = self.clock.now_ms() + duration_ms;
                self.clock.run_until(t_end);
            }
            Clock::Wall => {
                std::thread::sleep(std::time::Duration::from_millis(duration_ms));
            }
        }
    }

    /// Stop one node and wait for it to finish.
    pub fn stop_node(&self, name: &str) -> Result<(), NodeError> {
        let runtime = {
            let mut nodes = self.nodes.lock().expect("nodes poisoned");
            let pos = nodes
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| NodeError::UnknownNode(name.to_string()))?;
            nodes.remove(pos).1
        };
        stop_runtime(runtime);
        Ok(())
    }

    /// Stop every node in spawn order, joining each before the next.
    pub fn shutdown(&self) {
        // Nodes may still be gate-parked if the run never started.
        self.gate.release();
        loop {
            let runtime = {
                let mut nodes = self.nodes.lock().expect("nodes poisoned");
                if nodes.is_empty() {
                    break;
                }
                nodes.remove(0).1
            };
            stop_runtime(runtime);
        }
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes
            .lock()
            .expect("nodes poisoned")
            .iter()
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// The live event stream; can be taken once.
    pub fn take_events(&self) -> Option<mpsc::Receiver<NodeEvent>> {
        self.events_rx.lock().expect("events poisoned").take()
    }

    /// Every event emitted so far, in emission order.
    pub fn events_log(&self) -> Vec<NodeEvent> {
        self.events_log.lock().expect("events poisoned").clone()
    }
}

fn stop_runtime(runtime: NodeRuntime) {
    runtime.stop.store(true, Ordering::SeqCst);
    runtime.waker.interrupt();
    if let Some(thread) = runtime.thread {
        let _ = thread.join();
    }
}

fn node_main(
    mut ctx: NodeCtx,
    setup: NodeSetup,
    ready_tx: mpsc::SyncSender<Result<(), NodeError>>,
    gate: Arc<StartGate>,
    events_tx: mpsc::Sender<NodeEvent>,
    events_log: Arc<Mutex<Vec<NodeEvent>>>,
) {
    let emit = |ctx: &NodeCtx, kind: NodeEventKind, detail: &str| {
        let event = NodeEvent {
            node: ctx.name.clone(),
            kind,
            detail: detail.to_string(),
            timestamp_ms: ctx.now_ms(),
        };
        ctx.log(
            TranscriptKind::Event,
            "-",
            &format!(
                "{{\"kind\":\"{}\",\"detail\":{}}}",
                kind.as_str(),
                serde_json::to_string(detail).expect("string serializes")
            ),
        );
        events_log.lock().expect("events poisoned").push(event.clone());
        let _ = events_tx.send(event);
    };

    let run = match setup(&mut ctx) {
        Ok(run) => run,
        Err(err) => {
            ctx.conn.cleanup();
            let _ = ready_tx.send(Err(err));
            return;
        }
    };
    emit(&ctx, NodeEventKind::Started, "");
    let _ = ready_tx.send(Ok(()));

    gate.wait();

    let result = catch_unwind(AssertUnwindSafe(|| run(&mut ctx)));

    // Whatever the node left registered goes away before the verdict, so a
    // dead server can never satisfy an availability query.
    ctx.conn.cleanup();

    match result {
        Ok(Ok(())) => emit(&ctx, NodeEventKind::Stopped, ""),
        Ok(Err(err)) => emit(&ctx, NodeEventKind::Failed, &err.to_string()),
        Err(panic) => emit(&ctx, NodeEventKind::Failed, &panic_message(panic.as_ref())),
    }
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "node panicked".to_string()
    }
}
