//! Bridge between middleware topics and a non-middleware device speaking a
//! line protocol: `LED <color>` and `MOVE <linear> <angular>` over a local
//! socket, replies `OK` or `ERR`.
//!
//! The bridge subscribes to mapped topics, translates each message into
//! exactly one device command (or one counted error — never silence), and
//! forwards in publish order. A dead device is retried with backoff; the
//! in-flight command is kept until acknowledged, and everything else waits
//! in the router's stacks.

mod mock;

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::msgspec::{MessageValue, SchemaRegistry};
use crate::participant::{ParticipantError, Subscriber};
use crate::router::RouterConn;
use crate::transcript::{Transcript, TranscriptKind};

pub use mock::{DeviceLogEntry, MockDevice};

/// Colors the device accepts for `LED` commands.
pub const LED_COLORS: [&str; 11] = [
    "off", "pink", "purple", "blue", "lightblue", "cyan", "green", "yellow", "orange", "red",
    "white",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedColor {
    Off,
    Pink,
    Purple,
    Blue,
    Lightblue,
    Cyan,
    Green,
    Yellow,
    Orange,
    Red,
    White,
}

impl LedColor {
    pub fn as_str(self) -> &'static str {
        match self {
            LedColor::Off => "off",
            LedColor::Pink => "pink",
            LedColor::Purple => "purple",
            LedColor::Blue => "blue",
            LedColor::Lightblue => "lightblue",
            LedColor::Cyan => "cyan",
            LedColor::Green => "green",
            LedColor::Yellow => "yellow",
            LedColor::Orange => "orange",
            LedColor::Red => "red",
            LedColor::White => "white",
        }
    }
}

impl FromStr for LedColor {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "off" => LedColor::Off,
            "pink" => LedColor::Pink,
            "purple" => LedColor::Purple,
            "blue" => LedColor::Blue,
            "lightblue" => LedColor::Lightblue,
            "cyan" => LedColor::Cyan,
            "green" => LedColor::Green,
            "yellow" => LedColor::Yellow,
            "orange" => LedColor::Orange,
            "red" => LedColor::Red,
            "white" => LedColor::White,
            other => return Err(BridgeError::UnknownColor(other.to_string())),
        })
    }
}

impl fmt::Display for LedColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A command in the device protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeviceCommand {
    Led(LedColor),
    Move { linear_x: f64, angular_z: f64 },
}

impl fmt::Display for DeviceCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceCommand::Led(color) => write!(f, "LED {color}"),
            DeviceCommand::Move { linear_x, angular_z } => {
                write!(
                    f,
                    "MOVE {} {}",
                    crate::msgspec::float_text(*linear_x),
                    crate::msgspec::float_text(*angular_z)
                )
            }
        }
    }
}

/// Message-to-command translators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorId {
    /// `std_msgs/String` color name → `LED <color>`.
    LedColor,
    /// `geometry_msgs/Twist` → `MOVE <linear.x> <angular.z>`.
    TwistDrive,
}

impl TranslatorId {
    pub fn expected_type(self) -> &'static str {
        match self {
            TranslatorId::LedColor => "std_msgs/String",
            TranslatorId::TwistDrive => "geometry_msgs/Twist",
        }
    }
}

/// One (topic, type, translator) mapping of a bridge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeMapping {
    pub topic: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub translator: TranslatorId,
}

/// Topics to forward and the device endpoint to forward them to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeMap {
    pub device: String,
    pub mappings: Vec<BridgeMapping>,
}

impl BridgeMap {
    /// Topics must be distinct and each mapping's type must match its
    /// translator.
    pub fn validate(&self) -> Result<(), BridgeError> {
        for (i, mapping) in self.mappings.iter().enumerate() {
            if self.mappings[..i].iter().any(|m| m.topic == mapping.topic) {
                return Err(BridgeError::DuplicateTopic(mapping.topic.clone()));
            }
            let expected = mapping.translator.expected_type();
            if mapping.type_name != expected {
                return Err(BridgeError::TypeMismatch {
                    topic: mapping.topic.clone(),
                    expected: expected.to_string(),
                    found: mapping.type_name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("color `{0}` is not in the device palette")]
    UnknownColor(String),
    #[error("non-finite velocity component {0}")]
    NonFiniteVelocity(f64),
    #[error("message shape does not fit translator: {0}")]
    Shape(String),
    #[error("duplicate bridge topic `{0}`")]
    DuplicateTopic(String),
    #[error("bridge topic `{topic}` expects type `{expected}`, got `{found}`")]
    TypeMismatch { topic: String, expected: String, found: String },
    #[error(transparent)]
    Participant(#[from] ParticipantError),
    #[error("device i/o: {0}")]
    Device(String),
}

/// Translate a validated topic message into exactly one device command.
pub fn translate(value: &MessageValue, translator: TranslatorId) -> Result<DeviceCommand, BridgeError> {
    match translator {
        TranslatorId::LedColor => {
            let color = value
                .field("data")
                .and_then(|v| v.as_str())
                .ok_or_else(|| BridgeError::Shape("expected string field `data`".to_string()))?;
            Ok(DeviceCommand::Led(color.parse()?))
        }
        TranslatorId::TwistDrive => {
            let linear_x = value
                .field("linear")
                .and_then(|v| v.field("x"))
                .and_then(|v| v.as_f64())
                .ok_or_else(|| BridgeError::Shape("expected `linear.x`".to_string()))?;
            let angular_z = value
                .field("angular")
                .and_then(|v| v.field("z"))
                .and_then(|v| v.as_f64())
                .ok_or_else(|| BridgeError::Shape("expected `angular.z`".to_string()))?;
            for component in [linear_x, angular_z] {
                if !component.is_finite() {
                    return Err(BridgeError::NonFiniteVelocity(component));
                }
            }
            Ok(DeviceCommand::Move { linear_x, angular_z })
        }
    }
}

/// Bridge lifecycle events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeEvent {
    DeviceConnected,
    DeviceDisconnected { detail: String },
    Retrying { attempt: u32, backoff_ms: u64 },
    TranslateError { topic: String, detail: String },
    DeviceRejected { topic: String, command: String },
}

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    /// Subscriber poll cadence.
    pub poll_interval: Duration,
    /// First reconnect backoff; doubles up to `max_backoff`.
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        BridgeOptions {
            poll_interval: Duration::from_millis(10),
            initial_backoff: Duration::from_millis(50),
            max_backoff: Duration::from_secs(1),
        }
    }
}

/// Per-topic forward/error counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicCounters {
    pub topic: String,
    pub forwarded: u64,
    pub errors: u64,
}

struct TopicState {
    subscriber: Subscriber,
    translator: TranslatorId,
    forwarded: Arc<AtomicU64>,
    errors: Arc<AtomicU64>,
    /// Translated but unacknowledged command, kept across reconnects.
    in_flight: Option<DeviceCommand>,
}

/// Handle to a running bridge; stopping deregisters its subscribers.
pub struct BridgeHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    counters: Vec<(String, Arc<AtomicU64>, Arc<AtomicU64>)>,
    events_rx: Mutex<Option<mpsc::Receiver<BridgeEvent>>>,
}

impl BridgeHandle {
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }

    pub fn counters(&self) -> Vec<TopicCounters> {
        self.counters
            .iter()
            .map(|(topic, forwarded, errors)| TopicCounters {
                topic: topic.clone(),
                forwarded: forwarded.load(Ordering::SeqCst),
                errors: errors.load(Ordering::SeqCst),
            })
            .collect()
    }

    /// The live event stream; can be taken once.
    pub fn take_events(&self) -> Option<mpsc::Receiver<BridgeEvent>> {
        self.events_rx.lock().expect("bridge events poisoned").take()
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Register one subscriber per mapping and start forwarding to the device.
///
/// Subscribers register immediately (messages buffer at the router even
/// while the device is still unreachable); the device connection is
/// established and re-established in the bridge thread.
pub fn run_bridge(
    conn: RouterConn,
    registry: &SchemaRegistry,
    map: BridgeMap,
    options: BridgeOptions,
    transcript: Transcript,
) -> Result<BridgeHandle, BridgeError> {
    map.validate()?;

    let mut topics = Vec::with_capacity(map.mappings.len());
    let mut counters = Vec::with_capacity(map.mappings.len());
    for mapping in &map.mappings {
        let subscriber = Subscriber::create(
            conn.clone(),
            registry,
            &mapping.topic,
            &mapping.type_name,
            "bridge",
        )?;
        let forwarded = Arc::new(AtomicU64::new(0));
        let errors = Arc::new(AtomicU64::new(0));
        counters.push((mapping.topic.clone(), forwarded.clone(), errors.clone()));
        topics.push(TopicState {
            subscriber,
            translator: mapping.translator,
            forwarded,
            errors,
            in_flight: None,
        });
    }

    let stop = Arc::new(AtomicBool::new(false));
    let (events_tx, events_rx) = mpsc::channel();
    let thread_stop = stop.clone();
    let device = map.device.clone();
    let thread = std::thread::Builder::new()
        .name("stackmw-bridge".to_string())
        .spawn(move || bridge_main(topics, device, options, thread_stop, events_tx, transcript))
        .expect("spawn bridge thread");

    Ok(BridgeHandle {
        stop,
        thread: Some(thread),
        counters,
        events_rx: Mutex::new(Some(events_rx)),
    })
}

struct DeviceLink {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl DeviceLink {
    fn connect(endpoint: &str) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(endpoint)
            .map_err(|e| BridgeError::Device(format!("connect {endpoint}: {e}")))?;
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .map_err(|e| BridgeError::Device(e.to_string()))?;
        let reader = BufReader::new(
            stream.try_clone().map_err(|e| BridgeError::Device(e.to_string()))?,
        );
        Ok(DeviceLink { writer: stream, reader })
    }

    /// Send one command line and await the OK/ERR reply.
    fn send(&mut self, command: &DeviceCommand) -> Result<bool, BridgeError> {
        self.writer
            .write_all(format!("{command}\n").as_bytes())
            .map_err(|e| BridgeError::Device(e.to_string()))?;
        let mut reply = String::new();
        let n = self
            .reader
            .read_line(&mut reply)
            .map_err(|e| BridgeError::Device(e.to_string()))?;
        if n == 0 {
            return Err(BridgeError::Device("device closed the connection".to_string()));
        }
        Ok(reply.trim_end() == "OK")
    }
}

fn bridge_main(
    mut topics: Vec<TopicState>,
    device: String,
    options: BridgeOptions,
    stop: Arc<AtomicBool>,
    events: mpsc::Sender<BridgeEvent>,
    transcript: Transcript,
) {
    let mut link: Option<DeviceLink> = None;
    let mut backoff = options.initial_backoff;
    let mut attempt: u32 = 0;

    let emit = |event: BridgeEvent| {
        let json = match &event {
            BridgeEvent::DeviceConnected => r#"{"bridge":"connected"}"#.to_string(),
            BridgeEvent::DeviceDisconnected { detail } => {
                format!(r#"{{"bridge":"disconnected","detail":{}}}"#, json_string(detail))
            }
            BridgeEvent::Retrying { attempt, backoff_ms } => {
                format!(r#"{{"bridge":"retrying","attempt":{attempt},"backoff_ms":{backoff_ms}}}"#)
            }
            BridgeEvent::TranslateError { topic, detail } => format!(
                r#"{{"bridge":"translate_error","topic":{},"detail":{}}}"#,
                json_string(topic),
                json_string(detail)
            ),
            BridgeEvent::DeviceRejected { topic, command } => format!(
                r#"{{"bridge":"device_rejected","topic":{},"command":{}}}"#,
                json_string(topic),
                json_string(command)
            ),
        };
        transcript.line(now_wall_ms(), "bridge", TranscriptKind::Event, "-", &json);
        let _ = events.send(event);
    };

    while !stop.load(Ordering::SeqCst) {
        if link.is_none() {
            match DeviceLink::connect(&device) {
                Ok(connected) => {
                    link = Some(connected);
                    backoff = options.initial_backoff;
                    attempt = 0;
                    emit(BridgeEvent::DeviceConnected);
                }
                Err(err) => {
                    attempt += 1;
                    emit(BridgeEvent::Retrying {
                        attempt,
                        backoff_ms: backoff.as_millis() as u64,
                    });
                    let _ = err;
                    sleep_with_stop(backoff, &stop);
                    backoff = (backoff * 2).min(options.max_backoff);
                    continue;
                }
            }
        }

        let mut forwarded_any = false;
        let mut drop_link = false;
        for topic in topics.iter_mut() {
            loop {
                if stop.load(Ordering::SeqCst) || drop_link {
                    break;
                }
                if topic.in_flight.is_none() {
                    match topic.subscriber.get_message() {
                        Ok(Some(value)) => match translate(&value, topic.translator) {
                            Ok(command) => topic.in_flight = Some(command),
                            Err(err) => {
                                topic.errors.fetch_add(1, Ordering::SeqCst);
                                emit(BridgeEvent::TranslateError {
                                    topic: topic.subscriber.topic().to_string(),
                                    detail: err.to_string(),
                                });
                                continue;
                            }
                        },
                        Ok(None) => break,
                        Err(err) => {
                            topic.errors.fetch_add(1, Ordering::SeqCst);
                            emit(BridgeEvent::TranslateError {
                                topic: topic.subscriber.topic().to_string(),
                                detail: err.to_string(),
                            });
                            continue;
                        }
                    }
                }

                let command = topic.in_flight.as_ref().expect("in-flight command");
                match link.as_mut().expect("device link").send(command) {
                    Ok(true) => {
                        topic.forwarded.fetch_add(1, Ordering::SeqCst);
                        topic.in_flight = None;
                        forwarded_any = true;
                    }
                    Ok(false) => {
                        topic.errors.fetch_add(1, Ordering::SeqCst);
                        emit(BridgeEvent::DeviceRejected {
                            topic: topic.subscriber.topic().to_string(),
                            command: command.to_string(),
                        });
                        topic.in_flight = None;
                        forwarded_any = true;
                    }
                    Err(err) => {
                        emit(BridgeEvent::DeviceDisconnected { detail: err.to_string() });
                        drop_link = true;
                    }
                }
            }
        }

        if drop_link {
            link = None;
            continue;
        }
        if !forwarded_any {
            sleep_with_stop(options.poll_interval, &stop);
        }
    }

    for topic in topics.iter_mut() {
        let _ = topic.subscriber.deregister();
    }
}

fn sleep_with_stop(duration: Duration, stop: &AtomicBool) {
    let step = Duration::from_millis(10);
    let mut remaining = duration;
    while remaining > Duration::ZERO && !stop.load(Ordering::SeqCst) {
        let chunk = remaining.min(step);
        std::thread::sleep(chunk);
        remaining = remaining.saturating_sub(chunk);
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn now_wall_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .expect("clock before epoch")
        .as_millis() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn string_value(text: &str) -> MessageValue {
        MessageValue::record([("data", MessageValue::text(text))])
    }

    fn twist(linear_x: f64, angular_z: f64) -> MessageValue {
        let vec = |x: f64, z: f64| {
            MessageValue::record([
                ("x", MessageValue::Float(x)),
                ("y", MessageValue::Float(0.0)),
                ("z", MessageValue::Float(z)),
            ])
        };
        MessageValue::record([
            ("linear", vec(linear_x, 0.0)),
            ("angular", vec(0.0, angular_z)),
        ])
    }

    #[test]
    fn led_translation_accepts_palette_only() {
        let command = translate(&string_value("red"), TranslatorId::LedColor).unwrap();
        assert_eq!(command, DeviceCommand::Led(LedColor::Red));
        assert_eq!(command.to_string(), "LED red");

        let err = translate(&string_value("chartreuse"), TranslatorId::LedColor).unwrap_err();
        assert!(matches!(err, BridgeError::UnknownColor(_)));
    }

    #[test]
    fn every_palette_color_round_trips() {
        for color in LED_COLORS {
            let command = translate(&string_value(color), TranslatorId::LedColor).unwrap();
            assert_eq!(command.to_string(), format!("LED {color}"));
        }
    }

    #[test]
    fn zero_twist_moves_nowhere() {
        let command = translate(&twist(0.0, 0.0), TranslatorId::TwistDrive).unwrap();
        assert_eq!(command, DeviceCommand::Move { linear_x: 0.0, angular_z: 0.0 });
        assert_eq!(command.to_string(), "MOVE 0.0 0.0");
    }

    #[test]
    fn twist_uses_linear_x_and_angular_z_only() {
        let value = MessageValue::record([
            (
                "linear",
                MessageValue::record([
                    ("x", MessageValue::Float(0.1)),
                    ("y", MessageValue::Float(9.0)),
                    ("z", MessageValue::Float(9.0)),
                ]),
            ),
            (
                "angular",
                MessageValue::record([
                    ("x", MessageValue::Float(9.0)),
                    ("y", MessageValue::Float(9.0)),
                    ("z", MessageValue::Float(-0.5)),
                ]),
            ),
        ]);
        let command = translate(&value, TranslatorId::TwistDrive).unwrap();
        assert_eq!(command.to_string(), "MOVE 0.1 -0.5");
    }

    #[test]
    fn non_finite_velocity_rejected() {
        let err = translate(&twist(f64::NAN, 0.0), TranslatorId::TwistDrive).unwrap_err();
        assert!(matches!(err, BridgeError::NonFiniteVelocity(_)));
    }

    #[test]
    fn map_validation_catches_duplicates_and_type_mismatches() {
        let map = BridgeMap {
            device: "127.0.0.1:1".to_string(),
            mappings: vec![
                BridgeMapping {
                    topic: "led".to_string(),
                    type_name: "std_msgs/String".to_string(),
                    translator: TranslatorId::LedColor,
                },
                BridgeMapping {
                    topic: "led".to_string(),
                    type_name: "std_msgs/String".to_string(),
                    translator: TranslatorId::LedColor,
                },
            ],
        };
        assert!(matches!(map.validate(), Err(BridgeError::DuplicateTopic(_))));

        let map = BridgeMap {
            device: "127.0.0.1:1".to_string(),
            mappings: vec![BridgeMapping {
                topic: "drive".to_string(),
                type_name: "std_msgs/String".to_string(),
                translator: TranslatorId::TwistDrive,
            }],
        };
        assert!(matches!(map.validate(), Err(BridgeError::TypeMismatch { .. })));
    }
}
