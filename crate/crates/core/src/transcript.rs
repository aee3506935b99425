//! Machine-parseable run transcripts.
//!
//! One line per action: `<iso-time> <node> <PUB|RECV|EVENT> <topic> <payload-json>`.
//! The payload is always the last field and the only one that may contain
//! spaces.

use std::io::Write;
use std::sync::{Arc, Mutex};

use chrono::{TimeZone, Utc};

/// What a transcript line records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TranscriptKind {
    Pub,
    Recv,
    Event,
}

impl TranscriptKind {
    fn as_str(self) -> &'static str {
        match self {
            TranscriptKind::Pub => "PUB",
            TranscriptKind::Recv => "RECV",
            TranscriptKind::Event => "EVENT",
        }
    }
}

enum Sink {
    Stdout,
    Buffer(String),
    Null,
}

/// Shared, thread-safe transcript sink.
#[derive(Clone)]
pub struct Transcript {
    sink: Arc<Mutex<Sink>>,
}

impl Transcript {
    /// Write lines to stdout, flushed per line.
    pub fn stdout() -> Self {
        Transcript { sink: Arc::new(Mutex::new(Sink::Stdout)) }
    }

    /// Collect lines in memory; retrieve with [`contents`](Self::contents).
    pub fn buffer() -> Self {
        Transcript { sink: Arc::new(Mutex::new(Sink::Buffer(String::new()))) }
    }

    /// Discard lines.
    pub fn null() -> Self {
        Transcript { sink: Arc::new(Mutex::new(Sink::Null)) }
    }

    pub fn line(
        &self,
        timestamp_ms: u64,
        node: &str,
        kind: TranscriptKind,
        topic: &str,
        payload_json: &str,
    ) {
        let line = format!(
            "{} {} {} {} {}\n",
            iso_millis(timestamp_ms),
            node,
            kind.as_str(),
            topic,
            payload_json
        );
        let mut sink = self.sink.lock().expect("transcript poisoned");
        match &mut *sink {
            Sink::Stdout => {
                let stdout = std::io::stdout();
                let mut guard = stdout.lock();
                let _ = guard.write_all(line.as_bytes());
                let _ = guard.flush();
            }
            Sink::Buffer(buf) => buf.push_str(&line),
            Sink::Null => {}
        }
    }

    /// Buffered contents, if this is a buffering transcript.
    pub fn contents(&self) -> Option<String> {
        match &*self.sink.lock().expect("transcript poisoned") {
            Sink::Buffer(buf) => Some(buf.clone()),
            _ => None,
        }
    }
}

/// Milliseconds since the UNIX epoch as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
pub fn iso_millis(timestamp_ms: u64) -> String {
    let dt = Utc
        .timestamp_millis_opt(timestamp_ms as i64)
        .single()
        .unwrap_or_else(|| Utc.timestamp_millis_opt(0).single().expect("epoch is valid"));
    dt.format("%Y-%m-%dT%H:%M:%S%.3fZ").to_string()
}

/// A parsed transcript line, for harnesses that assert on runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    pub timestamp: String,
    pub node: String,
    pub kind: String,
    pub topic: String,
    pub payload: String,
}

/// Parse lines produced by [`Transcript::line`]. Malformed lines are
/// returned as errors rather than skipped.
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptLine>, String> {
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.is_empty() {
            continue;
        }
        let mut parts = raw.splitn(5, ' ');
        let (Some(timestamp), Some(node), Some(kind), Some(topic), Some(payload)) = (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        ) else {
            return Err(format!("line {}: expected 5 fields: {raw}", idx + 1));
        };
        lines.push(TranscriptLine {
            timestamp: timestamp.to_string(),
            node: node.to_string(),
            kind: kind.to_string(),
            topic: topic.to_string(),
            payload: payload.to_string(),
        });
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_five_fields_with_payload_last() {
        let t = Transcript::buffer();
        t.line(500, "talker_a", TranscriptKind::Pub, "topic_a", r#"{"data":"Hello World: 1"}"#);
        let text = t.contents().unwrap();
        assert_eq!(
            text,
            "1970-01-01T00:00:00.500Z talker_a PUB topic_a {\"data\":\"Hello World: 1\"}\n"
        );
        let parsed = parse_transcript(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].payload, r#"{"data":"Hello World: 1"}"#);
        assert_eq!(parsed[0].topic, "topic_a");
    }

    #[test]
    fn iso_format_is_stable() {
        assert_eq!(iso_millis(0), "1970-01-01T00:00:00.000Z");
        assert_eq!(iso_millis(5_000), "1970-01-01T00:00:05.000Z");
        assert_eq!(iso_millis(86_400_123), "1970-01-02T00:00:00.123Z");
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(parse_transcript("only three fields\n").is_err());
    }
}
