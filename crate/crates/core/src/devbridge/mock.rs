//! Line-protocol mock device: stands in for the real robot during tests
//! and demos. Accepts `LED <color>` / `MOVE <lin> <ang>` lines, replies
//! `OK` (or `ERR` for malformed lines), and keeps an inspectable log.

use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::BridgeError;

/// One accepted command (or rejected line) in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceLogEntry {
    Led(String),
    Move(f64, f64),
    Malformed(String),
}

#[derive(Default)]
struct DeviceState {
    log: Vec<DeviceLogEntry>,
    led: Option<String>,
}

/// A running mock device bound to a local socket.
pub struct MockDevice {
    local_addr: SocketAddr,
    state: Arc<Mutex<DeviceState>>,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
    sessions: Arc<Mutex<Vec<TcpStream>>>,
}

impl MockDevice {
    /// Bind and start serving. Use port 0 for an ephemeral port.
    pub fn listen(endpoint: &str) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(endpoint)
            .map_err(|e| BridgeError::Device(format!("bind {endpoint}: {e}")))?;
        let local_addr = listener.local_addr().map_err(|e| BridgeError::Device(e.to_string()))?;

        let state: Arc<Mutex<DeviceState>> = Arc::new(Mutex::new(DeviceState::default()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let sessions: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));

        let accept_state = state.clone();
        let accept_shutdown = shutdown.clone();
        let accept_sessions = sessions.clone();
        let accept_thread = std::thread::Builder::new()
            .name("stackmw-mock-device".to_string())
            .spawn(move || {
                for stream in listener.incoming() {
                    if accept_shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    if let Ok(clone) = stream.try_clone() {
                        accept_sessions.lock().expect("sessions poisoned").push(clone);
                    }
                    let state = accept_state.clone();
                    let _ = std::thread::Builder::new()
                        .name("stackmw-mock-device-conn".to_string())
                        .spawn(move || serve_connection(stream, state));
                }
            })
            .expect("spawn mock device thread");

        Ok(MockDevice {
            local_addr,
            state,
            shutdown,
            accept_thread: Some(accept_thread),
            sessions,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn endpoint(&self) -> String {
        self.local_addr.to_string()
    }

    /// Snapshot of everything received so far, in arrival order.
    pub fn log(&self) -> Vec<DeviceLogEntry> {
        self.state.lock().expect("device state poisoned").log.clone()
    }

    /// Colors of all accepted `LED` commands, in order.
    pub fn led_log(&self) -> Vec<String> {
        self.log()
            .into_iter()
            .filter_map(|entry| match entry {
                DeviceLogEntry::Led(color) => Some(color),
                _ => None,
            })
            .collect()
    }

    /// Velocity pairs of all accepted `MOVE` commands, in order.
    pub fn move_log(&self) -> Vec<(f64, f64)> {
        self.log()
            .into_iter()
            .filter_map(|entry| match entry {
                DeviceLogEntry::Move(lin, ang) => Some((lin, ang)),
                _ => None,
            })
            .collect()
    }

    /// Current LED state: the last accepted color.
    pub fn led_state(&self) -> Option<String> {
        self.state.lock().expect("device state poisoned").led.clone()
    }

    pub fn stop(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.local_addr);
        for stream in self.sessions.lock().expect("sessions poisoned").drain(..) {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(thread) = self.accept_thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for MockDevice {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_connection(stream: TcpStream, state: Arc<Mutex<DeviceState>>) {
    let mut writer = match stream.try_clone() {
        Ok(writer) => writer,
        Err(_) => return,
    };
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { return };
        let reply = match parse_line(&line) {
            Some(entry) => {
                let mut state = state.lock().expect("device state poisoned");
                if let DeviceLogEntry::Led(color) = &entry {
                    state.led = Some(color.clone());
                }
                state.log.push(entry);
                "OK\n"
            }
            None => {
                let mut state = state.lock().expect("device state poisoned");
                state.log.push(DeviceLogEntry::Malformed(line.clone()));
                "ERR\n"
            }
        };
        if writer.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}

fn parse_line(line: &str) -> Option<DeviceLogEntry> {
    let mut parts = line.split_whitespace();
    match parts.next()? {
        "LED" => {
            let color = parts.next()?;
            if parts.next().is_some() {
                return None;
            }
            Some(DeviceLogEntry::Led(color.to_string()))
        }
        "MOVE" => {
            let lin: f64 = parts.next()?.parse().ok()?;
            let ang: f64 = parts.next()?.parse().ok()?;
            if parts.next().is_some() || !lin.is_finite() || !ang.is_finite() {
                return None;
            }
            Some(DeviceLogEntry::Move(lin, ang))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};

    fn send_lines(endpoint: &str, lines: &[&str]) -> Vec<String> {
        let mut stream = TcpStream::connect(endpoint).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut replies = Vec::new();
        for line in lines {
            stream.write_all(format!("{line}\n").as_bytes()).unwrap();
            let mut reply = String::new();
            reader.read_line(&mut reply).unwrap();
            replies.push(reply.trim_end().to_string());
        }
        replies
    }

    #[test]
    fn led_lines_are_logged_and_acked() {
        let device = MockDevice::listen("127.0.0.1:0").unwrap();
        let replies = send_lines(&device.endpoint(), &["LED red"]);
        assert_eq!(replies, vec!["OK"]);
        assert_eq!(device.log(), vec![DeviceLogEntry::Led("red".to_string())]);
        assert_eq!(device.led_state(), Some("red".to_string()));
    }

    #[test]
    fn move_lines_parse_floats_exactly() {
        let device = MockDevice::listen("127.0.0.1:0").unwrap();
        let replies = send_lines(&device.endpoint(), &["MOVE 0.1 -0.5"]);
        assert_eq!(replies, vec!["OK"]);
        // Parse oracle: independent float parse of the same text.
        let expected = ("0.1".parse::<f64>().unwrap(), "-0.5".parse::<f64>().unwrap());
        assert_eq!(device.move_log(), vec![expected]);
    }

    #[test]
    fn malformed_lines_get_err_and_are_logged() {
        let device = MockDevice::listen("127.0.0.1:0").unwrap();
        let replies = send_lines(
            &device.endpoint(),
            &["JUMP", "LED", "LED red extra", "MOVE 1.0", "MOVE a b"],
        );
        assert_eq!(replies, vec!["ERR"; 5]);
        assert_eq!(device.log().len(), 5);
        assert!(device
            .log()
            .iter()
            .all(|entry| matches!(entry, DeviceLogEntry::Malformed(_))));
        assert_eq!(device.led_state(), None);
    }
}
