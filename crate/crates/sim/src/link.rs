//! How the simulator talks to the orchestrator: in-process calls, or NDJSON
//! over TCP with a sync barrier after every line so that replies land in
//! simulation time deterministically.

use lmo_core::scene::Boundary;
use lmo_orchestrator::server::{read_bounded_line, LineRead};
use lmo_orchestrator::wire::{parse_line, MAX_LINE_BYTES};
use lmo_orchestrator::{Message, Orchestrator, Outbound};
use std::io::{BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::Instant;

use crate::SimError;

pub trait OrchestratorLink {
    /// Area the orchestrator subscribes to.
    fn boundary(&self) -> Boundary;
    /// Delivers one line and returns everything the orchestrator sends back
    /// as a consequence, in order.
    fn exchange(&mut self, line: &str) -> Result<Vec<Message>, SimError>;
    /// Wall-clock milliseconds spent inside each exchange so far. Not
    /// deterministic, so never part of the log.
    fn processing_ms(&self) -> &[f64];
}

pub struct InProcLink {
    orch: Arc<Orchestrator>,
    wall: Vec<f64>,
}

impl InProcLink {
    pub fn new(orch: Arc<Orchestrator>) -> Self {
        Self { orch, wall: Vec::new() }
    }

    pub fn orchestrator(&self) -> &Arc<Orchestrator> {
        &self.orch
    }
}

impl OrchestratorLink for InProcLink {
    fn boundary(&self) -> Boundary {
        self.orch.config().scene.boundary
    }

    fn exchange(&mut self, line: &str) -> Result<Vec<Message>, SimError> {
        let start = Instant::now();
        let out = self
            .orch
            .handle_line(line)
            .into_iter()
            .map(|o| match o {
                Outbound::Broadcast(m) | Outbound::Reply(m) => m,
            })
            .collect();
        self.wall.push(start.elapsed().as_secs_f64() * 1000.0);
        Ok(out)
    }

    fn processing_ms(&self) -> &[f64] {
        &self.wall
    }
}

pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    boundary: Boundary,
    token: u64,
    buf: Vec<u8>,
    wall: Vec<f64>,
}

impl TcpLink {
    /// Connects and waits for the orchestrator's subscription request.
    pub fn connect(addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<Self, SimError> {
        let what = format!("{addr:?}");
        let writer = TcpStream::connect(&addr).map_err(|e| SimError::Connect(format!("{what}: {e}")))?;
        let _ = writer.set_nodelay(true);
        let reader = BufReader::new(writer.try_clone().map_err(|e| SimError::Connect(e.to_string()))?);
        let mut link = Self { reader, writer, boundary: zero_boundary(), token: 0, buf: Vec::new(), wall: Vec::new() };
        match link.read_message()? {
            Message::SubscriptionRequest { boundary } => link.boundary = boundary,
            other => return Err(SimError::Connect(format!("expected subscription_request, got {other:?}"))),
        }
        link.send(&Message::SubscriptionAck { accepted: true }.to_line())?;
        Ok(link)
    }

    fn send(&mut self, line: &str) -> Result<(), SimError> {
        let lost = |e: std::io::Error| SimError::Disconnected(e.to_string());
        self.writer.write_all(line.as_bytes()).map_err(lost)?;
        self.writer.write_all(b"\n").map_err(lost)
    }

    fn read_message(&mut self) -> Result<Message, SimError> {
        loop {
            match read_bounded_line(&mut self.reader, &mut self.buf, MAX_LINE_BYTES) {
                Ok(LineRead::Line) => {
                    let text = String::from_utf8_lossy(&self.buf);
                    if text.trim().is_empty() {
                        continue;
                    }
                    return parse_line(text.trim_end()).map_err(|r| SimError::Disconnected(format!("unreadable line: {}", r.detail)));
                }
                Ok(LineRead::Eof) => return Err(SimError::Disconnected("orchestrator closed the connection".into())),
                Ok(LineRead::TooLong) => return Err(SimError::Disconnected("overlong line from orchestrator".into())),
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(SimError::Disconnected(e.to_string())),
            }
        }
    }
}

fn zero_boundary() -> Boundary {
    Boundary { min_lat: 0.0, min_lon: 0.0, max_lat: 0.0, max_lon: 0.0 }
}

impl OrchestratorLink for TcpLink {
    fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn exchange(&mut self, line: &str) -> Result<Vec<Message>, SimError> {
        let start = Instant::now();
        self.token += 1;
        let token = self.token;
        self.send(line)?;
        self.send(&Message::Sync { token }.to_line())?;
        let mut out = Vec::new();
        loop {
            match self.read_message()? {
                Message::SyncAck { token: t } if t == token => break,
                Message::SyncAck { .. } | Message::SubscriptionRequest { .. } => {}
                m => out.push(m),
            }
        }
        self.wall.push(start.elapsed().as_secs_f64() * 1000.0);
        Ok(out)
    }

    fn processing_ms(&self) -> &[f64] {
        &self.wall
    }
}
