//! TCP transport: one thread per connection, NDJSON in both directions.

use log::{info, warn};
use parking_lot::Mutex;
use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::service::{Orchestrator, Outbound};
use crate::wire::{RejectKind, MAX_LINE_BYTES};

#[derive(Debug, PartialEq, Eq)]
pub enum LineRead {
    Line,
    Eof,
    TooLong,
}

/// Reads up to the next LF into `buf` (LF and a trailing CR stripped),
/// giving up once more than `max` bytes have arrived without one.
pub fn read_bounded_line(r: &mut impl BufRead, buf: &mut Vec<u8>, max: usize) -> io::Result<LineRead> {
    buf.clear();
    loop {
        let avail = r.fill_buf()?;
        if avail.is_empty() {
            return Ok(if buf.is_empty() { LineRead::Eof } else { LineRead::Line });
        }
        match avail.iter().position(|&b| b == b'\n') {
            Some(i) => {
                buf.extend_from_slice(&avail[..i]);
                r.consume(i + 1);
                if buf.last() == Some(&b'\r') {
                    buf.pop();
                }
                return Ok(if buf.len() > max { LineRead::TooLong } else { LineRead::Line });
            }
            None => {
                let n = avail.len();
                buf.extend_from_slice(avail);
                r.consume(n);
                if buf.len() > max {
                    return Ok(LineRead::TooLong);
                }
            }
        }
    }
}

/// Write halves of all open connections.
#[derive(Default)]
pub struct Hub {
    conns: Mutex<BTreeMap<u64, Arc<Mutex<TcpStream>>>>,
    next: AtomicU64,
}

impl Hub {
    fn register(&self, stream: TcpStream) -> u64 {
        let id = self.next.fetch_add(1, Ordering::SeqCst);
        self.conns.lock().insert(id, Arc::new(Mutex::new(stream)));
        id
    }

    fn remove(&self, id: u64) {
        self.conns.lock().remove(&id);
    }

    pub fn connections(&self) -> usize {
        self.conns.lock().len()
    }

    /// Writes one line, retrying once; a second failure drops the line.
    fn send(&self, id: u64, line: &str) {
        let Some(conn) = self.conns.lock().get(&id).cloned() else { return };
        let mut stream = conn.lock();
        let mut attempt = || stream.write_all(line.as_bytes()).and_then(|_| stream.write_all(b"\n"));
        if let Err(first) = attempt() {
            warn!("write to connection {id} failed ({first}), retrying");
            if let Err(second) = attempt() {
                warn!("dropping line for connection {id}: {second}");
            }
        }
    }

    fn broadcast(&self, line: &str) {
        let ids: Vec<u64> = self.conns.lock().keys().copied().collect();
        for id in ids {
            self.send(id, line);
        }
    }
}

fn run_connection(orch: Arc<Orchestrator>, hub: Arc<Hub>, stream: TcpStream) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
    let _ = stream.set_nodelay(true);
    let writer = match stream.try_clone() {
        Ok(w) => w,
        Err(e) => {
            orch.note_connection_error(&format!("{peer}: {e}"));
            return;
        }
    };
    let id = hub.register(writer);
    hub.send(id, &orch.subscription_request().to_line());
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        match read_bounded_line(&mut reader, &mut buf, MAX_LINE_BYTES) {
            Ok(LineRead::Eof) => break,
            Ok(LineRead::TooLong) => {
                orch.note_connection_error(&format!("{peer}: line longer than {MAX_LINE_BYTES} bytes"));
                break;
            }
            Err(e) => {
                orch.note_connection_error(&format!("{peer}: {e}"));
                break;
            }
            Ok(LineRead::Line) => {}
        }
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let Ok(line) = std::str::from_utf8(&buf) else {
            orch.reject_raw(RejectKind::MalformedJson, "line is not UTF-8".into());
            continue;
        };
        for out in orch.handle_line(line) {
            match out {
                Outbound::Broadcast(m) => hub.broadcast(&m.to_line()),
                Outbound::Reply(m) => hub.send(id, &m.to_line()),
            }
        }
    }
    hub.remove(id);
    let _ = reader.get_ref().shutdown(std::net::Shutdown::Both);
    info!("connection {peer} closed");
}

/// A running listener plus any outbound gateway link.
pub struct Server {
    addr: SocketAddr,
    orch: Arc<Orchestrator>,
    hub: Arc<Hub>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, orch: Arc<Orchestrator>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let hub = Arc::new(Hub::default());
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let (orch, hub, stop) = (orch.clone(), hub.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(s) => {
                            let (orch, hub) = (orch.clone(), hub.clone());
                            std::thread::spawn(move || run_connection(orch, hub, s));
                        }
                        Err(e) => warn!("accept failed: {e}"),
                    }
                }
            })
        };
        info!("orchestrator listening on {addr}");
        Ok(Self { addr, orch, hub, stop, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn orchestrator(&self) -> &Arc<Orchestrator> {
        &self.orch
    }

    pub fn connections(&self) -> usize {
        self.hub.connections()
    }

    /// Dials a gateway and serves that link like an accepted connection;
    /// the subscription request goes out first.
    pub fn connect_gateway(&self, gateway: impl ToSocketAddrs) -> io::Result<()> {
        let stream = TcpStream::connect(gateway)?;
        let (orch, hub) = (self.orch.clone(), self.hub.clone());
        std::thread::spawn(move || run_connection(orch, hub, stream));
        Ok(())
    }

    /// Stops accepting; open connections finish when their peers hang up.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Blocks for as long as the listener runs.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.stop_accepting();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_lines() {
        let data = b"abc\r\nde\n\nlong-line-without-end";
        let mut r = BufReader::with_capacity(4, &data[..]);
        let mut buf = Vec::new();
        assert_eq!(read_bounded_line(&mut r, &mut buf, 100).unwrap(), LineRead::Line);
        assert_eq!(buf, b"abc");
        assert_eq!(read_bounded_line(&mut r, &mut buf, 100).unwrap(), LineRead::Line);
        assert_eq!(buf, b"de");
        assert_eq!(read_bounded_line(&mut r, &mut buf, 100).unwrap(), LineRead::Line);
        assert!(buf.is_empty());
        assert_eq!(read_bounded_line(&mut r, &mut buf, 8).unwrap(), LineRead::TooLong);
        let mut r = BufReader::new(&b"tail"[..]);
        assert_eq!(read_bounded_line(&mut r, &mut buf, 100).unwrap(), LineRead::Line);
        assert_eq!(read_bounded_line(&mut r, &mut buf, 100).unwrap(), LineRead::Eof);
    }
}
