mod common;

use common::*;
use lmo_orchestrator::{Message, Server};
use lmo_sim::log::LogEvent;
use lmo_sim::{read_log, replay, run_scenario, write_log, InProcLink, OrchestratorLink, SimError, TcpLink};

fn log_bytes(events: &[LogEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_log(&mut buf, events).unwrap();
    buf
}

#[test]
fn scenario_without_a_merging_vehicle_is_rejected() {
    let mut scn = four_vehicle();
    scn.vehicles.retain(|v| v.id != "M");
    assert!(matches!(scn.validate(), Err(SimError::Scenario(m)) if m.contains("merging")));
}

#[test]
fn four_vehicle_run_fuses_four_tracks_and_advises_m() {
    let scn = four_vehicle();
    let out = run_scenario(&scn, &mut InProcLink::new(orchestrator(&scn)), scn.seed).unwrap();
    let first_tracks = out.events.iter().find_map(|e| match e {
        LogEvent::FusedTracks { ids, .. } => Some(ids.clone()),
        _ => None,
    });
    assert_eq!(first_tracks.unwrap(), ["F", "M", "P", "cam-1"]);
    let recs: Vec<_> = replay(&out.events)
        .into_iter()
        .filter_map(|r| match r.message {
            Message::Recommendation(m) => Some(m.target_uuid),
            _ => None,
        })
        .collect();
    assert!(!recs.is_empty() && recs.iter().all(|t| t == "M"), "{recs:?}");
    assert_eq!(out.summary.merged, ["M"], "{:?}", out.summary);
    assert_eq!(out.summary.exit_code(), 0);
    let c = out.summary.gateway;
    assert_eq!(c.delivered + c.dropped_loss, c.matched);
}

#[test]
fn same_seed_same_bytes() {
    let scn = four_vehicle();
    let a = run_scenario(&scn, &mut InProcLink::new(orchestrator(&scn)), 9).unwrap();
    let b = run_scenario(&scn, &mut InProcLink::new(orchestrator(&scn)), 9).unwrap();
    assert_eq!(log_bytes(&a.events), log_bytes(&b.events));
    let c = run_scenario(&scn, &mut InProcLink::new(orchestrator(&scn)), 10).unwrap();
    assert_ne!(log_bytes(&a.events), log_bytes(&c.events));
}

#[test]
fn tcp_and_in_process_runs_log_the_same_bytes() {
    let scn = four_vehicle();
    let server = Server::bind("127.0.0.1:0", orchestrator(&scn)).unwrap();
    let mut tcp = TcpLink::connect(server.local_addr()).unwrap();
    assert_eq!(tcp.boundary(), scn.scene.boundary);
    let over_tcp = run_scenario(&scn, &mut tcp, 3).unwrap();
    let in_proc = run_scenario(&scn, &mut InProcLink::new(orchestrator(&scn)), 3).unwrap();
    assert_eq!(log_bytes(&over_tcp.events), log_bytes(&in_proc.events));
    assert!(!over_tcp.processing_ms.is_empty());
}

#[test]
fn refused_connection_is_fatal() {
    let free = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = free.local_addr().unwrap();
    drop(free);
    assert!(matches!(TcpLink::connect(addr), Err(SimError::Connect(_))));
}

/// Works for a few exchanges, then behaves like a dropped connection.
struct Flaky {
    inner: InProcLink,
    left: usize,
}

impl OrchestratorLink for Flaky {
    fn boundary(&self) -> lmo_core::scene::Boundary {
        self.inner.boundary()
    }
    fn exchange(&mut self, line: &str) -> Result<Vec<Message>, SimError> {
        if self.left == 0 {
            return Err(SimError::Disconnected("test".into()));
        }
        self.left -= 1;
        self.inner.exchange(line)
    }
    fn processing_ms(&self) -> &[f64] {
        self.inner.processing_ms()
    }
}

#[test]
fn lost_orchestrator_aborts_with_a_partial_log() {
    let scn = four_vehicle();
    let mut link = Flaky { inner: InProcLink::new(orchestrator(&scn)), left: 10 };
    let out = run_scenario(&scn, &mut link, 1).unwrap();
    assert!(out.summary.aborted.is_some());
    assert_eq!(out.summary.exit_code(), 1);
    assert!(matches!(out.events.last(), Some(LogEvent::ScenarioEnd { reason, .. }) if reason.starts_with("aborted")));
    // the partial log still parses
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ndjson");
    std::fs::write(&path, log_bytes(&out.events)).unwrap();
    let back = read_log(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, out.events);
}
