//! Context-based pub/sub: area subscriptions for vehicle updates, direct
//! delivery of recommendations to their target vehicle, and feedback back
//! to the area subscribers (the applications).

use lmo_core::scene::Boundary;
use lmo_core::LatLon;
use lmo_orchestrator::wire::Message;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::{impair, EventQueue};
use crate::scenario::Impairment;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Orchestrator,
    Vehicle(String),
}

impl Endpoint {
    pub fn name(&self) -> String {
        match self {
            Endpoint::Orchestrator => "orchestrator".into(),
            Endpoint::Vehicle(id) => format!("vehicle:{id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interest {
    Area(Boundary),
    /// Messages addressed to this vehicle id.
    Direct(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub from: String,
    pub to: Endpoint,
    pub message: Message,
}

/// Fate of one copy of a published message.
#[derive(Debug, Clone, PartialEq)]
pub struct SendRecord {
    pub to: Endpoint,
    pub delay_ms: Option<i64>,
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayCounters {
    pub published: u64,
    /// Sum over messages of the number of matching subscribers.
    pub matched: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_no_subscriber: u64,
}

pub struct Gateway {
    subs: Vec<(Endpoint, Interest)>,
    impairment: Impairment,
    pub counters: GatewayCounters,
}

impl Gateway {
    pub fn new(impairment: Impairment) -> Self {
        Self { subs: Vec::new(), impairment, counters: GatewayCounters::default() }
    }

    pub fn subscribe(&mut self, endpoint: Endpoint, interest: Interest) {
        self.subs.push((endpoint, interest));
    }

    /// Matching subscribers in subscription order.
    pub fn route(&self, msg: &Message, position: Option<LatLon>) -> Vec<Endpoint> {
        let mut out: Vec<Endpoint> = Vec::new();
        for (ep, interest) in &self.subs {
            let hit = match (msg, interest) {
                (Message::VehicleUpdate(_), Interest::Area(b)) => position.is_some_and(|p| b.contains(p)),
                (Message::Recommendation(r), Interest::Direct(id)) => &r.target_uuid == id,
                (Message::ManeuverFeedback(_), Interest::Area(_)) => true,
                _ => false,
            };
            if hit && !out.contains(ep) {
                out.push(ep.clone());
            }
        }
        out
    }

    /// Routes `msg` and schedules one impaired copy per subscriber.
    pub fn publish(
        &mut self,
        now_ms: i64,
        from: &str,
        msg: Message,
        position: Option<LatLon>,
        rng: &mut impl Rng,
        queue: &mut EventQueue<Delivery>,
    ) -> Vec<SendRecord> {
        self.counters.published += 1;
        let targets = self.route(&msg, position);
        if targets.is_empty() {
            self.counters.dropped_no_subscriber += 1;
            return Vec::new();
        }
        self.counters.matched += targets.len() as u64;
        targets
            .into_iter()
            .map(|to| match impair(&self.impairment, rng) {
                Some(delay) => {
                    self.counters.delivered += 1;
                    let seq = queue.push(now_ms + delay, Delivery { from: from.to_string(), to: to.clone(), message: msg.clone() });
                    SendRecord { to, delay_ms: Some(delay), seq: Some(seq) }
                }
                None => {
                    self.counters.dropped_loss += 1;
                    SendRecord { to, delay_ms: None, seq: None }
                }
            })
            .collect()
    }
}
