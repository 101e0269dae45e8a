//! Merge environment in target-lane coordinates.
//!
//! Station `s` runs along the target lane; lateral offset `l` is positive to
//! the right, with the target centerline at 0 and the merge lane at
//! `+lane_width`. Only M is controlled; P and F either hold their speed or
//! replay a recorded track.

use lmo_core::dataset::MergeInstance;
use lmo_core::geo::advance_speed;
use lmo_core::{is_safe_slot, LaneAxis, SafetyParams, Vec2, VehicleState};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DqnError;

pub const STATE_DIM: usize = 8;
pub const N_ACTIONS: usize = 15;
pub const ACCELERATIONS: [f64; 5] = [-3.0, -1.5, 0.0, 1.5, 3.0];
pub const HEADING_DELTAS_DEG: [f64; 3] = [-4.0, 0.0, 4.0];
pub const TICK_S: f64 = 0.1;
pub const TICK_MS: i64 = 100;
pub const MAX_HEADING_REL_DEG: f64 = 30.0;

/// Lateral distance from the centerline within which a merge counts as
/// settled and ends the episode.
pub const SETTLED_TOLERANCE_M: f64 = 0.5;

pub type RlState = [f64; STATE_DIM];

/// (acceleration m/s^2, heading change deg) of an action index.
pub fn action_components(action: usize) -> (f64, f64) {
    (ACCELERATIONS[action / 3], HEADING_DELTAS_DEG[action % 3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    Positive,
    Negative,
}

impl RewardVariant {
    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::Positive => "positive",
            RewardVariant::Negative => "negative",
        }
    }

    pub fn apply(self, r_pos: f64) -> f64 {
        match self {
            RewardVariant::Positive => reward_positive(r_pos),
            RewardVariant::Negative => reward_negative(r_pos),
        }
    }
}

impl std::str::FromStr for RewardVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "positive" => Ok(RewardVariant::Positive),
            "negative" => Ok(RewardVariant::Negative),
            _ => Err(format!("unknown reward variant {s:?}")),
        }
    }
}

/// Distance-shaped reward in [0, 1]: 0 at the starting distance, 1 at the
/// slot midpoint.
pub fn distance_reward(d: f64, d0: f64) -> f64 {
    (1.0 - d / d0).clamp(0.0, 1.0)
}

pub fn reward_positive(r_pos: f64) -> f64 {
    r_pos
}

pub fn reward_negative(r_pos: f64) -> f64 {
    r_pos - 1.0
}

/// Kinematic state of one vehicle in lane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneVehicle {
    pub s: f64,
    pub l: f64,
    pub v: f64,
    pub heading_rel_deg: f64,
    pub length: f64,
    pub width: f64,
}

impl LaneVehicle {
    pub fn new(s: f64, l: f64, v: f64) -> Self {
        Self { s, l, v, heading_rel_deg: 0.0, length: 4.5, width: 1.8 }
    }

    fn as_state(&self, id: &str) -> VehicleState {
        VehicleState::builder(id, 0).position(Vec2::new(self.l, self.s)).speed(self.v).size(self.length, self.width).build()
    }
}

/// Initial conditions of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub m: LaneVehicle,
    pub p: LaneVehicle,
    pub f: LaneVehicle,
    /// Recorded (station, speed) of P per tick from tick 0; constant
    /// velocity when absent or exhausted.
    #[serde(default)]
    pub p_track: Vec<(f64, f64)>,
    #[serde(default)]
    pub f_track: Vec<(f64, f64)>,
    pub lane_width: f64,
    /// Station where the merge lane ends.
    pub zone_end: f64,
    pub safety: SafetyParams,
    pub max_ticks: usize,
}

impl EpisodeSpec {
    /// Midpoint between P's rear bumper and F's front bumper.
    pub fn slot_mid(p: &LaneVehicle, f: &LaneVehicle) -> f64 {
        0.5 * ((p.s - 0.5 * p.length) + (f.s + 0.5 * f.length))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// M's body reaches into the target lane with less than the standstill
    /// gap to P or F.
    Collision,
    /// End of the merge lane reached while still assigned to it.
    RampEnd,
    /// Crossed the far edge of the target lane.
    OvershotLane,
    /// Drifted off the outer edge of the merge lane.
    OffRoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Violation(Violation),
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: RlState,
    /// Reward before variant mapping, in [0, 1].
    pub r_pos: f64,
    pub terminal: bool,
    pub outcome: Option<EpisodeOutcome>,
    /// Acceleration actually applied to M.
    pub acceleration: f64,
}

#[derive(Debug, Clone)]
pub struct MergeEnv {
    spec: EpisodeSpec,
    pub m: LaneVehicle,
    pub p: LaneVehicle,
    pub f: LaneVehicle,
    tick: usize,
    d0: f64,
    done: bool,
}

impl MergeEnv {
    pub fn reset(spec: &EpisodeSpec) -> Result<Self, DqnError> {
        let env = Self::unchecked(spec);
        if !(env.d0 > 0.0 && env.d0.is_finite()) {
            return Err(DqnError::DegenerateEpisode(format!("initial distance to slot is {}", env.d0)));
        }
        Ok(env)
    }

    /// Environment at tick 0 without the d0 check, for inspecting geometry.
    pub(crate) fn unchecked(spec: &EpisodeSpec) -> Self {
        let mut env = Self { spec: spec.clone(), m: spec.m, p: spec.p, f: spec.f, tick: 0, d0: 0.0, done: false };
        env.d0 = env.distance_to_slot();
        env
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn distance_to_slot(&self) -> f64 {
        (self.m.s - EpisodeSpec::slot_mid(&self.p, &self.f)).hypot(self.m.l)
    }

    pub fn state(&self) -> RlState {
        let (m, p, f) = (&self.m, &self.p, &self.f);
        [
            (p.s - m.s) / 50.0,
            (m.v - p.v) / 15.0,
            (m.s - f.s) / 50.0,
            (f.v - m.v) / 15.0,
            (self.spec.zone_end - m.s) / 100.0,
            m.v / 30.0,
            m.l / 4.0,
            m.heading_rel_deg / MAX_HEADING_REL_DEG,
        ]
        .map(|x| x.clamp(-1.0, 1.0))
    }

    /// Merge settled: M near the target centerline inside a safe slot.
    pub fn settled(&self) -> bool {
        self.m.l.abs() <= SETTLED_TOLERANCE_M && self.in_safe_slot()
    }

    /// M's centroid is in the target lane and the slot around it is safe.
    pub fn in_safe_slot(&self) -> bool {
        self.m.l.abs() < 0.5 * self.spec.lane_width
            && is_safe_slot(
                &self.m.as_state("m"),
                &self.p.as_state("p"),
                &self.f.as_state("f"),
                &self.spec.safety,
                LaneAxis::NORTH,
            )
            .unwrap_or(false)
    }

    pub fn violation(&self) -> Option<Violation> {
        let (m, w) = (&self.m, self.spec.lane_width);
        if m.l < -0.5 * w {
            return Some(Violation::OvershotLane);
        }
        if m.l > 1.5 * w {
            return Some(Violation::OffRoad);
        }
        if m.l - 0.5 * m.width < 0.5 * w {
            let s0 = self.spec.safety.standstill_gap_m;
            for other in [&self.p, &self.f] {
                if (other.s - m.s).abs() - 0.5 * (other.length + m.length) < s0 {
                    return Some(Violation::Collision);
                }
            }
        }
        if m.s + 0.5 * m.length > self.spec.zone_end && m.l >= 0.5 * w {
            return Some(Violation::RampEnd);
        }
        None
    }

    /// Outcome of the current geometry without stepping.
    pub fn classify(&self) -> Option<EpisodeOutcome> {
        if let Some(v) = self.violation() {
            Some(EpisodeOutcome::Violation(v))
        } else if self.settled() {
            Some(EpisodeOutcome::Success)
        } else if self.tick >= self.spec.max_ticks {
            Some(EpisodeOutcome::Horizon)
        } else {
            None
        }
    }

    fn advance_neighbor(v: &mut LaneVehicle, track: &[(f64, f64)], tick: usize) {
        match track.get(tick) {
            Some(&(s, speed)) => {
                v.s = s;
                v.v = speed;
            }
            None => v.s += v.v * TICK_S,
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Step, DqnError> {
        if self.done {
            return Err(DqnError::EpisodeOver);
        }
        if action >= N_ACTIONS {
            return Err(DqnError::Model(format!("action {action} outside 0..{N_ACTIONS}")));
        }
        let (accel, dh) = action_components(action);
        let m = &mut self.m;
        m.heading_rel_deg = (m.heading_rel_deg + dh).clamp(-MAX_HEADING_REL_DEG, MAX_HEADING_REL_DEG);
        let (disp, v) = advance_speed(m.v, accel, TICK_S);
        let applied = (v - m.v) / TICK_S;
        let h = m.heading_rel_deg.to_radians();
        m.s += disp * h.cos();
        m.l += disp * h.sin();
        m.v = v;
        self.tick += 1;
        Self::advance_neighbor(&mut self.p, &self.spec.p_track, self.tick);
        Self::advance_neighbor(&mut self.f, &self.spec.f_track, self.tick);

        let outcome = self.classify();
        let r_pos = match outcome {
            Some(EpisodeOutcome::Violation(_)) => 0.0,
            Some(EpisodeOutcome::Success) => 1.0,
            _ => distance_reward(self.distance_to_slot(), self.d0),
        };
        self.done = outcome.is_some();
        Ok(Step { state: self.state(), r_pos, terminal: self.done, outcome, acceleration: applied })
    }
}

/// Ranges of the synthetic episode generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthEpisodeConfig {
    pub speed: (f64, f64),
    /// Free space in the slot beyond M's length and both safety gaps.
    pub slack: (f64, f64),
    /// M's initial station relative to the slot midpoint.
    pub m_offset: (f64, f64),
    pub m_speed_delta: (f64, f64),
    /// Seconds until M reaches the end of the merge lane at its initial
    /// speed; kept below the horizon so staying on the ramp always ends.
    pub zone_time: (f64, f64),
    pub lane_width: f64,
    pub max_ticks: usize,
}

impl Default for SynthEpisodeConfig {
    fn default() -> Self {
        Self {
            speed: (5.0, 15.0),
            slack: (8.0, 40.0),
            m_offset: (-20.0, 10.0),
            m_speed_delta: (-2.0, 2.0),
            zone_time: (4.0, 6.0),
            lane_width: 3.7,
            max_ticks: 70,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Random ramp-merge episode with P and F cruising in the target lane.
pub fn synthetic_episode(rng: &mut impl Rng, cfg: &SynthEpisodeConfig) -> EpisodeSpec {
    let safety = SafetyParams::default();
    let v = uniform(rng, cfg.speed);
    let slack = uniform(rng, cfg.slack);
    let m_len = 4.5;
    let gap = m_len + 2.0 * safety.required_gap(v) + slack;
    let f = LaneVehicle::new(0.0, 0.0, v);
    let p = LaneVehicle::new(f.s + 0.5 * f.length + gap + 2.25, 0.0, v);
    let mid = EpisodeSpec::slot_mid(&p, &f);
    let m_s = mid + uniform(rng, cfg.m_offset);
    let m_v = (v + uniform(rng, cfg.m_speed_delta)).max(0.0);
    let zone_end = m_s + m_v.max(1.0) * uniform(rng, cfg.zone_time);
    EpisodeSpec {
        m: LaneVehicle::new(m_s, cfg.lane_width, m_v),
        p,
        f,
        p_track: Vec::new(),
        f_track: Vec::new(),
        lane_width: cfg.lane_width,
        zone_end,
        safety,
        max_ticks: cfg.max_ticks,
    }
}

/// Episode replaying a recorded merge: M starts from its state at the first
/// window frame, P and F follow their tracks. Merges from the left are
/// mirrored so the merge lane is always on the right.
pub fn dataset_episode(inst: &MergeInstance, lane_width: f64, safety: SafetyParams) -> EpisodeSpec {
    let first = &inst.frames[0];
    let side = if inst.lateral(first.m.position) < 0.0 { -1.0 } else { 1.0 };
    let lane = |st: &VehicleState| {
        let mut v = LaneVehicle::new(inst.station(st.position), side * inst.lateral(st.position), st.speed);
        v.length = st.length;
        v.width = st.width;
        v
    };
    let track = |pick: fn(&lmo_core::dataset::SceneFrame) -> &VehicleState| -> Vec<(f64, f64)> {
        inst.frames.iter().map(|fr| (inst.station(pick(fr).position), pick(fr).speed)).collect()
    };
    let mut m = lane(&first.m);
    m.l = lane_width;
    let last = inst.frames.last().unwrap();
    EpisodeSpec {
        m,
        p: lane(&first.p),
        f: lane(&first.f),
        p_track: track(|fr| &fr.p),
        f_track: track(|fr| &fr.f),
        lane_width,
        zone_end: inst.station(last.m.position).max(m.s + 1.0),
        safety,
        max_ticks: inst.frames.len() - 1,
    }
}
