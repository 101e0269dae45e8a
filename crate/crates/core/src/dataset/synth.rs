//! Synthetic NGSIM-layout trajectories for runs without the public data.
//!
//! Each scene is a platoon on lane 1 plus one vehicle on lane 2 that aligns
//! with a gap in the platoon and changes lanes into it. Scenes are separated
//! in time so they never share a frame. Output uses NGSIM units (feet) and
//! front-bumper `Local_Y`, so it exercises the same column mapping as the
//! real files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

const FT: f64 = 0.3048;
const LANE_WIDTH: f64 = 3.7;
const DT: f64 = 0.1;

pub const NGSIM_HEADER: &str = "Vehicle_ID,Frame_ID,Total_Frames,Global_Time,Local_X,Local_Y,Global_X,Global_Y,\
v_Length,v_Width,v_Class,v_Vel,v_Acc,Lane_ID,Preceding,Following,Space_Headway,Time_Headway";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenes: usize,
    pub seed: u64,
    pub platoon_size: usize,
    pub frames_per_scene: usize,
    /// Fraction of scenes whose lane change happens too early to extract.
    pub early_change_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { scenes: 200, seed: 1, platoon_size: 5, frames_per_scene: 130, early_change_fraction: 0.05 }
    }
}

struct Row {
    id: u64,
    frame: i64,
    x: f64,
    y_front: f64,
    length: f64,
    width: f64,
    speed: f64,
    accel: f64,
    lane: i32,
}

fn lane_center(lane: i32) -> f64 {
    (lane as f64 - 0.5) * LANE_WIDTH
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Renders the whole synthetic data set as NGSIM-style CSV text.
pub fn generate_ngsim_csv(cfg: &SynthConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for scene in 0..cfg.scenes {
        generate_scene(&mut rng, cfg, scene as u64, &mut rows);
    }
    rows.sort_by_key(|r| (r.id, r.frame));
    let mut out = String::with_capacity(rows.len() * 96);
    out.push_str(NGSIM_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{:.3},0,0,{:.2},{:.2},2,{:.3},{:.3},{},0,0,0,0",
            r.id,
            r.frame,
            cfg.frames_per_scene,
            r.frame * 100,
            r.x / FT,
            r.y_front / FT,
            r.length / FT,
            r.width / FT,
            r.speed / FT,
            r.accel / FT,
            r.lane
        );
    }
    out
}

fn generate_scene(rng: &mut ChaCha8Rng, cfg: &SynthConfig, scene: u64, rows: &mut Vec<Row>) {
    let n_frames = cfg.frames_per_scene;
    let frame0 = 1 + scene as i64 * (n_frames as i64 + 50);
    let accel_noise = Normal::new(0.0, 0.15).unwrap();

    // platoon on lane 1, ordered front to back
    let v0: f64 = rng.random_range(8.0..18.0);
    let mut lengths = Vec::new();
    let mut start = Vec::new();
    let mut y = 150.0;
    for k in 0..cfg.platoon_size {
        let len = rng.random_range(4.0..5.5);
        if k > 0 {
            let gap = rng.random_range(5.0..40.0);
            y -= 0.5 * (lengths[k - 1] + len) + gap;
        }
        lengths.push(len);
        start.push(y);
    }
    let amp: Vec<f64> = (0..cfg.platoon_size).map(|_| rng.random_range(0.0..0.6)).collect();
    let phase: Vec<f64> = (0..cfg.platoon_size).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let omega = 0.4;
    // v_k(t) = v0 + amp (sin(wt + phase) - sin(phase)): every car starts at v0
    let platoon_y = |k: usize, t: f64| {
        start[k] + v0 * t - amp[k] * ((omega * t + phase[k]).cos() - phase[k].cos()) / omega - amp[k] * phase[k].sin() * t
    };
    let platoon_v = |k: usize, t: f64| v0 + amp[k] * ((omega * t + phase[k]).sin() - phase[k].sin());
    let platoon_a = |k: usize, t: f64| amp[k] * omega * (omega * t + phase[k]).cos();

    for k in 0..cfg.platoon_size {
        for i in 0..n_frames {
            let t = i as f64 * DT;
            rows.push(Row {
                id: scene * 10 + k as u64 + 1,
                frame: frame0 + i as i64,
                x: lane_center(1),
                y_front: platoon_y(k, t) + 0.5 * lengths[k],
                length: lengths[k],
                width: 1.8,
                speed: platoon_v(k, t),
                accel: platoon_a(k, t) + accel_noise.sample(rng),
                lane: 1,
            });
        }
    }

    // merging vehicle on lane 2
    let m_len = rng.random_range(4.0..5.0);
    let early = rng.random_bool(cfg.early_change_fraction);
    let t_merge = if early { rng.random_range(1.0..3.0) } else { rng.random_range(5.0..8.0) };
    let m_accel: f64 = rng.random_range(-1.0..1.0);
    let v_end = (v0 + rng.random_range(-3.0..3.0)).max(3.0 + m_accel.max(0.0) * t_merge);
    let v_m0 = v_end - m_accel * t_merge;
    // 1 m margin covers the change landing on the next 100 ms frame
    let required = |v: f64| 1.0 + 0.5 * v + 1.0;
    // slots that are safe at the merge time
    let mut slots = Vec::new();
    for k in 0..cfg.platoon_size - 1 {
        let front_rear = platoon_y(k, t_merge) - 0.5 * lengths[k];
        let back_front = platoon_y(k + 1, t_merge) + 0.5 * lengths[k + 1];
        let lo = back_front + required(platoon_v(k + 1, t_merge)) + 0.5 * m_len;
        let hi = front_rear - required(v_end) - 0.5 * m_len;
        if hi > lo + 0.5 {
            slots.push((lo, hi));
        }
    }
    let target_y = if slots.is_empty() {
        // no usable gap: merge ahead of the platoon
        platoon_y(0, t_merge) + 25.0
    } else {
        let (lo, hi) = slots[rng.random_range(0..slots.len())];
        let mid = 0.5 * (lo + hi);
        mid + rng.random_range(-0.4..0.4) * (hi - lo)
    };
    let y_m0 = target_y - v_m0 * t_merge - 0.5 * m_accel * t_merge * t_merge;
    let boundary = LANE_WIDTH;
    for i in 0..n_frames {
        let t = i as f64 * DT;
        let (y, v, a) = if t <= t_merge {
            (y_m0 + v_m0 * t + 0.5 * m_accel * t * t, v_m0 + m_accel * t, m_accel)
        } else {
            (target_y + v_end * (t - t_merge), v_end, 0.0)
        };
        let u = (t - (t_merge - 1.5)) / 3.0;
        let x = lane_center(2) + (lane_center(1) - lane_center(2)) * smoothstep(u);
        // frame of the lane switch is the first frame at or after t_merge
        let lane = if (t + 1e-9 >= t_merge && x <= boundary + 0.5) || x < boundary { 1 } else { 2 };
        rows.push(Row {
            id: scene * 10 + 9,
            frame: frame0 + i as i64,
            x,
            y_front: y + 0.5 * m_len,
            length: m_len,
            width: 1.8,
            speed: v.max(0.0),
            accel: a + accel_noise.sample(rng),
            lane,
        });
    }
}
