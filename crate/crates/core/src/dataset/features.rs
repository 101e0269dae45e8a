//! Fixed 17-dimensional feature vector for the classifiers.
//!
//! Layout, in order:
//!
//! | index  | content                                                    |
//! |--------|------------------------------------------------------------|
//! | 0..4   | M: station rel. merge point, lateral offset, speed, accel  |
//! | 4..8   | P: same four quantities                                    |
//! | 8..12  | F: same four quantities                                    |
//! | 12     | bumper gap M -> P                                          |
//! | 13     | bumper gap F -> M                                          |
//! | 14     | speed P - M                                                |
//! | 15     | speed M - F                                                |
//! | 16     | time for M to reach the merge point at its current speed   |

use super::merges::MergeInstance;
use crate::geo::longitudinal_gap;
use crate::state::VehicleState;

pub const FEATURE_DIM: usize = 17;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "m_station", "m_lateral", "m_speed", "m_accel",
    "p_station", "p_lateral", "p_speed", "p_accel",
    "f_station", "f_lateral", "f_speed", "f_accel",
    "gap_m_p", "gap_f_m", "dv_p_m", "dv_m_f", "time_to_merge",
];

pub fn build_feature_vector(inst: &MergeInstance, frame: usize, time_to_merge_cap_s: f64) -> [f64; FEATURE_DIM] {
    let sf = &inst.frames[frame];
    let axis = inst.lane_axis;
    let mut out = [0.0; FEATURE_DIM];
    let block = |s: &VehicleState| [inst.station(s.position), inst.lateral(s.position), s.speed, s.acceleration];
    out[0..4].copy_from_slice(&block(&sf.m));
    out[4..8].copy_from_slice(&block(&sf.p));
    out[8..12].copy_from_slice(&block(&sf.f));
    out[12] = longitudinal_gap(&sf.m, &sf.p, axis).unwrap_or(0.0);
    out[13] = longitudinal_gap(&sf.f, &sf.m, axis).unwrap_or(0.0);
    out[14] = sf.p.speed - sf.m.speed;
    out[15] = sf.m.speed - sf.f.speed;
    let remaining = -inst.station(sf.m.position);
    out[16] = if remaining <= 0.0 {
        0.0
    } else if sf.m.speed <= 1e-9 {
        time_to_merge_cap_s
    } else {
        (remaining / sf.m.speed).min(time_to_merge_cap_s)
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::merges::{MergeTriple, SceneFrame};
    use crate::geo::{LaneAxis, Vec2};

    fn st(id: &str, x: f64, y: f64, v: f64, a: f64, len: f64) -> VehicleState {
        VehicleState::builder(id, 0).position(Vec2::new(x, y)).speed(v).acceleration(a).size(len, 1.8).build()
    }

    fn one_frame(m: VehicleState, p: VehicleState, f: VehicleState, merge_point: Vec2, center: f64) -> MergeInstance {
        MergeInstance {
            instance_id: 3,
            triple: MergeTriple {
                merging: "m".into(),
                preceding: "p".into(),
                following: "f".into(),
                target_lane: 1,
                merge_point,
                merge_frame_index: 0,
            },
            frames: vec![SceneFrame { m, p, f }],
            lane_axis: LaneAxis::NORTH,
            target_center_offset: center,
        }
    }

    #[test]
    fn degenerate_everyone_at_merge_point() {
        let inst = one_frame(
            st("m", 0.0, 0.0, 0.0, 0.0, 4.0),
            st("p", 0.0, 0.0, 0.0, 0.0, 4.0),
            st("f", 0.0, 0.0, 0.0, 0.0, 4.0),
            Vec2::ZERO,
            0.0,
        );
        let v = build_feature_vector(&inst, 0, 30.0);
        for i in [0, 4, 8] {
            assert_eq!(v[i], 0.0);
        }
        assert_eq!(v[12], -4.0);
        assert_eq!(v[13], -4.0);
        assert_eq!(v[16], 0.0);
    }

    #[test]
    fn symmetric_slot_has_equal_gaps() {
        let inst = one_frame(
            st("m", 0.0, 0.0, 12.0, 0.0, 4.0),
            st("p", 0.0, 20.0, 12.0, 0.0, 4.0),
            st("f", 0.0, -20.0, 12.0, 0.0, 4.0),
            Vec2::ZERO,
            0.0,
        );
        let v = build_feature_vector(&inst, 0, 30.0);
        assert_eq!(v[12], v[13]);
        assert_eq!(v[14], v[15]);
    }

    #[test]
    fn fixture_matches_hand_assembled_vector() {
        let inst = one_frame(
            st("m", 4.0, -12.0, 8.0, 0.5, 4.5),
            st("p", 0.5, 9.0, 11.0, -0.2, 5.0),
            st("f", 0.3, -25.0, 9.5, 1.0, 4.0),
            Vec2::new(0.0, 10.0),
            0.4,
        );
        // every entry recomputed from the raw numbers
        let expected = [
            -12.0 - 10.0, 4.0 - 0.4, 8.0, 0.5,
            9.0 - 10.0, 0.5 - 0.4, 11.0, -0.2,
            -25.0 - 10.0, 0.3 - 0.4, 9.5, 1.0,
            (9.0 - -12.0) - (5.0 + 4.5) / 2.0,
            (-12.0 - -25.0) - (4.5 + 4.0) / 2.0,
            11.0 - 8.0,
            8.0 - 9.5,
            22.0 / 8.0,
        ];
        let got = build_feature_vector(&inst, 0, 30.0);
        for (i, (g, e)) in got.iter().zip(expected).enumerate() {
            assert!((g - e).abs() < 1e-12, "feature {} ({}): {} vs {}", i, FEATURE_NAMES[i], g, e);
        }
    }

    #[test]
    fn stopped_vehicle_short_of_merge_point_hits_cap() {
        let inst = one_frame(
            st("m", 0.0, -5.0, 0.0, 0.0, 4.0),
            st("p", 0.0, 20.0, 0.0, 0.0, 4.0),
            st("f", 0.0, -20.0, 0.0, 0.0, 4.0),
            Vec2::ZERO,
            0.0,
        );
        assert_eq!(build_feature_vector(&inst, 0, 30.0)[16], 30.0);
    }
}
