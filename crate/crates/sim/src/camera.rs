//! Roadside camera: sees every vehicle inside its coverage polygon, with
//! Gaussian position noise and no identity.

use lmo_core::Vec2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scenario::CameraSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraReport {
    pub timestamp_ms: i64,
    pub position: Vec2,
    pub speed: f64,
    pub heading_deg: f64,
    pub length: f64,
    pub width: f64,
    /// Ground truth for diagnostics. Fusion never reads it.
    pub truth_id: String,
}

/// Ray casting; points on an edge may land either way.
pub fn in_polygon(poly: &[Vec2], p: Vec2) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

pub struct Camera {
    spec: CameraSpec,
    noise: Normal<f64>,
}

/// What the camera needs to know about one true vehicle.
#[derive(Debug, Clone, Copy)]
pub struct Seen<'a> {
    pub id: &'a str,
    pub position: Vec2,
    pub speed: f64,
    pub heading_deg: f64,
    pub length: f64,
    pub width: f64,
}

impl Camera {
    pub fn new(spec: CameraSpec) -> Self {
        let noise = Normal::new(0.0, spec.sigma_m.max(0.0)).expect("sigma validated as finite and >= 0");
        Self { spec, noise }
    }

    /// Reports in input order. Two noise draws per covered vehicle.
    pub fn observe(&self, t_ms: i64, truth: &[Seen<'_>], rng: &mut impl Rng) -> Vec<CameraReport> {
        truth
            .iter()
            .filter(|v| in_polygon(&self.spec.coverage, v.position))
            .map(|v| {
                let (dx, dy) = (self.noise.sample(rng), self.noise.sample(rng));
                CameraReport {
                    timestamp_ms: t_ms,
                    position: v.position + Vec2::new(dx, dy),
                    speed: v.speed,
                    heading_deg: v.heading_deg,
                    length: v.length,
                    width: v.width,
                    truth_id: v.id.to_string(),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> Vec<Vec2> {
        vec![Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 100.0), Vec2::new(-10.0, 100.0)]
    }

    fn seen(id: &str, x: f64, y: f64) -> Seen<'_> {
        Seen { id, position: Vec2::new(x, y), speed: 10.0, heading_deg: 0.0, length: 4.5, width: 1.8 }
    }

    #[test]
    fn coverage() {
        let poly = square();
        assert!(in_polygon(&poly, Vec2::new(0.0, 50.0)));
        assert!(!in_polygon(&poly, Vec2::new(0.0, 150.0)));
        assert!(!in_polygon(&poly, Vec2::new(-11.0, 5.0)));
    }

    #[test]
    fn zero_sigma_is_exact() {
        let cam = Camera::new(CameraSpec { coverage: square(), sigma_m: 0.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = cam.observe(500, &[seen("a", 1.0, 20.0), seen("b", 0.0, 200.0)], &mut rng);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].position, Vec2::new(1.0, 20.0));
        assert_eq!(out[0].timestamp_ms, 500);
    }

    #[test]
    fn noise_has_the_configured_spread() {
        let cam = Camera::new(CameraSpec { coverage: square(), sigma_m: 0.25 });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = [seen("a", 0.0, 50.0)];
        let errs: Vec<f64> = (0..10_000).map(|_| cam.observe(0, &truth, &mut rng)[0].position.x).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
        assert!((0.2..=0.3).contains(&sd), "{sd}");
        assert!(mean.abs() < 0.02);
    }
}
