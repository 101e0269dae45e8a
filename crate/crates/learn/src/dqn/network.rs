//! Dueling Q-network: a two-layer ReLU trunk feeding a scalar value head and
//! a per-action advantage head, combined as Q = V + A - mean(A).
//!
//! Parameters live in one flat vector so optimizers, finite-difference
//! checks and serialization all see the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DqnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub actions: usize,
}

impl NetShape {
    pub const DEFAULT: NetShape = NetShape { input: 8, hidden1: 64, hidden2: 64, actions: 15 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs` weights, then `outputs` biases.
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    fn bias(&self) -> usize {
        self.offset + self.outputs * self.inputs
    }

    fn forward(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let w = &p[self.offset..self.bias()];
        let b = &p[self.bias()..self.bias() + self.outputs];
        for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(self.inputs).zip(b)) {
            *o = bias + dot(row, x);
        }
    }

    /// Accumulates parameter gradients and, if asked, the input gradient.
    fn backward(&self, p: &[f64], x: &[f64], g_out: &[f64], grad: &mut [f64], g_in: Option<&mut [f64]>) {
        let bias = self.bias();
        for (o, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[self.offset + o * self.inputs..self.offset + (o + 1) * self.inputs];
            for (r, xi) in row.iter_mut().zip(x) {
                *r += g * xi;
            }
            grad[bias + o] += g;
        }
        if let Some(g_in) = g_in {
            g_in.iter_mut().for_each(|v| *v = 0.0);
            let w = &p[self.offset..bias];
            for (row, &g) in w.chunks_exact(self.inputs).zip(g_out) {
                if g == 0.0 {
                    continue;
                }
                for (gi, wi) in g_in.iter_mut().zip(row) {
                    *gi += g * wi;
                }
            }
        }
    }
}

/// Dot product with four independent accumulators so the compiler can
/// vectorize it; the summation order is fixed, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelingNetwork {
    pub shape: NetShape,
    trunk1: Dense,
    trunk2: Dense,
    value: Dense,
    advantage: Dense,
    params: Vec<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    pub input: Vec<f64>,
    pub z1: Vec<f64>,
    pub h1: Vec<f64>,
    pub z2: Vec<f64>,
    pub h2: Vec<f64>,
    pub value: f64,
    pub advantage: Vec<f64>,
    pub q: Vec<f64>,
}

impl DuelingNetwork {
    /// He-uniform trunk weights, small uniform head weights, zero biases.
    pub fn new(shape: NetShape, seed: u64) -> Self {
        let trunk1 = Dense { inputs: shape.input, outputs: shape.hidden1, offset: 0 };
        let trunk2 = Dense { inputs: shape.hidden1, outputs: shape.hidden2, offset: trunk1.len() };
        let value = Dense { inputs: shape.hidden2, outputs: 1, offset: trunk2.offset + trunk2.len() };
        let advantage = Dense { inputs: shape.hidden2, outputs: shape.actions, offset: value.offset + value.len() };
        let mut params = vec![0.0; advantage.offset + advantage.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, scale) in [
            (trunk1, (6.0 / shape.input as f64).sqrt()),
            (trunk2, (6.0 / shape.hidden1 as f64).sqrt()),
            (value, (1.0 / shape.hidden2 as f64).sqrt()),
            (advantage, (1.0 / shape.hidden2 as f64).sqrt()),
        ] {
            for w in &mut params[layer.offset..layer.bias()] {
                *w = rng.random_range(-scale..scale);
            }
        }
        Self { shape, trunk1, trunk2, value, advantage, params }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, state: &[f64]) -> Activations {
        let s = self.shape;
        let p = &self.params;
        let mut a = Activations {
            input: state.to_vec(),
            z1: vec![0.0; s.hidden1],
            z2: vec![0.0; s.hidden2],
            advantage: vec![0.0; s.actions],
            ..Default::default()
        };
        self.trunk1.forward(p, state, &mut a.z1);
        a.h1 = a.z1.iter().map(|&z| z.max(0.0)).collect();
        self.trunk2.forward(p, &a.h1, &mut a.z2);
        a.h2 = a.z2.iter().map(|&z| z.max(0.0)).collect();
        let mut v = [0.0];
        self.value.forward(p, &a.h2, &mut v);
        a.value = v[0];
        self.advantage.forward(p, &a.h2, &mut a.advantage);
        let mean = a.advantage.iter().sum::<f64>() / s.actions as f64;
        a.q = a.advantage.iter().map(|&x| a.value + x - mean).collect();
        a
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.forward(state).q
    }

    /// Highest-Q action, lowest index on ties.
    pub fn greedy_action(&self, state: &[f64]) -> usize {
        let q = self.q_values(state);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        best
    }

    /// Adds dLoss/dParams to `grad` given dLoss/dQ for one forward pass.
    pub fn backward(&self, act: &Activations, g_q: &[f64], grad: &mut [f64]) {
        let s = self.shape;
        let p = &self.params;
        let g_v: f64 = g_q.iter().sum();
        let mean_g = g_v / s.actions as f64;
        let g_a: Vec<f64> = g_q.iter().map(|g| g - mean_g).collect();

        let mut g_h2 = vec![0.0; s.hidden2];
        let mut tmp = vec![0.0; s.hidden2];
        self.value.backward(p, &act.h2, &[g_v], grad, Some(&mut g_h2));
        self.advantage.backward(p, &act.h2, &g_a, grad, Some(&mut tmp));
        for (g, t) in g_h2.iter_mut().zip(&tmp) {
            *g += t;
        }
        let g_z2: Vec<f64> = g_h2.iter().zip(&act.z2).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect();
        let mut g_h1 = vec![0.0; s.hidden1];
        self.trunk2.backward(p, &act.h1, &g_z2, grad, Some(&mut g_h1));
        let g_z1: Vec<f64> = g_h1.iter().zip(&act.z1).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect();
        self.trunk1.backward(p, &act.input, &g_z1, grad, None);
    }

    pub fn check_finite(&self) -> Result<(), DqnError> {
        match self.params.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(DqnError::NonFinite(format!("parameter {i} is {}", self.params[i]))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String, DqnError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DqnError> {
        let net: DuelingNetwork = serde_json::from_str(text)?;
        let expected = Self::new(net.shape, 0);
        if net.params.len() != expected.params.len() || net.trunk1 != expected.trunk1 || net.advantage != expected.advantage {
            return Err(DqnError::Model("layer layout does not match the declared shape".into()));
        }
        net.check_finite()?;
        Ok(net)
    }
}
