//! Adam with bias-corrected moment estimates.

use super::mlp::{Gradients, Mlp};
use ndarray::{Array, Array1, Array2, Dimension, Zip};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            t: 0,
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// One Adam update in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for l in 0..net.weights.len() {
            update(&mut net.weights[l], &grads.weights[l], &mut self.m_w[l], &mut self.v_w[l], lr, bc1, bc2);
            update(&mut net.biases[l], &grads.biases[l], &mut self.m_b[l], &mut self.v_b[l], lr, bc1, bc2);
        }
    }
}

fn update<D: Dimension>(
    theta: &mut Array<f64, D>,
    g: &Array<f64, D>,
    m: &mut Array<f64, D>,
    v: &mut Array<f64, D>,
    lr: f64,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(theta).and(g).and(m).and(v).for_each(|t, &g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *t -= lr * m_hat / (v_hat.sqrt() + EPS);
    });
}
