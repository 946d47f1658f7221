//! Adam with decoupled (default) or coupled L2 weight decay.

use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecay {
    /// `p -= lr * wd * p` applied outside the adaptive step.
    Decoupled,
    /// `g += wd * p` before the moment updates.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecay,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            weight_decay: 0.01,
            decay_mode: WeightDecay::Decoupled,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::default(),
        }
    }

    /// One update over `params`, which must come in the same order every call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        let c = self.config;
        let st = &mut self.state;
        if st.m.is_empty() {
            st.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            st.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        assert_eq!(st.m.len(), params.len(), "optimizer state does not match the parameter list");
        st.step += 1;
        let t = st.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut st.m[k], &mut st.v[k]);
            for i in 0..p.value.len() {
                let mut g = p.grad[i] as f64;
                let mut w = p.value[i] as f64;
                if c.decay_mode == WeightDecay::Coupled {
                    g += c.weight_decay * w;
                } else {
                    w -= c.learning_rate * c.weight_decay * w;
                }
                let mi = c.beta1 * m[i] as f64 + (1.0 - c.beta1) * g;
                let vi = c.beta2 * v[i] as f64 + (1.0 - c.beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p.value[i] = (w - c.learning_rate * update) as f32;
            }
        }
    }
}
