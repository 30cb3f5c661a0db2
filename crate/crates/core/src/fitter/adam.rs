//! Adam with per-parameter learning rates.

/// Moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. `lrs` holds one
/// learning rate per parameter; a zero rate freezes that parameter while
/// its moments still accumulate.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], lrs: &[f64], cfg: &AdamConfig) {
    assert_eq!(params.len(), state.m.len(), "adam state dimension");
    assert_eq!(grad.len(), params.len(), "gradient dimension");
    assert_eq!(lrs.len(), params.len(), "learning-rate dimension");
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lrs[i] * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
