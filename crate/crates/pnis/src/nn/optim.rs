//! Adam with a cosine learning-rate schedule.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment accumulators plus the schedule state. The moment
/// vectors are index-aligned with the parameter list handed to `new`.
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    base_lr: f64,
    total_steps: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor], base_lr: f64, total_steps: u64) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
            base_lr,
            total_steps,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the next `adam_step` call will apply.
    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.step, self.total_steps, self.base_lr)
    }
}

/// base·½(1+cos(π·step/total)), clamped to 0 past the horizon.
pub fn cosine_lr(step: u64, total: u64, base: f64) -> f64 {
    if total == 0 || step >= total {
        return if step == 0 { base } else { 0.0 };
    }
    base * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// One bias-corrected Adam update at the scheduled rate. The schedule is
/// evaluated at the pre-increment step counter, so the first call uses the
/// full base rate.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    assert_eq!(params.len(), grads.len(), "adam: {} params vs {} grads", params.len(), grads.len());
    assert_eq!(params.len(), state.m.len(), "adam: state built for {} params", state.m.len());
    let lr = state.current_lr();
    state.step = state.step.checked_add(1).expect("adam step counter overflow");
    let t = state.step as i32;
    let bc1 = 1.0 - state_pow(hyper.beta1, t);
    let bc2 = 1.0 - state_pow(hyper.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(
            p.shape(),
            g.shape(),
            "adam: param {} shape {:?} vs grad {:?}",
            i,
            p.shape(),
            g.shape()
        );
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for ((pj, gj), (mj, vj)) in
            p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mj = hyper.beta1 * *mj + (1.0 - hyper.beta1) * gj;
            *vj = hyper.beta2 * *vj + (1.0 - hyper.beta2) * gj * gj;
            let mhat = *mj / bc1;
            let vhat = *vj / bc2;
            *pj -= lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
}

fn state_pow(beta: f64, t: i32) -> f64 {
    beta.powi(t)
}
