use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Momentum {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr }
            | OptimizerConfig::Momentum { lr, .. }
            | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// Per-parameter moment buffers.
#[derive(Debug, Clone, Default)]
struct Slot {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Stateful optimizer. Deterministic: the same gradients in the same order
/// give bit-identical updates.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Vec<Slot>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            slots: Vec::new(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every trainable tensor in `store` using its
    /// accumulated gradient. Gradients are left in place.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let t = self.steps;
        if self.slots.len() < store.len() {
            self.slots.resize_with(store.len(), Slot::default);
        }
        for id in store.ids() {
            let tensor = store.get_mut(id);
            if !tensor.requires_grad() {
                continue;
            }
            let grad = tensor.grad().expect("trainable tensor has grad").to_vec();
            update(
                &self.config,
                &mut self.slots[id.index()],
                t,
                tensor.values_mut(),
                &grad,
            );
        }
    }
}

/// One optimizer update on raw slices; `t` is the 1-based step count.
pub fn optimizer_step(
    config: &OptimizerConfig,
    params: &mut [f64],
    grads: &[f64],
    first_moment: &mut Vec<f64>,
    second_moment: &mut Vec<f64>,
    t: u64,
) {
    let mut slot = Slot {
        first: std::mem::take(first_moment),
        second: std::mem::take(second_moment),
    };
    update(config, &mut slot, t, params, grads);
    *first_moment = slot.first;
    *second_moment = slot.second;
}

fn update(config: &OptimizerConfig, slot: &mut Slot, t: u64, params: &mut [f64], grads: &[f64]) {
    assert_eq!(params.len(), grads.len(), "params/grads misaligned");
    match *config {
        OptimizerConfig::Sgd { lr } => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        OptimizerConfig::Momentum { lr, momentum } => {
            if slot.first.len() != params.len() {
                slot.first = vec![0.0; params.len()];
            }
            for ((p, g), v) in params.iter_mut().zip(grads).zip(slot.first.iter_mut()) {
                *v = momentum * *v + g;
                *p -= lr * *v;
            }
        }
        OptimizerConfig::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            if slot.first.len() != params.len() {
                slot.first = vec![0.0; params.len()];
                slot.second = vec![0.0; params.len()];
            }
            let c1 = 1.0 - beta1.powi(t as i32);
            let c2 = 1.0 - beta2.powi(t as i32);
            for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                let m = &mut slot.first[i];
                let v = &mut slot.second[i];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(config: OptimizerConfig, grads: &[f64], steps: u64) -> Vec<f64> {
        let mut p = vec![0.0; grads.len()];
        let (mut m, mut v) = (Vec::new(), Vec::new());
        let mut trace = Vec::new();
        for t in 1..=steps {
            optimizer_step(&config, &mut p, grads, &mut m, &mut v, t);
            trace.push(p[0]);
        }
        trace
    }

    #[test]
    fn sgd_single_step() {
        assert_eq!(run(OptimizerConfig::Sgd { lr: 0.1 }, &[1.0], 1), vec![-0.1]);
    }

    #[test]
    fn momentum_two_steps() {
        let trace = run(
            OptimizerConfig::Momentum {
                lr: 0.1,
                momentum: 0.9,
            },
            &[1.0],
            2,
        );
        assert!((trace[0] + 0.1).abs() < 1e-15);
        assert!((trace[1] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_has_magnitude_lr() {
        // m̂ = g and v̂ = g² at t = 1, so the step is lr·g/(|g| + eps).
        for &g in &[1e-3, 0.5, 7.0, -250.0] {
            let trace = run(OptimizerConfig::adam(0.01), &[g], 1);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((trace[0] - expected).abs() < 1e-15);
            assert!((trace[0].abs() - 0.01).abs() < 1e-7);
        }
    }
}
