//! Minimal deterministic differentiable core: tensors, dense layers, a
//! gradient tape, optimizers and a finite-difference oracle.

mod gradcheck;
mod layer;
mod optim;
mod params;
pub mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use layer::{dense_forward, forward_stack, Activation, DenseLayer};
pub use optim::{optimizer_step, Optimizer, OptimizerConfig};
pub use params::{ParamId, ParamStore};
pub use tape::{GradientTape, Gradients, Var};
pub use tensor::Tensor;

/// Elementwise `log σ(x)` in the stable `−softplus(−x)` form.
pub fn log_sigmoid(x: &Tensor) -> Tensor {
    let values = x.values().iter().map(|&v| scalar::log_sigmoid(v)).collect();
    Tensor::new(x.dims().to_vec(), values).expect("same dims")
}

/// Row-wise log-probabilities over the last dimension via max-shifted
/// log-sum-exp.
pub fn softmax_logprobs(x: &Tensor) -> Tensor {
    let values = x
        .values()
        .chunks(x.last_dim())
        .flat_map(scalar::log_softmax)
        .collect();
    Tensor::new(x.dims().to_vec(), values).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let lp = softmax_logprobs(&Tensor::vector(vec![0.0; 3]));
        for v in lp.values() {
            assert!((v - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_stable() {
        let lp = softmax_logprobs(&Tensor::vector(vec![1000.0, 0.0]));
        let p: Vec<f64> = lp.values().iter().map(|v| v.exp()).collect();
        assert!(lp.is_finite());
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_matches_naive_two_pass_at_small_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lp = softmax_logprobs(&Tensor::vector(x.clone()));
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        for (l, v) in lp.values().iter().zip(&x) {
            assert!((l - (v.exp() / z).ln()).abs() < 1e-12);
        }
        let total: f64 = lp.values().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_over_wide_input_range() {
        let xs: Vec<f64> = vec![-1e6, -1e3, -1.0, 0.0, 1.0, 1e3, 1e6];
        assert!(log_sigmoid(&Tensor::vector(xs.clone())).is_finite());
        assert!(softmax_logprobs(&Tensor::vector(xs)).is_finite());
    }
}
