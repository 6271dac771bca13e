use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{GradientTape, Var};
use super::tensor::Tensor;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

/// Fully connected layer whose weight (`out × in`) and bias (`out`) live in a
/// [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    /// Registers a layer with weights and biases drawn from
    /// `U(−1/√in, 1/√in)`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w: Vec<f64> = (0..out_dim * in_dim).map(|_| dist.sample(rng)).collect();
        let b: Vec<f64> = (0..out_dim).map(|_| dist.sample(rng)).collect();
        Self::from_values(store, name, in_dim, out_dim, activation, w, b)
            .expect("generated values have consistent dims")
    }

    pub fn from_values(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let w = Tensor::matrix(out_dim, in_dim, weight)?.with_grad();
        let b = Tensor::new(vec![out_dim], bias)?.with_grad();
        Ok(Self {
            weight: store.insert(format!("{name}.weight"), w),
            bias: store.insert(format!("{name}.bias"), b),
            in_dim,
            out_dim,
            activation,
        })
    }

    /// Checks that the stored tensors still match the declared widths.
    pub fn check(&self, store: &ParamStore) -> Result<()> {
        let (w, b) = (store.get(self.weight), store.get(self.bias));
        if w.dims() != [self.out_dim, self.in_dim] || b.dims() != [self.out_dim] {
            return shape_err(format!(
                "layer declared {}→{} but holds weight {:?}, bias {:?}",
                self.in_dim,
                self.out_dim,
                w.dims(),
                b.dims()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut GradientTape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let pre = tape.affine(x, w, b)?;
        Ok(match self.activation {
            Activation::Identity => pre,
            Activation::Relu => tape.relu(pre),
            Activation::Sigmoid => tape.sigmoid(pre),
        })
    }
}

/// Tape-free evaluation of one layer: `activation(W·x + b)` per row of `input`.
pub fn dense_forward(layer: &DenseLayer, store: &ParamStore, input: &Tensor) -> Result<Tensor> {
    let mut tape = GradientTape::new();
    let x = tape.constant(input);
    let y = layer.forward(&mut tape, store, x)?;
    Ok(tape.tensor(y))
}

/// Runs `x` through `layers` in order.
pub fn forward_stack(
    layers: &[DenseLayer],
    tape: &mut GradientTape,
    store: &ParamStore,
    x: Var,
) -> Result<Var> {
    layers
        .iter()
        .try_fold(x, |h, layer| layer.forward(tape, store, h))
}
