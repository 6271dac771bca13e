use crate::error::{shape_err, Result};

/// Dense row-major `f64` array with an optional gradient buffer.
///
/// The gradient buffer exists exactly when `requires_grad` is set. Gradients
/// accumulate across backward passes until [`Tensor::zero_grad`] is called.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return shape_err(format!("dims must be positive, got {dims:?}"));
        }
        let count: usize = dims.iter().product();
        if count != values.len() {
            return shape_err(format!(
                "dims {dims:?} hold {count} values but {} were supplied",
                values.len()
            ));
        }
        Ok(Self {
            dims,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let count = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; count],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            dims: vec![values.len()],
            values,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn scalar(value: f64) -> Self {
        Self::vector(vec![value])
    }

    /// Marks the tensor as trainable, allocating a zeroed gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        self.grad = on.then(|| vec![0.0; self.values.len()]);
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    /// Adds `delta` into the gradient buffer. No-op for non-trainable tensors.
    pub(crate) fn accumulate_grad(&mut self, delta: &[f64]) {
        if let Some(g) = self.grad.as_mut() {
            debug_assert_eq!(g.len(), delta.len());
            for (g, d) in g.iter_mut().zip(delta) {
                *g += d;
            }
        }
    }

    /// Size of the trailing dimension.
    pub fn last_dim(&self) -> usize {
        *self.dims.last().expect("tensor has at least one dim")
    }

    /// Interprets the tensor as `rows × last_dim`.
    pub fn rows(&self) -> usize {
        self.values.len() / self.last_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.last_dim();
        &self.values[r * w..(r + 1) * w]
    }
}
