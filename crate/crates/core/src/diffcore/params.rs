use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    #[serde(flatten)]
    tensor: TensorRepr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRepr {
    dims: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
}

/// Owns every parameter tensor of a model, addressed by [`ParamId`].
///
/// Serializes as an ordered list of `{name, dims, values, requires_grad}`;
/// gradient buffers are not persisted and come back zeroed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.requires_grad())
            .map(Tensor::len)
            .sum()
    }

    /// Concatenated values of all trainable tensors, in insertion order.
    pub fn flat_trainable(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .filter(|t| t.requires_grad())
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }

    /// Concatenated gradients of all trainable tensors, in insertion order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter().copied())
            .collect()
    }

    /// Overwrites trainable values from a flat vector laid out like
    /// [`ParamStore::flat_trainable`].
    pub fn set_flat_trainable(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.trainable_count(), "flat length mismatch");
        let mut offset = 0;
        for t in self.tensors.iter_mut().filter(|t| t.requires_grad()) {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

impl Serialize for ParamStore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<NamedTensor> = self
            .names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                tensor: TensorRepr {
                    dims: t.dims().to_vec(),
                    values: t.values().to_vec(),
                    requires_grad: t.requires_grad(),
                },
            })
            .collect();
        list.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamStore {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let list = Vec::<NamedTensor>::deserialize(d)?;
        let mut store = ParamStore::new();
        for entry in list {
            let mut t = Tensor::new(entry.tensor.dims, entry.tensor.values)
                .map_err(serde::de::Error::custom)?;
            t.set_requires_grad(entry.tensor.requires_grad);
            store.insert(entry.name, t);
        }
        Ok(store)
    }
}
