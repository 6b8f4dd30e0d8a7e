use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Glorot/Xavier uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Per-parameter gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: store
                .values
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_in_place(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}
