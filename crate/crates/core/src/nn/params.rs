use std::collections::HashMap;

use crate::numerics::Rng;
use crate::{Error, Result};

/// Handle to one registered parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub(crate) fn velocity_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.value, &mut self.grad, &mut self.velocity)
    }
}

/// Named trainable tensors, in registration order, with paired gradient and
/// momentum storage.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    entries: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        let numel: usize = shape.iter().product();
        if value.len() != numel {
            return Err(Error::shape("Parameters::register", format!("{shape:?}"), value.len()));
        }
        if self.by_name.contains_key(&name) {
            return Err(Error::Parameter(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id.0);
        self.entries.push(Param {
            name,
            shape: shape.to_vec(),
            grad: vec![0.0; numel],
            velocity: vec![0.0; numel],
            value,
        });
        Ok(id)
    }

    /// Weight matrix with entries uniform in `±1/√fan_in`.
    pub fn register_uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let value = (0..numel).map(|_| rng.uniform_range(-bound, bound)).collect();
        self.register(name, shape, value)
    }

    pub fn register_constant(&mut self, name: impl Into<String>, shape: &[usize], c: f64) -> Result<ParamId> {
        let numel: usize = shape.iter().product();
        self.register(name, shape, vec![c; numel])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(Param::len).sum()
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds a gradient buffer into the paired gradient storage.
    pub fn accumulate(&mut self, grads: &Grads) {
        for (p, g) in self.entries.iter_mut().zip(&grads.bufs) {
            for (a, b) in p.grad.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// Replaces every value with the same-named value from `other`; shapes must match.
    pub fn load_values(&mut self, other: &Parameters) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match model's {}",
                other.len(),
                self.len()
            )));
        }
        for p in &mut self.entries {
            let src = other
                .find(&p.name)
                .map(|id| other.param(id))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", p.name)))?;
            if src.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name, src.shape, p.shape
                )));
            }
            p.value.copy_from_slice(&src.value);
        }
        Ok(())
    }
}

/// Gradient buffer shaped like a [`Parameters`] set.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    bufs: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(params: &Parameters) -> Self {
        Grads {
            bufs: params.entries.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    pub fn zero(&mut self) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|v| v.is_finite())
    }

    /// Euclidean norm over every entry, in registration order.
    pub fn norm(&self) -> f64 {
        self.bufs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.bufs.iter_mut().flatten().for_each(|v| *v *= factor);
    }
}
