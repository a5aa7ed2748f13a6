use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of trainable tensors owned by one network.
///
/// Layers store [`ParamId`]s; a forward pass first [`bind`](ParamSet::bind)s
/// the set into a graph, which yields one leaf per tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

/// Graph leaves for every tensor of a [`ParamSet`], in id order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Routes parameter `id` through another graph node, e.g. to probe a
    /// single tensor's gradient.
    pub fn replace(&mut self, id: ParamId, var: Var) {
        self.vars[id.0] = var;
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a leaf; `trainable` decides whether
    /// gradients flow into them.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| graph.leaf(t.clone(), trainable))
                .collect(),
        }
    }

    /// Collects per-parameter gradients (zeros where none arrived).
    pub fn gradients(&self, bound: &Bound, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        bound
            .vars
            .iter()
            .zip(&self.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect()
    }

    /// Replaces values by name, checking that names and shapes line up.
    pub fn load_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.names != self.names {
            return Err(Error::Format(format!(
                "parameter names differ: expected {} tensors, got {}",
                self.names.len(),
                other.names.len()
            )));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(Error::shape("load_from", dst.shape(), src.shape()));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// FNV-1a over names, shapes and raw bit patterns; changes whenever any
    /// parameter bit changes.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in self.iter() {
            eat(name.as_bytes());
            for &d in t.shape() {
                eat(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                eat(&v.to_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}
