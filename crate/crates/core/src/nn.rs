//! Named parameter storage and the small layer helpers shared by the models.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Standard deviation of the truncated-normal projection init.
pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-5;

/// Ordered map from parameter name to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.params.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Moves every tensor of `other` into `self`, replacing equal names.
    pub fn merge(&mut self, other: ParamStore<T>) {
        self.params.extend(other.params);
    }

    /// Copy of the subset whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Records every parameter on `tape`. Those for which `trainable`
    /// returns true are tracked for gradients.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| {
                let v = tape
                    .input(t.shape(), t.data().to_vec(), trainable(k))
                    .expect("stored tensors have valid shapes");
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Accumulates tape gradients of tracked bindings into the tensors.
    pub fn collect_grads(&mut self, tape: &Tape<T>, bound: &Bound) -> Result<()> {
        for (name, &v) in &bound.vars {
            if !tape.requires_grad(v) {
                continue;
            }
            if let Some(g) = tape.grad(v) {
                let p = self.get_mut(name)?;
                p.requires_grad = true;
                p.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Parameter name → tape handle for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

/// Parameter initialisation from a seeded stream.
pub struct Init<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: SplitMix64,
}

impl<'a, T: Real> Init<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Self {
            store,
            rng: SplitMix64::new(seed),
        }
    }

    pub fn trunc_normal(&mut self, name: &str, shape: &[usize], std: f64) {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::cst(self.rng.trunc_normal(std))).collect();
        self.store
            .insert(name, Tensor::new(shape, data).expect("init shape"));
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) {
        self.store.insert(name, Tensor::zeros(shape));
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) {
        self.store.insert(name, Tensor::filled(shape, T::one()));
    }

    /// `{prefix}.weight[in×out]` (truncated normal σ) and optional zero bias.
    pub fn linear(&mut self, prefix: &str, fin: usize, fout: usize, bias: bool, std: f64) {
        self.trunc_normal(&format!("{prefix}.weight"), &[fin, fout], std);
        if bias {
            self.zeros(&format!("{prefix}.bias"), &[fout]);
        }
    }

    pub fn layer_norm(&mut self, prefix: &str, d: usize) {
        self.ones(&format!("{prefix}.weight"), &[d]);
        self.zeros(&format!("{prefix}.bias"), &[d]);
    }

    pub fn conv(&mut self, prefix: &str, k: usize, cin: usize, cout: usize, std: f64) {
        self.trunc_normal(&format!("{prefix}.weight"), &[k, k, cin, cout], std);
        self.zeros(&format!("{prefix}.bias"), &[cout]);
    }
}

pub fn linear<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.try_get(&format!("{prefix}.bias"));
    tape.linear(x, w, b)
}

pub fn layer_norm<T: Real>(tape: &mut Tape<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let g = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    tape.layer_norm(x, g, b, T::cst(LN_EPS))
}

/// Slice `[start, start+len)` of the last axis.
pub fn narrow_last<T: Real>(tape: &mut Tape<T>, x: Var, start: usize, len: usize) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let d = *shape.last().unwrap();
    if start + len > d || len == 0 {
        return Err(Error::InvalidShape {
            op: "narrow_last",
            shape,
            reason: "slice exceeds last axis",
        });
    }
    let rows = tape.value(x).len() / d;
    let mut index = Vec::with_capacity(rows * len);
    for r in 0..rows {
        index.extend((0..len).map(|j| r * d + start + j));
    }
    let mut out = shape;
    *out.last_mut().unwrap() = len;
    tape.gather(x, index.into(), &out)
}

/// Counts of a linear layer's weight and bias.
pub const fn linear_params(fin: usize, fout: usize, bias: bool) -> usize {
    fin * fout + if bias { fout } else { 0 }
}
