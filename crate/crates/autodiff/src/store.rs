//! Named parameter storage with per-parameter AdamW moments.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub trainable: bool,
}

/// Map from dotted parameter path to tensor plus optimizer state.
///
/// Non-trainable entries (fixed buffers such as random Fourier frequency
/// matrices) are carried through checkpoints but skipped by the optimizer.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.insert_with(name, value, true);
    }

    pub fn insert_buffer(&mut self, name: &str, value: Tensor) {
        self.insert_with(name, value, false);
    }

    fn insert_with(&mut self, name: &str, value: Tensor, trainable: bool) {
        assert!(
            !self.entries.contains_key(name),
            "duplicate parameter name `{name}`"
        );
        let shape = value.shape().to_vec();
        self.entries.insert(
            name.to_string(),
            ParamEntry { value, m: Tensor::zeros(&shape), v: Tensor::zeros(&shape), trainable },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) {
        let e = self.entries.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        assert_eq!(e.value.shape(), value.shape(), "shape change for `{name}`");
        e.value = value;
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.entries.iter().filter(|(_, e)| e.trainable).map(|(k, _)| k.clone()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &ParamEntry)> {
        self.entries.iter()
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Enter every parameter on `tape` as a leaf, returning name -> Var.
    pub fn vars(&self, tape: &Tape) -> ParamVars {
        let map = self.entries.iter().map(|(k, e)| (k.clone(), tape.leaf(e.value.clone()))).collect();
        ParamVars { map }
    }
}

/// Tape leaves for one forward pass over a [`ParamStore`].
pub struct ParamVars {
    map: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> &Var {
        self.map.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Var> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.map.iter()
    }
}

/// AdamW hyperparameters. Decay is decoupled: applied to the parameter
/// directly, not through the gradient.
#[derive(Clone, Copy, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64) -> Self {
        AdamW { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-5 }
    }
}

impl ParamStore {
    /// One AdamW step over all trainable parameters. Parameters missing from
    /// `grads` see a zero gradient. Any non-finite gradient aborts the step
    /// before touching state.
    pub fn adamw_step(&mut self, grads: &BTreeMap<String, Tensor>, hp: AdamW) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            if let Some(e) = self.entries.get(name) {
                if g.shape() != e.value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "adamw_step",
                        lhs: g.shape().to_vec(),
                        rhs: e.value.shape().to_vec(),
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        let zero = Tensor::scalar(0.0);
        for (name, e) in self.entries.iter_mut() {
            if !e.trainable {
                continue;
            }
            let g = grads.get(name).map(|t| t.data()).unwrap_or(zero.data());
            let broadcast_zero = g.len() == 1 && e.value.numel() != 1;
            let n = e.value.numel();
            let mut new_val = Vec::with_capacity(n);
            let mut new_m = Vec::with_capacity(n);
            let mut new_v = Vec::with_capacity(n);
            for i in 0..n {
                let gi = if broadcast_zero { 0.0 } else { g[i] };
                let mi = hp.beta1 * e.m.data()[i] + (1.0 - hp.beta1) * gi;
                let vi = hp.beta2 * e.v.data()[i] + (1.0 - hp.beta2) * gi * gi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let theta = e.value.data()[i];
                new_val.push(theta - hp.lr * m_hat / (v_hat.sqrt() + hp.eps) - hp.lr * hp.weight_decay * theta);
                new_m.push(mi);
                new_v.push(vi);
            }
            let shape = e.value.shape().to_vec();
            e.value = Tensor::new(shape.clone(), new_val).unwrap();
            e.m = Tensor::new(shape.clone(), new_m).unwrap();
            e.v = Tensor::new(shape, new_v).unwrap();
        }
        Ok(())
    }
}
