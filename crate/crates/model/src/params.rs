use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::graph::{Gradients, Graph};
use crate::tensor::Tensor;

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.tensors[i] = t;
            return;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(|i| &mut self.tensors[i])
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.iter().find(|(_, t)| !t.is_finite()) {
            Some((name, _)) => Err(ModelError::NonFinite(format!("parameter {name}"))),
            None => Ok(()),
        }
    }

    /// Gradients aligned with the store; parameters the graph never read
    /// get zeros.
    pub fn collect_grads(&self, graph: &Graph, grads: &Gradients) -> Result<Vec<Tensor>> {
        (0..self.len())
            .map(|i| {
                let t = &self.tensors[i];
                let g = graph
                    .param_var(i)
                    .and_then(|v| grads.get(v))
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.rows, t.cols));
                if g.is_finite() {
                    Ok(g)
                } else {
                    Err(ModelError::NonFinite(format!("gradient of {}", self.names[i])))
                }
            })
            .collect()
    }
}

/// Uniform(−bound, bound) tensor.
pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut store.tensors[i];
            for (((w, gv), m), v) in p.data.iter_mut().zip(&g.data).zip(&mut self.m[i]).zip(&mut self.v[i]) {
                *m = beta1 * *m + (1.0 - beta1) * gv;
                *v = beta2 * *v + (1.0 - beta2) * gv * gv;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_keeps_order_and_replaces() {
        let mut s = ParamStore::default();
        s.insert("b", Tensor::zeros(1, 2));
        s.insert("a", Tensor::zeros(2, 2));
        s.insert("b", Tensor::zeros(1, 3));
        assert_eq!(s.names(), ["b", "a"]);
        assert_eq!(s.get("b").unwrap().cols, 3);
        assert_eq!(s.num_scalars(), 7);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut s = ParamStore::default();
        s.insert("w", Tensor::from_vec(1, 3, vec![1.0, 1.0, 1.0]));
        let mut opt = Adam::new(AdamConfig::default(), &s);
        opt.step(&mut s, &[Tensor::from_vec(1, 3, vec![0.5, -2.0, 0.0])]);
        let w = &s.get("w").unwrap().data;
        assert!((w[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[1] - (1.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut s = ParamStore::default();
        s.insert("w", Tensor::from_vec(1, 1, vec![3.0]));
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            &s,
        );
        for _ in 0..2000 {
            let w = s.get("w").unwrap().data[0];
            opt.step(&mut s, &[Tensor::scalar(2.0 * (w - 0.5))]);
        }
        assert!((s.get("w").unwrap().data[0] - 0.5).abs() < 1e-3);
    }
}
