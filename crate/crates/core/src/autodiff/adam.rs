//! Named parameter storage with Adam state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    value: Matrix,
    m: Matrix,
    v: Matrix,
}

/// Ordered, named parameter tensors and their optimizer moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let (r, c) = value.shape();
        self.slots.push(Slot {
            name: name.into(),
            value,
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
        });
        self.slots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, i: usize) -> &Matrix {
        &self.slots[i].value
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Matrix {
        &mut self.slots[i].value
    }

    pub fn name(&self, i: usize) -> &str {
        &self.slots[i].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn values(&self) -> impl Iterator<Item = &Matrix> {
        self.slots.iter().map(|s| &s.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.value))
    }

    /// Number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(|s| s.value.as_slice().len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Zero tensors shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.slots
            .iter()
            .map(|s| Matrix::zeros(s.value.rows(), s.value.cols()))
            .collect()
    }

    /// Scalar `k` in the concatenation of all tensors, in push order.
    pub fn flat_get(&self, k: usize) -> f64 {
        let (i, j) = self.locate(k);
        self.slots[i].value.as_slice()[j]
    }

    pub fn flat_set(&mut self, k: usize, x: f64) {
        let (i, j) = self.locate(k);
        self.slots[i].value.as_mut_slice()[j] = x;
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, s) in self.slots.iter().enumerate() {
            let n = s.value.as_slice().len();
            if k < n {
                return (i, k);
            }
            k -= n;
        }
        panic!("flat parameter index out of range");
    }

    /// One Adam update with bias correction. Gradients are clipped to the
    /// configured global norm first; returns the pre-clip norm.
    pub fn adam_step(&mut self, grads: &mut [Matrix], cfg: &AdamConfig) -> Result<f64> {
        if grads.len() != self.slots.len() {
            return Err(Error::dim(
                "adam_step",
                format!("{} gradients for {} parameters", grads.len(), self.slots.len()),
            ));
        }
        for (s, g) in self.slots.iter().zip(grads.iter()) {
            if s.value.shape() != g.shape() {
                return Err(Error::dim(
                    "adam_step",
                    format!("gradient {:?} for parameter {} {:?}", g.shape(), s.name, s.value.shape()),
                ));
            }
        }
        let norm = if cfg.clip > 0.0 {
            clip_global_norm(grads, cfg.clip)
        } else {
            global_norm(grads)
        };
        if !norm.is_finite() {
            return Err(Error::Numeric {
                op: "adam_step",
                detail: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (s, g) in self.slots.iter_mut().zip(grads.iter()) {
            let it = s
                .value
                .as_mut_slice()
                .iter_mut()
                .zip(s.m.as_mut_slice())
                .zip(s.v.as_mut_slice())
                .zip(g.as_slice());
            for (((p, m), v), &gi) in it {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(norm)
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads
        .iter()
        .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so their joint Frobenius norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("x", Matrix::filled(1, 1, x));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(2.5);
        let mut g = vec![Matrix::zeros(1, 1)];
        s.adam_step(&mut g, &AdamConfig::default()).unwrap();
        assert_eq!(s.get(0)[(0, 0)], 2.5);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for &g0 in &[0.3, -0.02] {
            let mut s = store(0.0);
            let mut g = vec![Matrix::filled(1, 1, g0)];
            s.adam_step(&mut g, &AdamConfig::default()).unwrap();
            let moved = s.get(0)[(0, 0)];
            let expected = -1e-3 * g0 / (g0.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-12, "{moved} vs {expected}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut s = store(0.0);
        let mut g = vec![Matrix::zeros(2, 1)];
        assert!(matches!(
            s.adam_step(&mut g, &AdamConfig::default()),
            Err(Error::Dimension { .. })
        ));
        assert!(s.adam_step(&mut [], &AdamConfig::default()).is_err());
    }

    #[test]
    fn clipping_caps_joint_norm() {
        let mut g = vec![Matrix::filled(1, 2, 3.0), Matrix::filled(1, 1, 4.0)];
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 34f64.sqrt()).abs() < 1e-12);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_indexing_spans_tensors() {
        let mut s = ParamStore::new();
        s.push("a", Matrix::filled(2, 2, 1.0));
        s.push("b", Matrix::filled(1, 3, 2.0));
        assert_eq!(s.scalar_count(), 7);
        s.flat_set(5, 9.0);
        assert_eq!(s.get(1)[(0, 1)], 9.0);
        assert_eq!(s.flat_get(3), 1.0);
    }
}
