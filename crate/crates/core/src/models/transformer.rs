//! Pre-norm Transformer encoder classifier.

use serde::{Deserialize, Serialize};

use crate::autodiff::{AttentionSpec, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::tasks::{Episode, Task};
use crate::tensor::{Matrix, RngState};

use super::{batch_len, check_tokens, noise_rows, Forward, NoiseCtx, NoiseSite};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positional {
    Learned,
    Sinusoidal,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Representation of the last position.
    Final,
    /// Mean over positions.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransformerDims {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub positional: Positional,
    /// Rows of the learned positional table.
    pub max_len: usize,
    pub pooling: Pooling,
}

#[derive(Clone, Debug)]
pub struct Transformer {
    pub(crate) task: Task,
    pub(crate) dims: TransformerDims,
    pub(crate) store: ParamStore,
    layer_base: usize,
    head_base: usize,
}

const LN_EPS: f64 = 1e-5;
const PER_LAYER: usize = 16;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn sinusoidal(len: usize, d: usize) -> Matrix {
    Matrix::from_fn(len, d, |pos, i| {
        let freq = (10000f64).powf(-((i - i % 2) as f64) / d as f64);
        let x = pos as f64 * freq;
        if i % 2 == 0 {
            x.sin()
        } else {
            x.cos()
        }
    })
}

impl Transformer {
    pub fn new(task: Task, dims: TransformerDims, rng: &mut RngState) -> Result<Self> {
        let TransformerDims {
            d_model: d,
            layers,
            heads,
            d_ff,
            ..
        } = dims;
        if d == 0 || heads == 0 || d % heads != 0 {
            return Err(Error::arg(format!("d_model {d} must be a positive multiple of heads {heads}")));
        }
        if dims.positional == Positional::Learned && dims.max_len == 0 {
            return Err(Error::arg("learned positional table needs max_len >= 1"));
        }
        let mut store = ParamStore::new();
        let std_d = 1.0 / (d as f64).sqrt();
        store.push("embed", rng.gaussian_matrix(task.vocab_size(), d, 1.0));
        if dims.positional == Positional::Learned {
            store.push("pos", rng.gaussian_matrix(dims.max_len, d, 1.0));
        }
        let layer_base = store.len();
        for l in 0..layers {
            store.push(format!("layer{l}.ln1.gain"), Matrix::filled(1, d, 1.0));
            store.push(format!("layer{l}.ln1.bias"), Matrix::zeros(1, d));
            for w in ["q", "k", "v", "o"] {
                store.push(format!("layer{l}.w{w}"), rng.gaussian_matrix(d, d, std_d));
                store.push(format!("layer{l}.b{w}"), Matrix::zeros(1, d));
            }
            store.push(format!("layer{l}.ln2.gain"), Matrix::filled(1, d, 1.0));
            store.push(format!("layer{l}.ln2.bias"), Matrix::zeros(1, d));
            store.push(format!("layer{l}.w1"), rng.gaussian_matrix(d, d_ff, std_d));
            store.push(format!("layer{l}.b1"), Matrix::zeros(1, d_ff));
            store.push(
                format!("layer{l}.w2"),
                rng.gaussian_matrix(d_ff, d, 1.0 / (d_ff.max(1) as f64).sqrt()),
            );
            store.push(format!("layer{l}.b2"), Matrix::zeros(1, d));
        }
        if layers > 0 {
            store.push("ln_final.gain", Matrix::filled(1, d, 1.0));
            store.push("ln_final.bias", Matrix::zeros(1, d));
        }
        let head_base = store.len();
        store.push("readout_bias", Matrix::zeros(task.queries(), task.classes()));
        for q in 0..task.queries() {
            store.push(format!("readout.{q}"), rng.gaussian_matrix(task.classes(), d, std_d));
        }
        Ok(Self {
            task,
            dims,
            store,
            layer_base,
            head_base,
        })
    }

    pub(crate) fn from_store(task: Task, dims: TransformerDims, store: ParamStore) -> Result<Self> {
        let mut fresh = Self::new(task, dims, &mut RngState::new(0))?;
        super::check_layout(&fresh.store, &store)?;
        fresh.store = store;
        Ok(fresh)
    }

    pub fn dims(&self) -> &TransformerDims {
        &self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn layer_norm<'p, G: Graph<'p>>(g: &mut G, x: &G::Var, gain: &G::Var, bias: &G::Var) -> Result<G::Var> {
        let y = g.layer_norm(x, LN_EPS);
        let y = g.hadamard(&y, gain)?;
        g.add(&y, bias)
    }

    fn linear<'p, G: Graph<'p>>(g: &mut G, x: &G::Var, w: &G::Var, b: &G::Var) -> Result<G::Var> {
        let y = g.matmul(x, w)?;
        g.add(&y, b)
    }

    fn gelu<'p, G: Graph<'p>>(g: &mut G, x: &G::Var, width: usize) -> Result<G::Var> {
        let x2 = g.hadamard(x, x)?;
        let x3 = g.hadamard(&x2, x)?;
        let cubic = g.scale(&x3, 0.044715);
        let inner = g.add(x, &cubic)?;
        let inner = g.scale(&inner, GELU_C);
        let t = g.tanh(&inner);
        let one = g.constant(Matrix::filled(1, width, 1.0));
        let gate = g.add(&t, &one)?;
        let y = g.hadamard(x, &gate)?;
        Ok(g.scale(&y, 0.5))
    }

    pub fn forward<'p, G: Graph<'p>>(
        &'p self,
        g: &mut G,
        batch: &[Episode],
        mut noise: Option<NoiseCtx<'_>>,
    ) -> Result<Forward<G::Var>> {
        let len = batch_len(batch)?;
        check_tokens(batch, &self.task)?;
        let dims = self.dims;
        if dims.positional == Positional::Learned && len > dims.max_len {
            return Err(Error::Capacity {
                len,
                capacity: dims.max_len,
            });
        }
        let b = batch.len();
        let d = dims.d_model;
        let params: Vec<G::Var> = self.store.values().map(|m| g.param(m)).collect();
        let tokens: Vec<usize> = batch.iter().flat_map(|e| e.tokens.iter().copied()).collect();
        let mut x = g.embed(&params[0], &tokens)?;
        match dims.positional {
            Positional::Learned => {
                let positions: Vec<usize> = (0..b).flat_map(|_| 0..len).collect();
                let p = g.embed(&params[1], &positions)?;
                x = g.add(&x, &p)?;
            }
            Positional::Sinusoidal => {
                let table = sinusoidal(len, d);
                let mut full = Matrix::zeros(b * len, d);
                for i in 0..b {
                    full.set_block(i * len, 0, &table);
                }
                let p = g.constant(full);
                x = g.add(&x, &p)?;
            }
            Positional::None => {}
        }
        let spec = AttentionSpec {
            batch: b,
            len,
            heads: dims.heads,
            causal: false,
        };
        for l in 0..dims.layers {
            let p = &params[self.layer_base + l * PER_LAYER..self.layer_base + (l + 1) * PER_LAYER];
            let a = Self::layer_norm(g, &x, &p[0], &p[1])?;
            let q = Self::linear(g, &a, &p[2], &p[3])?;
            let k = Self::linear(g, &a, &p[4], &p[5])?;
            let v = Self::linear(g, &a, &p[6], &p[7])?;
            let att = g.attention(&q, &k, &v, spec)?;
            let o = Self::linear(g, &att, &p[8], &p[9])?;
            x = g.add(&x, &o)?;
            let f = Self::layer_norm(g, &x, &p[10], &p[11])?;
            let f = Self::linear(g, &f, &p[12], &p[13])?;
            let f = Self::gelu(g, &f, dims.d_ff)?;
            let f = Self::linear(g, &f, &p[14], &p[15])?;
            x = g.add(&x, &f)?;
            if let Some(ctx) = noise.as_mut().filter(|c| c.temperature > 0.0) {
                let here = match ctx.site {
                    NoiseSite::Residual => true,
                    NoiseSite::FinalResidual => l + 1 == dims.layers,
                    NoiseSite::State => false,
                };
                if here {
                    let eta = noise_rows(g.value(&x), ctx.temperature, ctx.rngs, len);
                    let c = g.constant(eta);
                    x = g.add(&x, &c)?;
                }
            }
        }
        if dims.layers > 0 {
            let base = self.layer_base + dims.layers * PER_LAYER;
            x = Self::layer_norm(g, &x, &params[base], &params[base + 1])?;
        }
        let pooled = match dims.pooling {
            Pooling::Final => {
                let idx: Vec<usize> = (0..b).map(|i| i * len + len - 1).collect();
                g.select_rows(&x, &idx)?
            }
            Pooling::Mean => {
                let mut pool = Matrix::zeros(b, b * len);
                for i in 0..b {
                    for j in 0..len {
                        pool[(i, i * len + j)] = 1.0 / len as f64;
                    }
                }
                let pool = g.constant(pool);
                g.matmul(&pool, &x)?
            }
        };
        let queries: Vec<usize> = batch.iter().map(Episode::readout).collect();
        let maps: Vec<G::Var> = (0..self.task.queries())
            .map(|q| params[self.head_base + 1 + q].clone())
            .collect();
        let logits = g.gather_matvec(&maps, &queries, &pooled)?;
        let bias = g.embed(&params[self.head_base], &queries)?;
        let logits = g.add(&logits, &bias)?;
        Ok(Forward {
            params,
            logits,
            state: pooled,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_table_first_rows() {
        let t = sinusoidal(2, 4);
        assert_eq!(t.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((t[(1, 0)] - 1f64.sin()).abs() < 1e-15);
        assert!((t[(1, 3)] - (0.01f64).cos()).abs() < 1e-15);
    }
}
