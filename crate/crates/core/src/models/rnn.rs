//! Tanh RNN `h_t = tanh(W_rec h_{t−1} + W_in x_t + b)`, optionally projected
//! onto the unit sphere after every step.

use crate::autodiff::{Graph, ParamStore};
use crate::error::{Error, Result};
use crate::tasks::{Episode, Task};
use crate::tensor::{Matrix, RngState};

use super::{batch_len, check_tokens, noise_rows, Forward, NoiseCtx};

/// With one-hot inputs `W_in x_t` is a column of `W_in`; the parameter is
/// stored transposed (`vocab x N`) so a step is a row lookup.
#[derive(Clone, Debug)]
pub struct Rnn {
    pub(crate) task: Task,
    pub(crate) n: usize,
    pub(crate) normalized: bool,
    pub(crate) store: ParamStore,
}

const W_REC: usize = 0;
const W_IN: usize = 1;
const BIAS: usize = 2;
const OUT_BIAS: usize = 3;
const READOUT: usize = 4;

impl Rnn {
    pub fn new(task: Task, n: usize, normalized: bool, init_scale: f64, rng: &mut RngState) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("rnn hidden size must be positive"));
        }
        let mut store = ParamStore::new();
        let std = init_scale / (n as f64).sqrt();
        store.push("w_rec", rng.gaussian_matrix(n, n, std));
        store.push("w_in", rng.gaussian_matrix(task.vocab_size(), n, init_scale));
        store.push("bias", Matrix::zeros(1, n));
        store.push("readout_bias", Matrix::zeros(task.queries(), task.classes()));
        for q in 0..task.queries() {
            store.push(
                format!("readout.{q}"),
                rng.gaussian_matrix(task.classes(), n, 1.0 / (n as f64).sqrt()),
            );
        }
        Ok(Self {
            task,
            n,
            normalized,
            store,
        })
    }

    pub(crate) fn from_store(task: Task, n: usize, normalized: bool, store: ParamStore) -> Result<Self> {
        let fresh = Self::new(task, n, normalized, 1.0, &mut RngState::new(0))?;
        super::check_layout(&fresh.store, &store)?;
        Ok(Self {
            task,
            n,
            normalized,
            store,
        })
    }

    pub fn hidden(&self) -> usize {
        self.n
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn w_rec(&self) -> &Matrix {
        self.store.get(W_REC)
    }

    pub fn w_in(&self) -> &Matrix {
        self.store.get(W_IN)
    }

    pub fn bias(&self) -> &Matrix {
        self.store.get(BIAS)
    }

    /// States `h_1 … h_L` of one sequence started from the row vector `h0`.
    pub fn unroll<'p, G: Graph<'p>>(&'p self, g: &mut G, tokens: &[usize], h0: &G::Var) -> Result<Vec<G::Var>> {
        let w_rec = g.param(self.store.get(W_REC));
        let w_in = g.param(self.store.get(W_IN));
        let bias = g.param(self.store.get(BIAS));
        let mut states = Vec::with_capacity(tokens.len());
        let mut h = h0.clone();
        for &t in tokens {
            let x = g.embed(&w_in, &[t])?;
            let rec = g.matvec(&w_rec, &h)?;
            let pre = g.add(&rec, &x)?;
            let pre = g.add(&pre, &bias)?;
            h = g.tanh(&pre);
            if self.normalized {
                h = g.normalize_rows(&h);
            }
            states.push(h.clone());
        }
        Ok(states)
    }

    pub fn forward<'p, G: Graph<'p>>(
        &'p self,
        g: &mut G,
        batch: &[Episode],
        mut noise: Option<NoiseCtx<'_>>,
    ) -> Result<Forward<G::Var>> {
        let len = batch_len(batch)?;
        check_tokens(batch, &self.task)?;
        let params: Vec<G::Var> = self.store.values().map(|m| g.param(m)).collect();
        let mut h = g.constant(Matrix::zeros(batch.len(), self.n));
        for t in 0..len {
            let toks: Vec<usize> = batch.iter().map(|e| e.tokens[t]).collect();
            let x = g.embed(&params[W_IN], &toks)?;
            let rec = g.matvec(&params[W_REC], &h)?;
            let pre = g.add(&rec, &x)?;
            let pre = g.add(&pre, &params[BIAS])?;
            h = g.tanh(&pre);
            if self.normalized {
                h = g.normalize_rows(&h);
            }
            if let Some(ctx) = noise.as_mut().filter(|c| c.temperature > 0.0) {
                let eta = noise_rows(g.value(&h), ctx.temperature, ctx.rngs, 1);
                let c = g.constant(eta);
                h = g.add(&h, &c)?;
                if self.normalized {
                    h = g.normalize_rows(&h);
                }
            }
        }
        let queries: Vec<usize> = batch.iter().map(Episode::readout).collect();
        let maps: Vec<G::Var> = (0..self.task.queries()).map(|q| params[READOUT + q].clone()).collect();
        let logits = g.gather_matvec(&maps, &queries, &h)?;
        let bias = g.embed(&params[OUT_BIAS], &queries)?;
        let logits = g.add(&logits, &bias)?;
        Ok(Forward {
            params,
            logits,
            state: h,
        })
    }
}
