//! The holonomic network: `h_t = exp(M(x_t) − M(x_t)ᵀ) h_{t−1}`.

use crate::autodiff::{Graph, ParamStore, Precision};
use crate::error::{Error, Result};
use crate::tasks::{Episode, Task};
use crate::tensor::{mat_exp, skew, Matrix, RngState, Vector};

use super::{batch_len, check_tokens, noise_rows, Forward, NoiseCtx};

/// Parameters: one generator per token, a unit initial state and
/// one bias-free readout map per query.
#[derive(Clone, Debug)]
pub struct Holonomic {
    pub(crate) task: Task,
    pub(crate) n: usize,
    pub(crate) store: ParamStore,
}

const H0: usize = 0;

impl Holonomic {
    pub fn new(task: Task, n: usize, init_scale: f64, rng: &mut RngState) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("holonomic hidden size must be positive"));
        }
        let mut store = ParamStore::new();
        let h0 = rng.gaussian(n).normalized();
        store.push("h0", h0.as_row());
        let std = init_scale / (n as f64).sqrt();
        for k in 0..task.vocab_size() {
            store.push(format!("gen.{k}"), rng.gaussian_matrix(n, n, std));
        }
        for q in 0..task.queries() {
            store.push(
                format!("readout.{q}"),
                rng.gaussian_matrix(task.classes(), n, 1.0 / (n as f64).sqrt()),
            );
        }
        Ok(Self { task, n, store })
    }

    /// Rebuilds a model around existing parameters, checking their layout.
    pub(crate) fn from_store(task: Task, n: usize, store: ParamStore) -> Result<Self> {
        let fresh = Self::new(task, n, 1.0, &mut RngState::new(0))?;
        super::check_layout(&fresh.store, &store)?;
        Ok(Self { task, n, store })
    }

    pub fn hidden(&self) -> usize {
        self.n
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn gen_index(&self, k: usize) -> usize {
        1 + k
    }

    fn readout_index(&self, q: usize) -> usize {
        1 + self.task.vocab_size() + q
    }

    pub fn generator(&self, k: usize) -> &Matrix {
        self.store.get(self.gen_index(k))
    }

    pub fn h0(&self) -> Vector {
        Vector::from_vec(self.store.get(H0).as_slice().to_vec())
    }

    pub fn readout(&self, q: usize) -> &Matrix {
        self.store.get(self.readout_index(q))
    }

    /// Transition operators `exp(M_k − M_kᵀ)` for every token.
    pub fn operators(&self) -> Result<Vec<Matrix>> {
        (0..self.task.vocab_size())
            .map(|k| mat_exp(&skew(self.generator(k))?))
            .collect()
    }

    /// Re-projects `h0` to the unit sphere; called after each optimizer step.
    pub fn project(&mut self) {
        let h0 = self.store.get_mut(H0);
        let n = h0.frobenius_norm();
        if n > 0.0 {
            h0.scale_in_place(1.0 / n);
        }
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

        // Only tokens that occur in the batch need an exponential.
        let vocab = self.task.vocab_size();
        let mut slot = vec![usize::MAX; vocab];
        let mut ops = Vec::new();
        for e in batch {
            for &t in &e.tokens {
                if slot[t] == usize::MAX {
                    slot[t] = ops.len();
                    let a = g.skew(&params[self.gen_index(t)])?;
                    ops.push(g.mat_exp(&a)?);
                }
            }
        }

        let h0_norm = self.store.get(H0).frobenius_norm();
        let mut h = g.embed(&params[H0], &vec![0; batch.len()])?;
        for t in 0..len {
            let ids: Vec<usize> = batch.iter().map(|e| slot[e.tokens[t]]).collect();
            h = g.gather_matvec(&ops, &ids, &h)?;
            if let Some(ctx) = noise.as_mut().filter(|c| c.temperature > 0.0) {
                let eta = noise_rows(g.value(&h), ctx.temperature, ctx.rngs, 1);
                let c = g.constant(eta);
                h = g.add(&h, &c)?;
                h = g.normalize_rows(&h);
                if h0_norm != 1.0 {
                    h = g.scale(&h, h0_norm);
                }
            }
        }
        let maps: Vec<G::Var> = (0..self.task.queries())
            .map(|q| params[self.readout_index(q)].clone())
            .collect();
        let queries: Vec<usize> = batch.iter().map(Episode::readout).collect();
        let logits = g.gather_matvec(&maps, &queries, &h)?;
        Ok(Forward {
            params,
            logits,
            state: h,
        })
    }

    /// States `h_1 … h_L` of one sequence started from the row vector `h0`,
    /// with the transition operators entering as constants.
    pub fn unroll<'p, G: Graph<'p>>(&'p self, g: &mut G, tokens: &[usize], h0: &G::Var) -> Result<Vec<G::Var>> {
        let vocab = self.task.vocab_size();
        let mut ops: Vec<Option<G::Var>> = vec![None; vocab];
        let mut states = Vec::with_capacity(tokens.len());
        let mut h = h0.clone();
        for &t in tokens {
            if t >= vocab {
                return Err(Error::arg(format!("token {t} outside vocabulary of {vocab}")));
            }
            if ops[t].is_none() {
                let u = mat_exp(&skew(self.generator(t))?)?;
                ops[t] = Some(g.constant(u));
            }
            h = g.matvec(ops[t].as_ref().expect("just filled"), &h)?;
            states.push(h.clone());
        }
        Ok(states)
    }

    /// Eager evaluation with precomputed operators.
    pub(crate) fn evaluate_fast(
        &self,
        batch: &[Episode],
        mut noise: Option<NoiseCtx<'_>>,
        precision: Precision,
    ) -> Result<(Matrix, Matrix)> {
        let len = batch_len(batch)?;
        check_tokens(batch, &self.task)?;
        let mut ops = self.operators()?;
        if precision == Precision::F32 {
            ops.iter_mut().for_each(Matrix::round_to_f32);
        }
        let h0 = self.store.get(H0);
        let h0_norm = h0.frobenius_norm();
        let mut states = Matrix::zeros(batch.len(), self.n);
        for r in 0..batch.len() {
            states.row_mut(r).copy_from_slice(h0.as_slice());
        }
        let mut next = vec![0.0; self.n];
        for t in 0..len {
            for (r, e) in batch.iter().enumerate() {
                let u = &ops[e.tokens[t]];
                let h = states.row_mut(r);
                for (i, o) in next.iter_mut().enumerate() {
                    *o = crate::tensor::dot(u.row(i), h);
                }
                h.copy_from_slice(&next);
            }
            if let Some(ctx) = noise.as_mut().filter(|c| c.temperature > 0.0) {
                let eta = noise_rows(&states, ctx.temperature, ctx.rngs, 1);
                states.add_assign(&eta);
                for r in 0..batch.len() {
                    let row = states.row_mut(r);
                    let n = crate::tensor::dot(row, row).sqrt();
                    if n > 0.0 {
                        for v in row.iter_mut() {
                            *v *= h0_norm / n;
                        }
                    }
                }
            }
            if precision == Precision::F32 {
                states.round_to_f32();
            }
        }
        let mut logits = Matrix::zeros(batch.len(), self.task.classes());
        for (r, e) in batch.iter().enumerate() {
            let w = self.readout(e.readout());
            let h = states.row(r);
            for (c, l) in logits.row_mut(r).iter_mut().enumerate() {
                *l = crate::tensor::dot(w.row(c), h);
            }
        }
        Ok((logits, states))
    }
}
