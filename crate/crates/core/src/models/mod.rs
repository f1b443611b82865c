//! The four sequence classifiers behind one interface, plus energy-normalized
//! noise injection and checkpoint persistence.

mod checkpoint;
mod holonomic;
mod rnn;
mod transformer;

use serde::{Deserialize, Serialize};

pub(crate) use checkpoint::fnv1a;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use holonomic::Holonomic;
pub use rnn::Rnn;
pub use transformer::{Pooling, Positional, Transformer, TransformerDims};

use crate::autodiff::{grad_check, Eval, GradCheck, Graph, ParamStore, Precision, Tape};
use crate::error::{Error, Result};
use crate::tasks::{Episode, Task};
use crate::tensor::{Matrix, RngState, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Holonomic,
    Rnn,
    NormalizedRnn,
    Transformer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Holonomic => "holonomic",
            ModelKind::Rnn => "rnn",
            ModelKind::NormalizedRnn => "normalized-rnn",
            ModelKind::Transformer => "transformer",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != ModelKind::Transformer
    }

    pub fn default_noise_site(self) -> NoiseSite {
        if self.is_recurrent() {
            NoiseSite::State
        } else {
            NoiseSite::Residual
        }
    }
}

/// Architecture hyperparameters. `hidden` is N for recurrent models and
/// `d_model` for the Transformer; the remaining fields apply to the
/// Transformer only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width; `0` means `2 * hidden`.
    pub d_ff: usize,
    pub positional: Positional,
    pub max_len: usize,
    /// Defaults to final-position for S₃ and mean-pool for binding.
    pub pooling: Option<Pooling>,
    /// Multiplier on the default initialization scale.
    pub init_scale: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Holonomic,
            hidden: 32,
            layers: 3,
            heads: 8,
            d_ff: 0,
            positional: Positional::Learned,
            max_len: 64,
            pooling: None,
            init_scale: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, hidden: usize) -> Self {
        Self {
            kind,
            hidden,
            ..Self::default()
        }
    }

    pub fn transformer(d_model: usize, layers: usize, heads: usize, d_ff: usize, positional: Positional) -> Self {
        Self {
            kind: ModelKind::Transformer,
            hidden: d_model,
            layers,
            heads,
            d_ff,
            positional,
            ..Self::default()
        }
    }

    pub fn dims(&self, task: Task) -> TransformerDims {
        TransformerDims {
            d_model: self.hidden,
            layers: self.layers,
            heads: self.heads,
            d_ff: if self.d_ff == 0 { 2 * self.hidden } else { self.d_ff },
            positional: self.positional,
            max_len: self.max_len,
            pooling: self.pooling.unwrap_or(if task.has_query() {
                Pooling::Mean
            } else {
                Pooling::Final
            }),
        }
    }
}

/// Where noise enters the computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSite {
    /// The recurrent state after every step.
    State,
    /// The Transformer residual stream after every layer, per position.
    Residual,
    /// The Transformer residual stream after the last layer only.
    FinalResidual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub temperature: f64,
    pub enabled: bool,
    pub site: NoiseSite,
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            temperature: 0.0,
            enabled: false,
            site: NoiseSite::State,
        }
    }

    pub fn at(temperature: f64, site: NoiseSite) -> Self {
        Self {
            temperature,
            enabled: true,
            site,
        }
    }
}

/// Noise state threaded through a forward pass: one stream per episode.
pub struct NoiseCtx<'a> {
    pub temperature: f64,
    pub site: NoiseSite,
    pub rngs: &'a mut [RngState],
}

/// Graph handles produced by a forward pass.
pub struct Forward<V> {
    /// Parameter leaves in store order.
    pub params: Vec<V>,
    /// `batch x classes`.
    pub logits: V,
    /// Final hidden representation per episode, `batch x hidden`.
    pub state: V,
}

fn noise_row(row: &[f64], temperature: f64, rng: &mut RngState) -> Vec<f64> {
    let n = row.len();
    let energy = crate::tensor::dot(row, row).sqrt();
    let scale = temperature / (n as f64).sqrt() * energy;
    (0..n).map(|_| scale * rng.standard_normal()).collect()
}

/// `h + g·(T/√N)·‖h‖` with `g` standard normal. `T = 0` returns `h` untouched
/// without consuming randomness.
pub fn inject_noise(h: &Vector, temperature: f64, rng: &mut RngState) -> Vector {
    if temperature == 0.0 {
        return h.clone();
    }
    let eta = noise_row(h.as_slice(), temperature, rng);
    Vector::from_vec(h.as_slice().iter().zip(&eta).map(|(a, b)| a + b).collect())
}

/// Noise for every row of `h`; rows `[k*rows_per_rng, (k+1)*rows_per_rng)` draw
/// from stream `k`.
pub(crate) fn noise_rows(h: &Matrix, temperature: f64, rngs: &mut [RngState], rows_per_rng: usize) -> Matrix {
    let mut eta = Matrix::zeros(h.rows(), h.cols());
    for r in 0..h.rows() {
        let row = noise_row(h.row(r), temperature, &mut rngs[r / rows_per_rng]);
        eta.row_mut(r).copy_from_slice(&row);
    }
    eta
}

pub(crate) fn batch_len(batch: &[Episode]) -> Result<usize> {
    let first = batch.first().ok_or_else(|| Error::arg("empty batch"))?;
    let len = first.len();
    if len == 0 {
        return Err(Error::arg("episodes must have at least one token"));
    }
    if batch.iter().any(|e| e.len() != len) {
        return Err(Error::arg("episodes in a batch must share one length"));
    }
    Ok(len)
}

pub(crate) fn check_tokens(batch: &[Episode], task: &Task) -> Result<()> {
    let vocab = task.vocab_size();
    for e in batch {
        if let Some(&t) = e.tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::arg(format!("token {t} outside vocabulary of {vocab}")));
        }
        if e.readout() >= task.queries() {
            return Err(Error::arg(format!("query {} outside {} readouts", e.readout(), task.queries())));
        }
        if e.target >= task.classes() {
            return Err(Error::arg(format!("target {} outside {} classes", e.target, task.classes())));
        }
    }
    Ok(())
}

pub(crate) fn check_layout(expected: &ParamStore, actual: &ParamStore) -> Result<()> {
    if expected.len() != actual.len() {
        return Err(Error::arg(format!(
            "expected {} parameter tensors, found {}",
            expected.len(),
            actual.len()
        )));
    }
    for ((en, em), (an, am)) in expected.iter().zip(actual.iter()) {
        if en != an || em.shape() != am.shape() {
            return Err(Error::arg(format!(
                "parameter {an} {:?} does not match expected {en} {:?}",
                am.shape(),
                em.shape()
            )));
        }
    }
    Ok(())
}

/// Trainable scalar counts, itemized by component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub items: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn get(&self, item: &str) -> usize {
        self.items
            .iter()
            .find(|(k, _)| k == item)
            .map_or(0, |(_, v)| *v)
    }
}

fn component(name: &str) -> &'static str {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    if name.starts_with("gen.") {
        "generators"
    } else if name.starts_with("readout") {
        "readout"
    } else if name == "h0" {
        "initial_state"
    } else if name == "w_rec" {
        "recurrent"
    } else if name == "w_in" {
        "input"
    } else if name == "bias" {
        "bias"
    } else if name == "embed" {
        "embedding"
    } else if name == "pos" {
        "positional"
    } else if name.contains(".ln") || name.starts_with("ln_") {
        "layer_norm"
    } else if matches!(leaf, "w1" | "b1" | "w2" | "b2") {
        "feed_forward"
    } else {
        "attention"
    }
}

/// Result of one training-batch evaluation.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub correct: usize,
    pub grads: Vec<Matrix>,
}

/// Logits and final hidden representations for a batch.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub logits: Matrix,
    pub states: Matrix,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.logits)
    }
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            m.row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[derive(Clone, Debug)]
pub enum Model {
    Holonomic(Holonomic),
    Rnn(Rnn),
    Transformer(Transformer),
}

impl Model {
    pub fn new(spec: &ModelSpec, task: Task, rng: &mut RngState) -> Result<Self> {
        Ok(match spec.kind {
            ModelKind::Holonomic => Model::Holonomic(Holonomic::new(task, spec.hidden, spec.init_scale, rng)?),
            ModelKind::Rnn => Model::Rnn(Rnn::new(task, spec.hidden, false, spec.init_scale, rng)?),
            ModelKind::NormalizedRnn => Model::Rnn(Rnn::new(task, spec.hidden, true, spec.init_scale, rng)?),
            ModelKind::Transformer => Model::Transformer(Transformer::new(task, spec.dims(task), rng)?),
        })
    }

    /// Rebuilds a model of the given architecture around stored parameters.
    pub fn from_params(spec: &ModelSpec, task: Task, store: ParamStore) -> Result<Self> {
        Ok(match spec.kind {
            ModelKind::Holonomic => Model::Holonomic(Holonomic::from_store(task, spec.hidden, store)?),
            ModelKind::Rnn => Model::Rnn(Rnn::from_store(task, spec.hidden, false, store)?),
            ModelKind::NormalizedRnn => Model::Rnn(Rnn::from_store(task, spec.hidden, true, store)?),
            ModelKind::Transformer => Model::Transformer(Transformer::from_store(task, spec.dims(task), store)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Holonomic(_) => ModelKind::Holonomic,
            Model::Rnn(r) if r.normalized => ModelKind::NormalizedRnn,
            Model::Rnn(_) => ModelKind::Rnn,
            Model::Transformer(_) => ModelKind::Transformer,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Model::Holonomic(m) => m.task,
            Model::Rnn(m) => m.task,
            Model::Transformer(m) => m.task,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Model::Holonomic(m) => m.n,
            Model::Rnn(m) => m.n,
            Model::Transformer(m) => m.dims.d_model,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            Model::Holonomic(m) => &m.store,
            Model::Rnn(m) => &m.store,
            Model::Transformer(m) => &m.store,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            Model::Holonomic(m) => &mut m.store,
            Model::Rnn(m) => &mut m.store,
            Model::Transformer(m) => &mut m.store,
        }
    }

    /// Builds the forward computation on any graph.
    pub fn forward<'p, G: Graph<'p>>(
        &'p self,
        g: &mut G,
        batch: &[Episode],
        noise: Option<NoiseCtx<'_>>,
    ) -> Result<Forward<G::Var>> {
        match self {
            Model::Holonomic(m) => m.forward(g, batch, noise),
            Model::Rnn(m) => m.forward(g, batch, noise),
            Model::Transformer(m) => m.forward(g, batch, noise),
        }
    }

    /// Noise-free states of one sequence started from `h0`; recurrent
    /// architectures only.
    pub fn unroll<'p, G: Graph<'p>>(&'p self, g: &mut G, tokens: &[usize], h0: &G::Var) -> Result<Vec<G::Var>> {
        match self {
            Model::Holonomic(m) => m.unroll(g, tokens, h0),
            Model::Rnn(m) => m.unroll(g, tokens, h0),
            Model::Transformer(_) => Err(Error::arg("the transformer has no recurrent state to unroll")),
        }
    }

    /// Initial state used by [`Model::forward`], as a row vector.
    pub fn initial_state(&self) -> Result<Matrix> {
        match self {
            Model::Holonomic(m) => Ok(m.h0().as_row()),
            Model::Rnn(m) => Ok(Matrix::zeros(1, m.n)),
            Model::Transformer(_) => Err(Error::arg("the transformer has no recurrent state")),
        }
    }

    /// Mean cross-entropy over an equal-length batch and its gradient.
    pub fn loss_and_grad(&self, batch: &[Episode], precision: Precision) -> Result<LossGrad> {
        let mut tape = Tape::with_precision(precision);
        let fwd = self.forward(&mut tape, batch, None)?;
        let labels: Vec<usize> = batch.iter().map(|e| e.target).collect();
        let loss = tape.softmax_xent(&fwd.logits, &labels)?;
        let correct = argmax_rows(tape.get(fwd.logits))
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        let loss_value = tape.get(loss)[(0, 0)];
        if !loss_value.is_finite() {
            return Err(Error::Numeric {
                op: "loss",
                detail: format!("training loss is {loss_value}"),
            });
        }
        let mut grads = tape.backward(loss)?;
        let grads = fwd.params.iter().map(|&p| grads.take(p)).collect();
        Ok(LossGrad {
            loss: loss_value,
            correct,
            grads,
        })
    }

    /// Forward pass without recording, optionally with noise (one RNG stream
    /// per episode).
    pub fn evaluate(
        &self,
        batch: &[Episode],
        noise: &NoiseConfig,
        rngs: &mut [RngState],
        precision: Precision,
    ) -> Result<Evaluation> {
        let ctx = if noise.enabled && noise.temperature > 0.0 {
            if rngs.len() != batch.len() {
                return Err(Error::arg(format!(
                    "{} noise streams for {} episodes",
                    rngs.len(),
                    batch.len()
                )));
            }
            Some(NoiseCtx {
                temperature: noise.temperature,
                site: noise.site,
                rngs,
            })
        } else {
            None
        };
        if let Model::Holonomic(h) = self {
            let (logits, states) = h.evaluate_fast(batch, ctx, precision)?;
            return Ok(Evaluation { logits, states });
        }
        let mut g = Eval::new(precision);
        let fwd = self.forward(&mut g, batch, ctx)?;
        Ok(Evaluation {
            logits: fwd.logits.get().clone(),
            states: fwd.state.get().clone(),
        })
    }

    /// Checks [`Model::loss_and_grad`] against finite differences of the
    /// loss on `batch` at F64.
    pub fn grad_check(&self, batch: &[Episode], eps: f64, samples: usize, rng: &mut RngState) -> Result<GradCheck> {
        let f = |store: &ParamStore| -> Result<(f64, Vec<Matrix>)> {
            let mut probe = self.clone();
            *probe.params_mut() = store.clone();
            let lg = probe.loss_and_grad(batch, Precision::F64)?;
            Ok((lg.loss, lg.grads))
        };
        grad_check(self.params(), f, eps, samples, rng)
    }

    /// Restores invariants after an optimizer step.
    pub fn project(&mut self) {
        if let Model::Holonomic(h) = self {
            h.project();
        }
    }

    pub fn param_count(&self) -> ParamCount {
        let mut items: Vec<(String, usize)> = Vec::new();
        for (name, m) in self.params().iter() {
            let key = component(name);
            let n = m.rows() * m.cols();
            match items.iter_mut().find(|(k, _)| k == key) {
                Some(slot) => slot.1 += n,
                None => items.push((key.to_string(), n)),
            }
        }
        let total = items.iter().map(|(_, n)| n).sum();
        ParamCount { items, total }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_identity_at_zero_temperature_and_zero_state() {
        let mut rng = RngState::new(4);
        let h = Vector::from_vec(vec![0.3, -0.4, 1.2]);
        assert_eq!(inject_noise(&h, 0.0, &mut rng), h);
        let z = Vector::zeros(5);
        assert_eq!(inject_noise(&z, 1.7, &mut rng), z);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let m = Matrix::from_rows(&[[1.0, 3.0, 3.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![1, 0]);
    }

    #[test]
    fn mixed_length_batch_is_rejected() {
        let a = Episode {
            tokens: vec![0, 1],
            query: None,
            target: 1,
        };
        let b = Episode {
            tokens: vec![0],
            query: None,
            target: 0,
        };
        assert!(batch_len(&[a, b]).is_err());
        assert!(batch_len(&[]).is_err());
    }
}
