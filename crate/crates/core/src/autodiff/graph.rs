//! The primitive set, as a trait implemented by the recording [`Tape`] and
//! the eager [`Eval`]. Model code is written once against [`Graph`].
//!
//! [`Tape`]: super::Tape

use std::borrow::Cow;
use std::rc::Rc;

use super::kernels::{self, AttentionSpec};
use crate::error::Result;
use crate::tensor::{mat_exp, skew, Matrix};

/// Storage precision of intermediate values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    /// Values rounded to `f32` after every primitive; arithmetic in `f64`.
    #[serde(rename = "32")]
    F32,
    #[default]
    #[serde(rename = "64")]
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            32 => Some(Precision::F32),
            64 => Some(Precision::F64),
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn apply(self, mut m: Matrix) -> Matrix {
        if self == Precision::F32 {
            m.round_to_f32();
        }
        m
    }
}

pub trait Graph<'p> {
    type Var: Clone;

    /// A trainable input borrowed from parameter storage.
    fn param(&mut self, m: &'p Matrix) -> Self::Var;
    /// A non-trainable input.
    fn constant(&mut self, m: Matrix) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Matrix;

    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    /// Applies operator `m` to every row of `x`.
    fn matvec(&mut self, m: &Self::Var, x: &Self::Var) -> Result<Self::Var>;
    /// Row `b` becomes `ops[ids[b]] · x_b`.
    fn gather_matvec(&mut self, ops: &[Self::Var], ids: &[usize], x: &Self::Var) -> Result<Self::Var>;
    /// Elementwise sum; `b` may be one row broadcast over `a`.
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn scale(&mut self, a: &Self::Var, s: f64) -> Self::Var;
    /// Elementwise product; `b` may be one row broadcast over `a`.
    fn hadamard(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn tanh(&mut self, a: &Self::Var) -> Self::Var;
    /// Row-wise standardization without affine terms.
    fn layer_norm(&mut self, a: &Self::Var, eps: f64) -> Self::Var;
    /// Row-wise projection onto the unit sphere.
    fn normalize_rows(&mut self, a: &Self::Var) -> Self::Var;
    /// Mean softmax cross-entropy, a 1x1 result.
    fn softmax_xent(&mut self, logits: &Self::Var, labels: &[usize]) -> Result<Self::Var>;
    fn mat_exp(&mut self, a: &Self::Var) -> Result<Self::Var>;
    fn skew(&mut self, a: &Self::Var) -> Result<Self::Var>;
    fn embed(&mut self, table: &Self::Var, ids: &[usize]) -> Result<Self::Var>;
    fn concat_cols(&mut self, parts: &[Self::Var]) -> Result<Self::Var>;
    fn select_rows(&mut self, a: &Self::Var, idx: &[usize]) -> Result<Self::Var>;
    /// Multi-head scaled dot-product attention over stacked sequences.
    fn attention(
        &mut self,
        q: &Self::Var,
        k: &Self::Var,
        v: &Self::Var,
        spec: AttentionSpec,
    ) -> Result<Self::Var>;
    /// Sum of all entries, a 1x1 result.
    fn sum(&mut self, a: &Self::Var) -> Self::Var;
}

/// Eager evaluation: values only, dropped as soon as model code drops them.
#[derive(Debug, Default)]
pub struct Eval {
    precision: Precision,
}

/// A value held by [`Eval`].
#[derive(Clone, Debug)]
pub struct EvalVar<'p>(Rc<Cow<'p, Matrix>>);

impl EvalVar<'_> {
    pub fn get(&self) -> &Matrix {
        &self.0
    }
}

impl Eval {
    pub fn new(precision: Precision) -> Self {
        Self { precision }
    }

    fn own<'p>(&self, m: Matrix) -> EvalVar<'p> {
        EvalVar(Rc::new(Cow::Owned(self.precision.apply(m))))
    }
}

impl<'p> Graph<'p> for Eval {
    type Var = EvalVar<'p>;

    fn param(&mut self, m: &'p Matrix) -> EvalVar<'p> {
        EvalVar(Rc::new(Cow::Borrowed(m)))
    }

    fn constant(&mut self, m: Matrix) -> EvalVar<'p> {
        EvalVar(Rc::new(Cow::Owned(m)))
    }

    fn value<'a>(&'a self, v: &'a EvalVar<'p>) -> &'a Matrix {
        v.get()
    }

    fn matmul(&mut self, a: &EvalVar<'p>, b: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::matmul(a.get(), b.get())?))
    }

    fn matvec(&mut self, m: &EvalVar<'p>, x: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::matvec(m.get(), x.get())?))
    }

    fn gather_matvec(&mut self, ops: &[EvalVar<'p>], ids: &[usize], x: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        let refs: Vec<&Matrix> = ops.iter().map(|o| o.get()).collect();
        Ok(self.own(kernels::gather_matvec(&refs, ids, x.get())?))
    }

    fn add(&mut self, a: &EvalVar<'p>, b: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::add(a.get(), b.get())?))
    }

    fn scale(&mut self, a: &EvalVar<'p>, s: f64) -> EvalVar<'p> {
        self.own(a.get().scale(s))
    }

    fn hadamard(&mut self, a: &EvalVar<'p>, b: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::hadamard(a.get(), b.get())?))
    }

    fn tanh(&mut self, a: &EvalVar<'p>) -> EvalVar<'p> {
        self.own(a.get().map(f64::tanh))
    }

    fn layer_norm(&mut self, a: &EvalVar<'p>, eps: f64) -> EvalVar<'p> {
        self.own(kernels::layer_norm(a.get(), eps).0)
    }

    fn normalize_rows(&mut self, a: &EvalVar<'p>) -> EvalVar<'p> {
        self.own(kernels::normalize_rows(a.get()).0)
    }

    fn softmax_xent(&mut self, logits: &EvalVar<'p>, labels: &[usize]) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::softmax_xent(logits.get(), labels)?.0))
    }

    fn mat_exp(&mut self, a: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(mat_exp(a.get())?))
    }

    fn skew(&mut self, a: &EvalVar<'p>) -> Result<EvalVar<'p>> {
        Ok(self.own(skew(a.get())?))
    }

    fn embed(&mut self, table: &EvalVar<'p>, ids: &[usize]) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::embed(table.get(), ids)?))
    }

    fn concat_cols(&mut self, parts: &[EvalVar<'p>]) -> Result<EvalVar<'p>> {
        let refs: Vec<&Matrix> = parts.iter().map(|p| p.get()).collect();
        Ok(self.own(kernels::concat_cols(&refs)?))
    }

    fn select_rows(&mut self, a: &EvalVar<'p>, idx: &[usize]) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::select_rows(a.get(), idx)?))
    }

    fn attention(
        &mut self,
        q: &EvalVar<'p>,
        k: &EvalVar<'p>,
        v: &EvalVar<'p>,
        spec: AttentionSpec,
    ) -> Result<EvalVar<'p>> {
        Ok(self.own(kernels::attention(q.get(), k.get(), v.get(), spec, false)?.0))
    }

    fn sum(&mut self, a: &EvalVar<'p>) -> EvalVar<'p> {
        self.own(Matrix::filled(1, 1, a.get().as_slice().iter().sum()))
    }
}
