//! Recording tape and reverse sweep.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and the reverse sweep is a single backwards pass.

use std::borrow::Cow;

use super::graph::{Graph, Precision};
use super::kernels::{self, AttentionSpec};
use crate::error::{Error, Result};
use crate::tensor::{mat_exp, mat_exp_adjoint, skew, Matrix, Trans};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    GatherMatVec { ops: Vec<Var>, ids: Vec<usize>, x: Var },
    Add(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    Tanh(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    NormalizeRows { x: Var, norms: Vec<f64> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Matrix },
    MatExp(Var),
    Skew(Var),
    Embed { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    SelectRows { x: Var, idx: Vec<usize> },
    Attention { q: Var, k: Var, v: Var, spec: AttentionSpec, probs: Vec<Matrix> },
    Sum(Var),
}

/// Reverse-mode tape over matrix-valued primitives.
#[derive(Debug, Default)]
pub struct Tape<'p> {
    values: Vec<Cow<'p, Matrix>>,
    ops: Vec<Op>,
    precision: Precision,
}

/// Adjoints for every node reached by a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, zero-filled when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Self {
            precision,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let value = self.precision.apply(value);
        self.values.push(Cow::Owned(value));
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Reverse sweep from a scalar (1x1) node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.values[loss.0].shape();
        if shape != (1, 1) {
            return Err(Error::arg(format!("backward needs a scalar loss, got {shape:?}")));
        }
        self.backward_seeded(&[(loss, Matrix::filled(1, 1, 1.0))])
    }

    /// Reverse sweep with explicit output adjoints (vector-Jacobian product).
    pub fn backward_seeded(&self, seeds: &[(Var, Matrix)]) -> Result<Gradients> {
        let n = self.values.len();
        let mut grads: Vec<Option<Matrix>> = vec![None; n];
        let mut start = 0;
        for (v, g) in seeds {
            if g.shape() != self.values[v.0].shape() {
                return Err(Error::dim(
                    "backward_seeded",
                    format!("seed {:?} for node of shape {:?}", g.shape(), self.values[v.0].shape()),
                ));
            }
            accumulate(&mut grads, *v, g.clone());
            start = start.max(v.0 + 1);
        }
        for i in (0..start).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.values.iter().map(|v| v.shape()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let val = |v: Var| -> &Matrix { &self.values[v.0] };
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(Trans::No, val(*b), Trans::Yes)?);
                accumulate(grads, *b, val(*a).matmul_t(Trans::Yes, g, Trans::No)?);
            }
            Op::MatVec(m, x) => {
                accumulate(grads, *x, g.matmul(val(*m))?);
                accumulate(grads, *m, g.matmul_t(Trans::Yes, val(*x), Trans::No)?);
            }
            Op::GatherMatVec { ops, ids, x } => {
                let xv = val(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                let mut dops: Vec<Option<Matrix>> = vec![None; ops.len()];
                for (b, &k) in ids.iter().enumerate() {
                    let m = val(ops[k]);
                    let gb = g.row(b);
                    let xb = xv.row(b);
                    let dxb = dx.row_mut(b);
                    let dm = dops[k].get_or_insert_with(|| Matrix::zeros(m.rows(), m.cols()));
                    for (r, &gr) in gb.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (d, &mv) in dxb.iter_mut().zip(m.row(r)) {
                            *d += gr * mv;
                        }
                        for (d, &xv) in dm.row_mut(r).iter_mut().zip(xb) {
                            *d += gr * xv;
                        }
                    }
                }
                accumulate(grads, *x, dx);
                for (k, d) in dops.into_iter().enumerate() {
                    if let Some(d) = d {
                        accumulate(grads, ops[k], d);
                    }
                }
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, reduce_broadcast(g, val(*b)));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::Hadamard(a, b) => {
                let bv = val(*b);
                accumulate(grads, *a, kernels::hadamard(g, bv)?);
                let ga = g.hadamard(val(*a))?;
                accumulate(grads, *b, reduce_broadcast(&ga, bv));
            }
            Op::Tanh(a) => {
                let y = &self.values[i];
                let mut d = g.clone();
                for (dv, yv) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *dv *= 1.0 - yv * yv;
                }
                accumulate(grads, *a, d);
            }
            Op::LayerNorm { x, inv_std } => {
                let y = &self.values[i];
                let cols = y.cols() as f64;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let yr = y.row(r);
                    let mean_g = gr.iter().sum::<f64>() / cols;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / cols;
                    for ((dv, &gv), &yv) in d.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *dv = inv_std[r] * (gv - mean_g - yv * mean_gy);
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::NormalizeRows { x, norms } => {
                let y = &self.values[i];
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    if norms[r] == 0.0 {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let yg = kernels_dot(yr, gr);
                    for ((dv, &gv), &yv) in d.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *dv = (gv - yv * yg) / norms[r];
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let scale = g[(0, 0)] / labels.len() as f64;
                let mut d = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    d[(r, l)] -= 1.0;
                }
                d.scale_in_place(scale);
                accumulate(grads, *logits, d);
            }
            Op::MatExp(a) => accumulate(grads, *a, mat_exp_adjoint(val(*a), g)?),
            Op::Skew(a) => {
                let mut d = g.clone();
                d.axpy(-1.0, &g.transpose());
                accumulate(grads, *a, d);
            }
            Op::Embed { table, ids } => {
                let t = val(*table);
                let mut d = Matrix::zeros(t.rows(), t.cols());
                for (r, &id) in ids.iter().enumerate() {
                    for (dv, &gv) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                        *dv += gv;
                    }
                }
                accumulate(grads, *table, d);
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for p in parts {
                    let w = val(*p).cols();
                    accumulate(grads, *p, g.block(0, c0, g.rows(), w));
                    c0 += w;
                }
            }
            Op::SelectRows { x, idx } => {
                let xv = val(*x);
                let mut d = Matrix::zeros(xv.rows(), xv.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for (dv, &gv) in d.row_mut(src).iter_mut().zip(g.row(r)) {
                        *dv += gv;
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::Attention { q, k, v, spec, probs } => {
                let (dq, dk, dv) = attention_backward(val(*q), val(*k), val(*v), *spec, probs, g)?;
                accumulate(grads, *q, dq);
                accumulate(grads, *k, dk);
                accumulate(grads, *v, dv);
            }
            Op::Sum(a) => {
                let av = val(*a);
                accumulate(grads, *a, Matrix::filled(av.rows(), av.cols(), g[(0, 0)]));
            }
        }
        Ok(())
    }
}

#[inline]
fn kernels_dot(a: &[f64], b: &[f64]) -> f64 {
    crate::tensor::dot(a, b)
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Sums `g` over rows when `target` was a broadcast row.
fn reduce_broadcast(g: &Matrix, target: &Matrix) -> Matrix {
    if g.shape() == target.shape() {
        return g.clone();
    }
    let mut d = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (dv, &gv) in d.row_mut(0).iter_mut().zip(g.row(r)) {
            *dv += gv;
        }
    }
    d
}

fn attention_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    spec: AttentionSpec,
    probs: &[Matrix],
    g: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    let dh = q.cols() / spec.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Matrix::zeros(q.rows(), q.cols());
    let mut dk = Matrix::zeros(k.rows(), k.cols());
    let mut dv = Matrix::zeros(v.rows(), v.cols());
    for b in 0..spec.batch {
        for h in 0..spec.heads {
            let p = &probs[b * spec.heads + h];
            let qh = kernels::head_slice(q, b, h, spec.len, dh);
            let kh = kernels::head_slice(k, b, h, spec.len, dh);
            let vh = kernels::head_slice(v, b, h, spec.len, dh);
            let go = kernels::head_slice(g, b, h, spec.len, dh);
            let dvh = p.matmul_t(Trans::Yes, &go, Trans::No)?;
            let dp = go.matmul_t(Trans::No, &vh, Trans::Yes)?;
            let mut ds = Matrix::zeros(spec.len, spec.len);
            for r in 0..spec.len {
                let pr = p.row(r);
                let dpr = dp.row(r);
                let inner = kernels_dot(pr, dpr);
                for ((d, &pv), &dpv) in ds.row_mut(r).iter_mut().zip(pr).zip(dpr) {
                    *d = pv * (dpv - inner) * scale;
                }
            }
            let dqh = ds.matmul(&kh)?;
            let dkh = ds.matmul_t(Trans::Yes, &qh, Trans::No)?;
            dq.set_block(b * spec.len, h * dh, &dqh);
            dk.set_block(b * spec.len, h * dh, &dkh);
            dv.set_block(b * spec.len, h * dh, &dvh);
        }
    }
    Ok((dq, dk, dv))
}

impl<'p> Graph<'p> for Tape<'p> {
    type Var = Var;

    fn param(&mut self, m: &'p Matrix) -> Var {
        self.values.push(Cow::Borrowed(m));
        self.ops.push(Op::Leaf);
        Var(self.values.len() - 1)
    }

    fn constant(&mut self, m: Matrix) -> Var {
        self.values.push(Cow::Owned(m));
        self.ops.push(Op::Leaf);
        Var(self.values.len() - 1)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Matrix {
        &self.values[v.0]
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::matmul(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::MatMul(*a, *b)))
    }

    fn matvec(&mut self, m: &Var, x: &Var) -> Result<Var> {
        let y = kernels::matvec(self.get(*m), self.get(*x))?;
        Ok(self.push(y, Op::MatVec(*m, *x)))
    }

    fn gather_matvec(&mut self, ops: &[Var], ids: &[usize], x: &Var) -> Result<Var> {
        let refs: Vec<&Matrix> = ops.iter().map(|o| self.get(*o)).collect();
        let y = kernels::gather_matvec(&refs, ids, self.get(*x))?;
        Ok(self.push(
            y,
            Op::GatherMatVec {
                ops: ops.to_vec(),
                ids: ids.to_vec(),
                x: *x,
            },
        ))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::add(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Add(*a, *b)))
    }

    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let y = self.get(*a).scale(s);
        self.push(y, Op::Scale(*a, s))
    }

    fn hadamard(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = kernels::hadamard(self.get(*a), self.get(*b))?;
        Ok(self.push(y, Op::Hadamard(*a, *b)))
    }

    fn tanh(&mut self, a: &Var) -> Var {
        let y = self.get(*a).map(f64::tanh);
        self.push(y, Op::Tanh(*a))
    }

    fn layer_norm(&mut self, a: &Var, eps: f64) -> Var {
        let (y, inv_std) = kernels::layer_norm(self.get(*a), eps);
        self.push(y, Op::LayerNorm { x: *a, inv_std })
    }

    fn normalize_rows(&mut self, a: &Var) -> Var {
        let (y, norms) = kernels::normalize_rows(self.get(*a));
        self.push(y, Op::NormalizeRows { x: *a, norms })
    }

    fn softmax_xent(&mut self, logits: &Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = kernels::softmax_xent(self.get(*logits), labels)?;
        Ok(self.push(
            loss,
            Op::SoftmaxXent {
                logits: *logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    fn mat_exp(&mut self, a: &Var) -> Result<Var> {
        let y = mat_exp(self.get(*a))?;
        Ok(self.push(y, Op::MatExp(*a)))
    }

    fn skew(&mut self, a: &Var) -> Result<Var> {
        let y = skew(self.get(*a))?;
        Ok(self.push(y, Op::Skew(*a)))
    }

    fn embed(&mut self, table: &Var, ids: &[usize]) -> Result<Var> {
        let y = kernels::embed(self.get(*table), ids)?;
        Ok(self.push(
            y,
            Op::Embed {
                table: *table,
                ids: ids.to_vec(),
            },
        ))
    }

    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Matrix> = parts.iter().map(|p| self.get(*p)).collect();
        let y = kernels::concat_cols(&refs)?;
        Ok(self.push(y, Op::ConcatCols(parts.to_vec())))
    }

    fn select_rows(&mut self, a: &Var, idx: &[usize]) -> Result<Var> {
        let y = kernels::select_rows(self.get(*a), idx)?;
        Ok(self.push(
            y,
            Op::SelectRows {
                x: *a,
                idx: idx.to_vec(),
            },
        ))
    }

    fn attention(&mut self, q: &Var, k: &Var, v: &Var, spec: AttentionSpec) -> Result<Var> {
        let (y, probs) = kernels::attention(self.get(*q), self.get(*k), self.get(*v), spec, true)?;
        Ok(self.push(
            y,
            Op::Attention {
                q: *q,
                k: *k,
                v: *v,
                spec,
                probs,
            },
        ))
    }

    fn sum(&mut self, a: &Var) -> Var {
        let s = self.get(*a).as_slice().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(*a))
    }
}
