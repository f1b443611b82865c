//! Forward kernels shared by the recording tape and the eager evaluator.
//!
//! Row convention: a batch of vectors is a matrix whose rows are the vectors.

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix, Trans};

pub(crate) fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// Applies `m` to every row of `x`: `x mᵀ`.
pub(crate) fn matvec(m: &Matrix, x: &Matrix) -> Result<Matrix> {
    if m.cols() != x.cols() {
        return Err(Error::dim(
            "matvec",
            format!("operator {:?} applied to rows of width {}", m.shape(), x.cols()),
        ));
    }
    x.matmul_t(Trans::No, m, Trans::Yes)
}

pub(crate) fn check_gather(ops: &[&Matrix], ids: &[usize], x: &Matrix) -> Result<(usize, usize)> {
    let first = ops
        .first()
        .ok_or_else(|| Error::arg("gather_matvec needs at least one operator"))?;
    let (out, inn) = first.shape();
    if ops.iter().any(|m| m.shape() != (out, inn)) {
        return Err(Error::dim("gather_matvec", "operators differ in shape"));
    }
    if x.cols() != inn || ids.len() != x.rows() {
        return Err(Error::dim(
            "gather_matvec",
            format!("operators {out}x{inn}, input {:?}, {} ids", x.shape(), ids.len()),
        ));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= ops.len()) {
        return Err(Error::arg(format!(
            "operator id {bad} out of range for {} operators",
            ops.len()
        )));
    }
    Ok((out, inn))
}

/// Row `b` of the output is `ops[ids[b]] · x_b`.
pub(crate) fn gather_matvec(ops: &[&Matrix], ids: &[usize], x: &Matrix) -> Result<Matrix> {
    let (out, _) = check_gather(ops, ids, x)?;
    let mut y = Matrix::zeros(x.rows(), out);
    for (b, &k) in ids.iter().enumerate() {
        let m = ops[k];
        let xb = x.row(b);
        let yb = y.row_mut(b);
        for (i, yi) in yb.iter_mut().enumerate() {
            *yi = dot(m.row(i), xb);
        }
    }
    Ok(y)
}

fn broadcast_ok(a: &Matrix, b: &Matrix) -> bool {
    a.shape() == b.shape() || (b.rows() == 1 && b.cols() == a.cols())
}

/// `a + b`, where `b` may be a single row broadcast over `a`.
pub(crate) fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !broadcast_ok(a, b) {
        return Err(Error::dim("add", format!("{:?} + {:?}", a.shape(), b.shape())));
    }
    let mut out = a.clone();
    if a.shape() == b.shape() {
        out.add_assign(b);
    } else {
        let brow = b.row(0);
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(brow) {
                *o += x;
            }
        }
    }
    Ok(out)
}

/// `a ⊙ b`, where `b` may be a single row broadcast over `a`.
pub(crate) fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !broadcast_ok(a, b) {
        return Err(Error::dim("hadamard", format!("{:?} * {:?}", a.shape(), b.shape())));
    }
    if a.shape() == b.shape() {
        return a.hadamard(b);
    }
    let mut out = a.clone();
    let brow = b.row(0);
    for r in 0..out.rows() {
        for (o, x) in out.row_mut(r).iter_mut().zip(brow) {
            *o *= x;
        }
    }
    Ok(out)
}

/// Row-wise `(x − μ)/√(σ² + eps)`; returns the output and per-row `1/√(σ² + eps)`.
pub(crate) fn layer_norm(x: &Matrix, eps: f64) -> (Matrix, Vec<f64>) {
    let cols = x.cols() as f64;
    let mut y = x.clone();
    let mut inv = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = y.row_mut(r);
        let mean = row.iter().sum::<f64>() / cols;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols;
        let s = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * s;
        }
        inv.push(s);
    }
    (y, inv)
}

/// Row-wise `x/‖x‖`; zero rows stay zero. Returns output and row norms.
pub(crate) fn normalize_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut y = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = y.row_mut(r);
        let n = dot(row, row).sqrt();
        if n > 0.0 {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        norms.push(n);
    }
    (y, norms)
}

/// Mean cross-entropy of row-wise softmax against integer labels.
/// Returns the 1x1 loss and the softmax probabilities.
pub(crate) fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(Matrix, Matrix)> {
    if labels.len() != logits.rows() || logits.rows() == 0 {
        return Err(Error::dim(
            "softmax_xent",
            format!("{} labels for {:?} logits", labels.len(), logits.shape()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::arg(format!("label {bad} out of range for {} classes", logits.cols())));
    }
    let probs = softmax_rows(logits);
    let loss = labels
        .iter()
        .enumerate()
        .map(|(r, &l)| {
            let row = logits.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[l]
        })
        .sum::<f64>()
        / labels.len() as f64;
    Ok((Matrix::filled(1, 1, loss), probs))
}

pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut p = logits.clone();
    for r in 0..p.rows() {
        softmax_in_place(p.row_mut(r));
    }
    p
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - m).exp() };
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

pub(crate) fn embed(table: &Matrix, ids: &[usize]) -> Result<Matrix> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= table.rows()) {
        return Err(Error::arg(format!("embedding id {bad} out of range for {} rows", table.rows())));
    }
    let mut out = Matrix::zeros(ids.len(), table.cols());
    for (r, &i) in ids.iter().enumerate() {
        out.row_mut(r).copy_from_slice(table.row(i));
    }
    Ok(out)
}

pub(crate) fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
    let rows = parts.first().map_or(0, |p| p.rows());
    if parts.iter().any(|p| p.rows() != rows) {
        return Err(Error::dim("concat", "parts differ in row count"));
    }
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for p in parts {
        out.set_block(0, c0, p);
        c0 += p.cols();
    }
    Ok(out)
}

pub(crate) fn select_rows(x: &Matrix, idx: &[usize]) -> Result<Matrix> {
    embed(x, idx).map_err(|_| Error::dim("select_rows", format!("index out of range for {} rows", x.rows())))
}

/// Shape of a batched multi-head attention call: `batch` sequences of
/// `len` positions stacked as `batch * len` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionSpec {
    pub batch: usize,
    pub len: usize,
    pub heads: usize,
    pub causal: bool,
}

pub(crate) fn check_attention(q: &Matrix, k: &Matrix, v: &Matrix, spec: AttentionSpec) -> Result<usize> {
    let d = q.cols();
    if spec.heads == 0 || d % spec.heads != 0 {
        return Err(Error::dim("attention", format!("width {d} not divisible by {} heads", spec.heads)));
    }
    let rows = spec.batch * spec.len;
    if q.rows() != rows || k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::dim(
            "attention",
            format!("q {:?} k {:?} v {:?} for {}x{}", q.shape(), k.shape(), v.shape(), spec.batch, spec.len),
        ));
    }
    Ok(d / spec.heads)
}

/// Copies the `(b, h)` head slice out of a stacked `batch*len x d` matrix.
pub(crate) fn head_slice(x: &Matrix, b: usize, h: usize, len: usize, dh: usize) -> Matrix {
    x.block(b * len, h * dh, len, dh)
}

/// Scaled dot-product attention per sequence and head; returns output and
/// (optionally) the attention probabilities, laid out `[b][h]` of `len x len`.
pub(crate) fn attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    spec: AttentionSpec,
    keep_probs: bool,
) -> Result<(Matrix, Vec<Matrix>)> {
    let dh = check_attention(q, k, v, spec)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Matrix::zeros(q.rows(), q.cols());
    let mut kept = Vec::new();
    for b in 0..spec.batch {
        for h in 0..spec.heads {
            let qh = head_slice(q, b, h, spec.len, dh);
            let kh = head_slice(k, b, h, spec.len, dh);
            let vh = head_slice(v, b, h, spec.len, dh);
            let mut s = qh.matmul_t(Trans::No, &kh, Trans::Yes)?;
            s.scale_in_place(scale);
            if spec.causal {
                for i in 0..spec.len {
                    for j in (i + 1)..spec.len {
                        s[(i, j)] = f64::NEG_INFINITY;
                    }
                }
            }
            for r in 0..spec.len {
                softmax_in_place(s.row_mut(r));
            }
            let o = s.matmul(&vh)?;
            out.set_block(b * spec.len, h * dh, &o);
            if keep_probs {
                kept.push(s);
            }
        }
    }
    Ok((out, kept))
}
