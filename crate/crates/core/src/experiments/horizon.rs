//! Memory horizon `J(t) = ‖∂h_t/∂h_0‖₂` and its exponential-rate fit.

use serde::{Deserialize, Serialize};

use super::scaling::linear_fit;
use crate::autodiff::{Graph, Tape};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::scan::{OperatorTable, ScanPlan};
use crate::tensor::{reorthonormalize, spectral_norm_with, Matrix, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonMethod {
    /// Reverse-mode passes from `h_t` back to `h_0`, one per output coordinate.
    Autodiff,
    /// Spectral norm of the accumulated linear map.
    OperatorNorm,
}

impl HorizonMethod {
    pub fn name(self) -> &'static str {
        match self {
            HorizonMethod::Autodiff => "autodiff",
            HorizonMethod::OperatorNorm => "operator-norm",
        }
    }
}

/// Fit window start: points with `t` below this are ignored.
pub const FIT_FROM: usize = 5;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonCurve {
    pub model: String,
    pub method: HorizonMethod,
    pub t: Vec<usize>,
    pub j: Vec<f64>,
    /// Slope of `ln J` against `t` over `t ≥ 5` (nonzero `J` only).
    pub lambda: Option<f64>,
    pub r2: Option<f64>,
}

impl HorizonCurve {
    /// `t,J` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("t,J\n");
        for (t, j) in self.t.iter().zip(&self.j) {
            s.push_str(&format!("{t},{j:.12e}\n"));
        }
        s
    }
}

/// Least-squares rate of `ln J(t)` over `t ≥ FIT_FROM`, skipping zeros.
/// Returns `(λ, R²)`, or `None` with fewer than two usable points.
pub fn fit_lambda(t: &[usize], j: &[f64]) -> Option<(f64, f64)> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(j)
        .filter(|(&t, &j)| t >= FIT_FROM && j > 0.0 && j.is_finite())
        .map(|(&t, &j)| (t as f64, j.ln()))
        .unzip();
    if xs.len() < 2 {
        return None;
    }
    let (a, _, r2) = linear_fit(&xs, &ys).ok()?;
    Some((a, r2))
}

fn check_grid(grid: &[usize]) -> Result<usize> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("horizon grid must be strictly increasing positive steps"));
    }
    Ok(*grid.last().expect("nonempty"))
}

/// `J(t)` at each grid step along `tokens` (which must reach the last grid
/// step). The norm estimator's start vectors come from `rng`.
pub fn jacobian_horizon(
    model: &Model,
    tokens: &[usize],
    grid: &[usize],
    method: HorizonMethod,
    rng: &RngState,
) -> Result<HorizonCurve> {
    let t_max = check_grid(grid)?;
    if tokens.len() < t_max {
        return Err(Error::arg(format!("{} tokens for a horizon up to t = {t_max}", tokens.len())));
    }
    let tokens = &tokens[..t_max];
    let jacobians = match method {
        HorizonMethod::Autodiff => autodiff_jacobians(model, tokens, grid)?,
        HorizonMethod::OperatorNorm => match model {
            Model::Holonomic(h) => {
                let table = OperatorTable::from_model(h)?;
                prefix_operators(&table, tokens, grid, &ScanPlan::default())?
            }
            Model::Rnn(_) => rnn_jacobians(model, tokens, grid)?,
            Model::Transformer(_) => return Err(Error::arg("the transformer has no recurrent Jacobian")),
        },
    };
    let mut r = rng.clone();
    let j = jacobians
        .iter()
        .map(|m| spectral_norm_with(m, NORM_TOL, &mut r))
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_lambda(grid, &j);
    Ok(HorizonCurve {
        model: model.kind().name().to_string(),
        method,
        t: grid.to_vec(),
        j,
        lambda: fit.map(|f| f.0),
        r2: fit.map(|f| f.1),
    })
}

/// `∂h_t/∂h_0` by one seeded backward pass per output coordinate.
fn autodiff_jacobians(model: &Model, tokens: &[usize], grid: &[usize]) -> Result<Vec<Matrix>> {
    let h0_value = model.initial_state()?;
    let n = h0_value.cols();
    let mut tape = Tape::new();
    let h0 = tape.param(&h0_value);
    let states = model.unroll(&mut tape, tokens, &h0)?;
    grid.iter()
        .map(|&t| {
            let mut jac = Matrix::zeros(n, n);
            for i in 0..n {
                let mut seed = Matrix::zeros(1, n);
                seed[(0, i)] = 1.0;
                let grads = tape.backward_seeded(&[(states[t - 1], seed)])?;
                jac.row_mut(i).copy_from_slice(grads.wrt(h0).as_slice());
            }
            Ok(jac)
        })
        .collect()
}

/// Prefix products `U_t ⋯ U_1` at the grid steps, re-orthonormalized on the
/// plan's cadence.
pub fn prefix_operators(table: &OperatorTable, tokens: &[usize], grid: &[usize], plan: &ScanPlan) -> Result<Vec<Matrix>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut h = Matrix::identity(table.dim());
    let mut next = grid.iter().peekable();
    for (i, &tok) in tokens.iter().enumerate() {
        h = table.get(tok)?.matmul(&h)?;
        let t = i + 1;
        if t % plan.renorm_every == 0 {
            h = reorthonormalize(&h)?;
        }
        if next.peek() == Some(&&t) {
            out.push(h.clone());
            next.next();
        }
    }
    Ok(out)
}

/// Explicit chain rule for the tanh recurrence:
/// `J_t = P_t · diag(1 − y_t²) · W_rec · J_{t−1}`, with `P_t` the sphere
/// projection Jacobian for the normalized variant and the identity otherwise.
fn rnn_jacobians(model: &Model, tokens: &[usize], grid: &[usize]) -> Result<Vec<Matrix>> {
    let Model::Rnn(rnn) = model else {
        return Err(Error::arg("explicit Jacobian product needs an RNN"));
    };
    let n = rnn.hidden();
    let (w, w_in, b) = (rnn.w_rec(), rnn.w_in(), rnn.bias());
    let mut h = vec![0.0; n];
    let mut jac = Matrix::identity(n);
    let mut out = Vec::with_capacity(grid.len());
    let mut next = grid.iter().peekable();
    for (i, &tok) in tokens.iter().enumerate() {
        let y: Vec<f64> = (0..n)
            .map(|r| (crate::tensor::dot(w.row(r), &h) + w_in[(tok, r)] + b[(0, r)]).tanh())
            .collect();
        let mut step = w.clone();
        for (r, yr) in y.iter().enumerate() {
            let d = 1.0 - yr * yr;
            step.row_mut(r).iter_mut().for_each(|v| *v *= d);
        }
        if rnn.is_normalized() {
            let norm = crate::tensor::dot(&y, &y).sqrt();
            let u: Vec<f64> = y.iter().map(|v| v / norm).collect();
            let proj = Matrix::from_fn(n, n, |r, c| (f64::from(u8::from(r == c)) - u[r] * u[c]) / norm);
            step = proj.matmul(&step)?;
            h = u;
        } else {
            h = y;
        }
        jac = step.matmul(&jac)?;
        let t = i + 1;
        if next.peek() == Some(&&t) {
            out.push(jac.clone());
            next.next();
        }
    }
    Ok(out)
}

/// `1, 2, 5, 10, 20, 50, …` up to and including `t_max`.
pub fn log_grid(t_max: usize) -> Vec<usize> {
    let mut g = Vec::new();
    let mut decade = 1;
    'outer: loop {
        for m in [1, 2, 5] {
            let t = m * decade;
            if t >= t_max {
                break 'outer;
            }
            g.push(t);
        }
        decade *= 10;
    }
    g.push(t_max);
    g
}
