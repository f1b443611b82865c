//! Factorizations and spectral routines: LU solves, polar re-orthonormalization,
//! power-iteration spectral norm, symmetric Jacobi eigensolver and PCA.

use super::matrix::{Matrix, Trans, Vector};
use super::rng::RngState;
use crate::error::{Error, Result};

/// Solves `A X = B` by LU with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::dim(
            "solve",
            format!("A {:?}, B {:?}", a.shape(), b.shape()),
        ));
    }
    let n = a.rows();
    let m = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[(col, col)].abs();
        for r in (col + 1)..n {
            let v = lu[(r, col)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best <= scale * 1e-300 || !best.is_finite() {
            return Err(Error::Numeric {
                op: "solve",
                detail: format!("singular pivot at column {col}"),
            });
        }
        if piv != col {
            for c in 0..n {
                let tmp = lu[(col, c)];
                lu[(col, c)] = lu[(piv, c)];
                lu[(piv, c)] = tmp;
            }
            for c in 0..m {
                let tmp = x[(col, c)];
                x[(col, c)] = x[(piv, c)];
                x[(piv, c)] = tmp;
            }
        }
        let p = lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] / p;
            if f == 0.0 {
                continue;
            }
            lu[(r, col)] = f;
            for c in (col + 1)..n {
                let v = lu[(col, c)];
                lu[(r, c)] -= f * v;
            }
            for c in 0..m {
                let v = x[(col, c)];
                x[(r, c)] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let p = lu[(col, col)];
        for c in 0..m {
            let mut s = x[(col, c)];
            for k in (col + 1)..n {
                s -= lu[(col, k)] * x[(k, c)];
            }
            x[(col, c)] = s / p;
        }
    }
    Ok(x)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve(a, &Matrix::identity(a.rows()))
}

/// Nearest orthogonal matrix (polar factor) by Newton iteration
/// `U ← ½(U + U⁻ᵀ)`.
///
/// Input must already be near-orthogonal: `‖UᵀU − I‖_F < 0.5`.
pub fn reorthonormalize(u: &Matrix) -> Result<Matrix> {
    const MAX_ITERS: usize = 50;
    if !u.is_square() {
        return Err(Error::dim("reorthonormalize", format!("{:?}", u.shape())));
    }
    let defect = u.orthogonality_defect();
    if !(defect < 0.5) {
        return Err(Error::Convergence {
            op: "reorthonormalize",
            iterations: 0,
            best: defect,
        });
    }
    let n = u.rows() as f64;
    // Below this a Newton step is indistinguishable from rounding noise.
    let floor = 4.0 * f64::EPSILON * n;
    let mut x = u.clone();
    let mut prev = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let inv_t = inverse(&x)?.transpose();
        let mut next = x.clone();
        next.add_assign(&inv_t);
        next.scale_in_place(0.5);
        let step = next.frobenius_distance(&x);
        x = next;
        if step <= floor || step >= prev {
            let d = x.orthogonality_defect();
            if d < orthogonality_tolerance(u.rows()) {
                return Ok(x);
            }
            return Err(Error::Convergence {
                op: "reorthonormalize",
                iterations: it,
                best: d,
            });
        }
        prev = step;
    }
    Err(Error::Convergence {
        op: "reorthonormalize",
        iterations: MAX_ITERS,
        best: x.orthogonality_defect(),
    })
}

/// Defect `‖UᵀU − I‖_F` that [`reorthonormalize`] guarantees: `1e−13`, or the
/// rounding floor of forming `UᵀU` when that is larger (only for large `n`).
pub fn orthogonality_tolerance(n: usize) -> f64 {
    let n = n as f64;
    1e-13f64.max(f64::EPSILON * n * n.sqrt())
}

/// Largest singular value by power iteration on `MᵀM`, with a start vector
/// drawn from a fixed seed.
pub fn spectral_norm(m: &Matrix, tol: f64) -> Result<f64> {
    spectral_norm_with(m, tol, &mut RngState::new(0x5eed_0f_5bec))
}

/// As [`spectral_norm`], drawing the start vector from `rng`.
pub fn spectral_norm_with(m: &Matrix, tol: f64, rng: &mut RngState) -> Result<f64> {
    const MAX_ITERS: usize = 20_000;
    if !(tol > 0.0) {
        return Err(Error::arg(format!("spectral_norm tolerance must be positive, got {tol}")));
    }
    if !m.is_finite() {
        return Err(Error::Numeric {
            op: "spectral_norm",
            detail: "non-finite entries".into(),
        });
    }
    if m.rows() == 0 || m.cols() == 0 || m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    // Work on m / max|m| so the Gram matrix neither underflows nor overflows.
    let peak = m.max_abs();
    let m = &m.scale(1.0 / peak);
    let gram = m.matmul_t(Trans::Yes, m, Trans::No)?;
    let mut v = rng.gaussian(m.cols()).normalized();
    let mut sigma_sq = 0.0;
    for it in 0..MAX_ITERS {
        let w = gram.mul_vec(&v)?;
        // Rayleigh quotient of the Gram matrix at the unit vector v.
        let rq = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            // Start vector landed in the null space; restart.
            v = rng.gaussian(m.cols()).normalized();
            continue;
        }
        v = w.scale(1.0 / wn);
        if it > 0 && (rq - sigma_sq).abs() <= tol * rq.abs() {
            return Ok(rq.max(0.0).sqrt() * peak);
        }
        sigma_sq = rq;
    }
    Err(Error::Convergence {
        op: "spectral_norm",
        iterations: MAX_ITERS,
        best: sigma_sq.max(0.0).sqrt() * peak,
    })
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in descending order; `vectors` holds the
/// matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub fn symmetric_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    const MAX_SWEEPS: usize = 100;
    if !a.is_square() {
        return Err(Error::dim("symmetric_eigen", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let total = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            op: "symmetric_eigen",
            iterations: MAX_SWEEPS,
            best: f64::NAN,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vector,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Top-k principal directions, unit norm, largest-magnitude entry positive.
    pub components: Vec<Vector>,
    /// Per-point coordinates in the component basis.
    pub projected: Vec<Vector>,
}

impl Pca {
    /// Squared reconstruction error summed over points.
    pub fn residual(&self, points: &[Vector]) -> f64 {
        points
            .iter()
            .zip(&self.projected)
            .map(|(p, coords)| {
                let mut recon = self.mean.clone();
                for (c, &w) in self.components.iter().zip(coords.as_slice()) {
                    recon = recon.add(&c.scale(w));
                }
                let d = p.sub(&recon);
                d.dot(&d)
            })
            .sum()
    }
}

/// Principal component analysis of `points`, keeping `k` components.
pub fn pca_project(points: &[Vector], k: usize) -> Result<Pca> {
    if points.len() < 2 {
        return Err(Error::arg(format!("pca needs at least 2 points, got {}", points.len())));
    }
    let dim = points[0].dim();
    if points.iter().any(|p| p.dim() != dim) {
        return Err(Error::dim("pca_project", "points of differing dimension"));
    }
    if k > dim {
        return Err(Error::arg(format!("pca k = {k} exceeds dimension {dim}")));
    }
    let n = points.len() as f64;
    let mut mean = Vector::zeros(dim);
    for p in points {
        for (m, x) in mean.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *m += x / n;
        }
    }
    let centered = Matrix::from_fn(points.len(), dim, |r, c| points[r][c] - mean[c]);
    let mut cov = centered.matmul_t(Trans::Yes, &centered, Trans::No)?;
    cov.scale_in_place(1.0 / (n - 1.0));
    let eig = symmetric_eigen(&cov)?;
    let components: Vec<Vector> = (0..k)
        .map(|j| {
            let col = eig.vectors.col(j);
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            let sign = if lead < 0.0 { -1.0 } else { 1.0 };
            Vector::from_vec(col.into_iter().map(|x| x * sign).collect())
        })
        .collect();
    let projected = (0..points.len())
        .map(|r| {
            let row = centered.row(r);
            Vector::from_vec(
                components
                    .iter()
                    .map(|c| super::matrix::dot(row, c.as_slice()))
                    .collect(),
            )
        })
        .collect();
    Ok(Pca {
        mean,
        eigenvalues: eig.values,
        components,
        projected,
    })
}
