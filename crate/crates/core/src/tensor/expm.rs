//! Matrix exponential on real square matrices and its Fréchet derivative.
//!
//! The core is scaling-and-squaring around a degree-13 Padé approximant
//! (Higham 2005). The Fréchet derivative reuses the same routine on the
//! 2N x 2N block matrix `[[A, E], [0, A]]`, whose exponential carries
//! `L(A, E)` in its upper-right block.

use super::linalg::solve;
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Padé(13) numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which Padé(13) meets unit roundoff without scaling.
const THETA13: f64 = 5.371920351148152;

/// `M − Mᵀ`, built entry-pairwise so the result is exactly antisymmetric.
pub fn skew(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::dim("skew", format!("{:?} is not square", m.shape())));
    }
    let n = m.rows();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m[(i, j)] - m[(j, i)];
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    Ok(a)
}

/// `exp(A)` by scaling and squaring.
pub fn mat_exp(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::dim("mat_exp", format!("{:?} is not square", a.shape())));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let norm = a.norm1();
    if !norm.is_finite() {
        return Err(Error::Numeric {
            op: "mat_exp",
            detail: format!("1-norm of argument is {norm}"),
        });
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::Numeric {
            op: "mat_exp",
            detail: format!("norm {norm:e} needs {squarings} squarings"),
        });
    }
    let scaled = a.scale(0.5f64.powi(squarings));
    let mut x = pade13(&scaled)?;
    for _ in 0..squarings {
        x = x.matmul(&x)?;
    }
    if !x.is_finite() {
        return Err(Error::Numeric {
            op: "mat_exp",
            detail: "result overflowed".into(),
        });
    }
    Ok(x)
}

fn pade13(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let b = &PADE13;
    let ident = Matrix::identity(n);
    let a2 = a.matmul(a)?;
    let a4 = a2.matmul(&a2)?;
    let a6 = a4.matmul(&a2)?;

    let mut inner_u = a6.scale(b[13]);
    inner_u.axpy(b[11], &a4);
    inner_u.axpy(b[9], &a2);
    let mut w = a6.matmul(&inner_u)?;
    w.axpy(b[7], &a6);
    w.axpy(b[5], &a4);
    w.axpy(b[3], &a2);
    w.axpy(b[1], &ident);
    let u = a.matmul(&w)?;

    let mut inner_v = a6.scale(b[12]);
    inner_v.axpy(b[10], &a4);
    inner_v.axpy(b[8], &a2);
    let mut v = a6.matmul(&inner_v)?;
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &ident);

    let p = v.add(&u)?;
    let q = v.sub(&u)?;
    solve(&q, &p)
}

/// Returns `(exp(A), L(A, E))` where `L` is the Fréchet derivative of the
/// exponential at `A` applied to direction `E`.
pub fn mat_exp_frechet(a: &Matrix, e: &Matrix) -> Result<(Matrix, Matrix)> {
    if !a.is_square() || a.shape() != e.shape() {
        return Err(Error::dim(
            "mat_exp_frechet",
            format!("A {:?}, E {:?}", a.shape(), e.shape()),
        ));
    }
    let n = a.rows();
    // L is linear in E; a unit-norm direction keeps the block's norm, and so
    // the number of squarings, governed by A alone.
    let e_norm = e.norm1();
    let unit = if e_norm > 0.0 { 1.0 / e_norm } else { 1.0 };
    let mut big = Matrix::zeros(2 * n, 2 * n);
    big.set_block(0, 0, a);
    big.set_block(0, n, &e.scale(unit));
    big.set_block(n, n, a);
    let x = mat_exp(&big)?;
    let mut l = x.block(0, n, n, n);
    if e_norm > 0.0 {
        l.scale_in_place(e_norm);
    }
    Ok((x.block(0, 0, n, n), l))
}

/// Adjoint of `E ↦ L(A, E)` under the Frobenius inner product, i.e. the
/// gradient of `⟨exp(A), G⟩` with respect to `A`. Equals `L(Aᵀ, G)`.
pub fn mat_exp_adjoint(a: &Matrix, g: &Matrix) -> Result<Matrix> {
    Ok(mat_exp_frechet(&a.transpose(), g)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn skew_of_zero_and_unit_upper() {
        assert_eq!(skew(&Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(3, 3));
        let m = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let want = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(skew(&m).unwrap(), want);
    }

    #[test]
    fn skew_rejects_rectangular() {
        assert!(skew(&Matrix::zeros(2, 3)).is_err());
        assert!(mat_exp(&Matrix::zeros(2, 3)).is_err());
        assert!(mat_exp_frechet(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(mat_exp(&Matrix::zeros(5, 5)).unwrap(), Matrix::identity(5));
    }

    #[test]
    fn quarter_turn_rotation() {
        let a = Matrix::from_rows(&[[0.0, -FRAC_PI_2], [FRAC_PI_2, 0.0]]).unwrap();
        let u = mat_exp(&a).unwrap();
        let want = Matrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]]).unwrap();
        assert!(u.frobenius_distance(&want) < 1e-15, "{u:?}");
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(mat_exp(&a), Err(Error::Numeric { .. })));
    }

    #[test]
    fn frechet_at_zero_is_identity_map_and_linear_in_e() {
        let e = Matrix::from_fn(3, 3, |r, c| (r as f64) - 0.5 * c as f64);
        let (x, l) = mat_exp_frechet(&Matrix::zeros(3, 3), &e).unwrap();
        assert_eq!(x, Matrix::identity(3));
        assert!(l.frobenius_distance(&e) < 1e-15);
        let a = Matrix::from_fn(3, 3, |r, c| 0.3 * (r as f64 - c as f64));
        let (_, l0) = mat_exp_frechet(&a, &Matrix::zeros(3, 3)).unwrap();
        assert_eq!(l0, Matrix::zeros(3, 3));
    }
}
