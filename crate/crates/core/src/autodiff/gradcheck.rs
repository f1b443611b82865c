//! Finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::tensor::RngState;

use super::adam::ParamStore;

pub const GRAD_FLOOR: f64 = 1e-6;

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares analytic gradients of `f` to a five-point central difference on
/// `samples` seeded coordinates (all coordinates when there are fewer).
///
/// `f` returns the loss and its gradient, one tensor per parameter.
/// The error at a coordinate is `|a − n| / max(|a|, |n|, GRAD_FLOOR)`: below
/// the floor, where round-off in the difference quotient (about ε·|f|/h)
/// dominates, gradients are compared in absolute terms.
pub fn grad_check<F>(store: &ParamStore, f: F, eps: f64, samples: usize, rng: &mut RngState) -> Result<GradCheck>
where
    F: Fn(&ParamStore) -> Result<(f64, Vec<crate::tensor::Matrix>)>,
{
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(Error::arg(format!("grad_check step {eps} outside [1e-8, 1e-4]")));
    }
    let (_, grads) = f(store)?;
    if grads.len() != store.len() {
        return Err(Error::dim("grad_check", "gradient count differs from parameter count"));
    }
    let flat: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect();
    let total = store.scalar_count();
    let coords: Vec<usize> = if total <= samples {
        (0..total).collect()
    } else {
        (0..samples).map(|_| rng.below(total)).collect()
    };

    let mut probe = store.clone();
    let mut eval_at = |k: usize, x0: f64, delta: f64| -> Result<f64> {
        probe.flat_set(k, x0 + delta);
        let v = f(&probe)?.0;
        probe.flat_set(k, x0);
        Ok(v)
    };

    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    for &k in &coords {
        let x0 = store.flat_get(k);
        let fp1 = eval_at(k, x0, eps)?;
        let fm1 = eval_at(k, x0, -eps)?;
        let fp2 = eval_at(k, x0, 2.0 * eps)?;
        let fm2 = eval_at(k, x0, -2.0 * eps)?;
        let numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * eps);
        let analytic = flat[k];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
        if rel > out.max_rel_error || !rel.is_finite() {
            out = GradCheck {
                max_rel_error: rel,
                worst_index: k,
                analytic,
                numeric,
                coordinates: coords.len(),
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        store.push("w", Matrix::from_fn(3, 4, |i, j| (i as f64) - 0.5 * j as f64));
        let f = |s: &ParamStore| {
            let w = s.get(0);
            let loss = w.as_slice().iter().map(|x| 1.5 * x * x + x).sum();
            Ok((loss, vec![w.map(|x| 3.0 * x + 1.0)]))
        };
        let r = grad_check(&store, f, 1e-5, 200, &mut RngState::new(1)).unwrap();
        assert_eq!(r.coordinates, 12);
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut store = ParamStore::new();
        store.push("w", Matrix::filled(1, 2, 1.0));
        let f = |s: &ParamStore| {
            let w = s.get(0);
            Ok((w.as_slice().iter().map(|x| x * x).sum(), vec![w.clone()]))
        };
        let r = grad_check(&store, f, 1e-5, 200, &mut RngState::new(1)).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-8);
    }

    #[test]
    fn flat_direction_is_not_flagged() {
        // The loss ignores the second entry; its difference quotient is pure round-off.
        let mut store = ParamStore::new();
        store.push("w", Matrix::from_vec(1, 2, vec![0.7, 3.0]).unwrap());
        let f = |s: &ParamStore| {
            let w = s.get(0);
            let x = w.as_slice()[0];
            Ok(((x * 13.1).sin() * 1e3 + w.as_slice()[1] * 0.0, vec![Matrix::from_vec(1, 2, vec![13.1e3 * (x * 13.1).cos(), 0.0]).unwrap()]))
        };
        let r = grad_check(&store, f, 1e-5, 200, &mut RngState::new(1)).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let store = ParamStore::new();
        let f = |_: &ParamStore| Ok((0.0, vec![]));
        assert!(grad_check(&store, f, 1e-2, 10, &mut RngState::new(0)).is_err());
    }
}
