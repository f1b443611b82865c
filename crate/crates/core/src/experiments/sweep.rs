//! Accuracy under energy-normalized noise and the critical threshold T_c.

use crate::autodiff::Precision;
use crate::error::{Error, Result};
use crate::models::{Model, NoiseConfig, NoiseSite};
use crate::par::Exec;
use crate::tensor::RngState;

use super::eval::{predict, sample_episodes};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub grid: Vec<f64>,
    pub episodes: usize,
    pub len: usize,
    pub resamples: usize,
    pub site: Option<NoiseSite>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: uniform_grid(0.0, 2.0, 41),
            episodes: 512,
            len: 5,
            resamples: 1000,
            site: None,
        }
    }
}

/// `points` evenly spaced values on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub model: String,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// 2.5% and 97.5% bootstrap percentiles of the mean accuracy.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub episodes: usize,
    /// Bootstrap replicate curves (`resamples x grid`), resampling the same
    /// episode indices at every temperature.
    pub replicates: Vec<Vec<f64>>,
}

impl SweepResult {
    /// Builds a result from per-temperature correctness bits.
    pub fn from_correct(model: &str, grid: Vec<f64>, correct: &[Vec<bool>], resamples: usize, rng: &RngState) -> Result<Self> {
        if grid.len() != correct.len() || grid.is_empty() {
            return Err(Error::arg("sweep grid and results differ in length"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg("sweep grid must be strictly increasing"));
        }
        let e = correct[0].len();
        if e == 0 || correct.iter().any(|c| c.len() != e) {
            return Err(Error::arg("every temperature needs the same nonzero episode count"));
        }
        let mean: Vec<f64> = correct.iter().map(|c| frac(c.iter().copied())).collect();
        let mut r = rng.clone();
        let mut replicates = Vec::with_capacity(resamples);
        for _ in 0..resamples {
            let idx: Vec<usize> = (0..e).map(|_| r.below(e)).collect();
            replicates.push(correct.iter().map(|c| frac(idx.iter().map(|&i| c[i]))).collect::<Vec<f64>>());
        }
        let (lo, hi) = if resamples == 0 {
            (mean.clone(), mean.clone())
        } else {
            (0..grid.len())
                .map(|k| {
                    let col: Vec<f64> = replicates.iter().map(|rep| rep[k]).collect();
                    (percentile(&col, 0.025), percentile(&col, 0.975))
                })
                .unzip()
        };
        Ok(Self {
            model: model.to_string(),
            grid,
            mean,
            lo,
            hi,
            episodes: e,
            replicates,
        })
    }

    /// `T,acc_mean,acc_lo,acc_hi,episodes` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("T,acc_mean,acc_lo,acc_hi,episodes\n");
        for k in 0..self.grid.len() {
            s.push_str(&format!(
                "{:.6},{:.6},{:.6},{:.6},{}\n",
                self.grid[k], self.mean[k], self.lo[k], self.hi[k], self.episodes
            ));
        }
        s
    }
}

fn frac(bits: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut n) = (0usize, 0usize);
    for b in bits {
        hit += usize::from(b);
        n += 1;
    }
    hit as f64 / n as f64
}

/// Linear-interpolated percentile of unsorted data, `q` in `[0, 1]`.
pub fn percentile(data: &[f64], q: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

/// Accuracy of `model` at every grid temperature on one shared set of
/// episodes. Noise for (temperature `k`, episode `i`) comes from
/// `rng.split_path(&[1, k]).split(i)`.
pub fn noise_sweep(model: &Model, spec: &SweepSpec, rng: &RngState, precision: Precision, exec: Exec) -> Result<SweepResult> {
    let task = model.task();
    let episodes = sample_episodes(&task, &rng.split(0), spec.len, spec.episodes);
    let site = spec.site.unwrap_or(model.kind().default_noise_site());
    let mut correct = Vec::with_capacity(spec.grid.len());
    for (k, &t) in spec.grid.iter().enumerate() {
        if t < 0.0 {
            return Err(Error::arg(format!("noise temperature {t} is negative")));
        }
        let noise = NoiseConfig::at(t, site);
        let root = rng.split_path(&[1, k as u64]);
        let preds = predict(model, &episodes, &noise, &root, precision, exec, false)?;
        correct.push(preds.correct(&episodes));
    }
    SweepResult::from_correct(model.kind().name(), spec.grid.clone(), &correct, spec.resamples, &rng.split(2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TcEstimate {
    pub tc: f64,
    pub lo: f64,
    pub hi: f64,
    /// Every grid point passed; the true threshold lies beyond the grid.
    pub censored: bool,
    /// No grid point passed.
    pub none: bool,
    pub threshold: f64,
}

/// Largest grid index whose value meets `threshold`, interpolated linearly
/// towards the next point. Returns `(T_c, censored, none)`.
fn crossing(grid: &[f64], curve: &[f64], threshold: f64) -> (f64, bool, bool) {
    match curve.iter().rposition(|&a| a >= threshold) {
        None => (0.0, false, true),
        Some(k) if k + 1 == grid.len() => (grid[k], true, false),
        Some(k) => {
            let (a0, a1) = (curve[k], curve[k + 1]);
            let f = (a0 - threshold) / (a0 - a1);
            (grid[k] + f * (grid[k + 1] - grid[k]), false, false)
        }
    }
}

/// T_c from the lower confidence bound of the accuracy curve, with a
/// confidence interval from the bootstrap replicate curves.
pub fn estimate_tc(sweep: &SweepResult, threshold: f64) -> Result<TcEstimate> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::arg(format!("threshold {threshold} outside (0, 1]")));
    }
    let (tc, censored, none) = crossing(&sweep.grid, &sweep.lo, threshold);
    let (mut lo, mut hi) = (tc, tc);
    if !sweep.replicates.is_empty() {
        let reps: Vec<f64> = sweep
            .replicates
            .iter()
            .map(|c| crossing(&sweep.grid, c, threshold).0)
            .collect();
        lo = lo.min(percentile(&reps, 0.025));
        hi = hi.max(percentile(&reps, 0.975));
    }
    Ok(TcEstimate {
        tc,
        lo,
        hi,
        censored,
        none,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(grid: &[f64], acc: impl Fn(f64) -> f64) -> SweepResult {
        let mean: Vec<f64> = grid.iter().map(|&t| acc(t)).collect();
        SweepResult {
            model: "synthetic".into(),
            grid: grid.to_vec(),
            lo: mean.clone(),
            hi: mean.clone(),
            mean,
            episodes: 1,
            replicates: vec![],
        }
    }

    #[test]
    fn censored_and_empty_curves() {
        let grid = uniform_grid(0.0, 2.0, 41);
        let pass = estimate_tc(&synthetic(&grid, |_| 1.0), 0.99).unwrap();
        assert_eq!(pass.tc, 2.0);
        assert!(pass.censored && !pass.none);
        let fail = estimate_tc(&synthetic(&grid, |_| 1.0 / 6.0), 0.99).unwrap();
        assert_eq!(fail.tc, 0.0);
        assert!(fail.none);
    }

    #[test]
    fn grid_is_inclusive() {
        let g = uniform_grid(0.0, 2.0, 41);
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 0.0);
        assert!((g[40] - 2.0).abs() < 1e-15);
        assert!((g[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(percentile(&[1.0, 2.0], 0.25), 1.25);
    }

    #[test]
    fn bad_threshold_rejected() {
        let s = synthetic(&[0.0, 1.0], |_| 1.0);
        assert!(estimate_tc(&s, 0.0).is_err());
        assert!(estimate_tc(&s, 1.5).is_err());
    }
}
