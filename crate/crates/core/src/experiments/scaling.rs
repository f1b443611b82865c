//! Critical threshold against hidden size and its logarithmic fit.

use super::sweep::{estimate_tc, noise_sweep, SweepResult, SweepSpec, TcEstimate};
use super::train::{train, TrainReport, TrainSpec};
use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::par::Exec;
use crate::tasks::Task;
use crate::tensor::RngState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingPoint {
    pub n: usize,
    pub tc: f64,
    pub tc_lo: f64,
    pub tc_hi: f64,
    /// Excluded from fits (the model did not converge, or T_c is censored).
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub points: Vec<ScalingPoint>,
    pub alpha: f64,
    pub beta: f64,
    pub r2: f64,
}

/// Least squares `T_c = α·ln N + β` over the unflagged points.
pub fn fit_log_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    let used: Vec<&ScalingPoint> = points.iter().filter(|p| !p.flagged).collect();
    if used.len() < 3 {
        return Err(Error::arg(format!("scaling fit needs at least 3 points, got {}", used.len())));
    }
    let mut ns: Vec<usize> = used.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("scaling fit needs distinct N values"));
    }
    if ns[0] == 0 {
        return Err(Error::arg("scaling fit needs positive N"));
    }
    let xs: Vec<f64> = used.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.tc).collect();
    let (alpha, beta, r2) = linear_fit(&xs, &ys)?;
    Ok(ScalingFit {
        points: points.to_vec(),
        alpha,
        beta,
        r2,
    })
}

/// Ordinary least squares `y = a·x + b`; returns `(a, b, R²)` with `R² = 0`
/// when `y` is constant.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("degenerate design: all abscissae equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok((a, b, r2))
}

/// `N,Tc,Tc_lo,Tc_hi` rows.
pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut s = String::from("N,Tc,Tc_lo,Tc_hi\n");
    for p in points {
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", p.n, p.tc, p.tc_lo, p.tc_hi));
    }
    s
}

/// One hidden size of a finite-size scan.
#[derive(Clone, Debug)]
pub struct SizeRun {
    pub point: ScalingPoint,
    pub report: TrainReport,
    pub sweep: SweepResult,
    pub estimate: TcEstimate,
}

#[derive(Clone, Debug)]
pub struct FiniteSizeResult {
    pub runs: Vec<SizeRun>,
    /// `None` when fewer than three points survived.
    pub fit: Option<ScalingFit>,
}

impl FiniteSizeResult {
    pub fn points(&self) -> Vec<ScalingPoint> {
        self.runs.iter().map(|r| r.point).collect()
    }
}

/// Trains, sweeps and estimates `T_c` independently for every hidden size in
/// `ns`. Size `n` draws from `rng.split(n)` (init, training and sweep
/// streams 0, 1, 2), so adding sizes never changes existing points.
/// Non-converged or right-censored points are flagged and left out of the fit.
#[allow(clippy::too_many_arguments)]
pub fn finite_size_scan(
    ns: &[usize],
    model: &ModelSpec,
    task: Task,
    train_spec: &TrainSpec,
    sweep_spec: &SweepSpec,
    threshold: f64,
    rng: &RngState,
    exec: Exec,
) -> Result<FiniteSizeResult> {
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("hidden sizes in a finite-size scan must be distinct"));
    }
    if ns.is_empty() || sorted[0] == 0 {
        return Err(Error::arg("finite-size scan needs positive hidden sizes"));
    }
    let mut runs = Vec::with_capacity(ns.len());
    for &n in ns {
        let r = rng.split(n as u64);
        let spec = ModelSpec {
            hidden: n,
            ..model.clone()
        };
        let mut m = Model::new(&spec, task, &mut r.split(0))?;
        let report = train(&mut m, train_spec, &r.split(1), exec)?;
        let sweep = noise_sweep(&m, sweep_spec, &r.split(2), train_spec.precision, exec)?;
        let estimate = estimate_tc(&sweep, threshold)?;
        runs.push(SizeRun {
            point: ScalingPoint {
                n,
                tc: estimate.tc,
                tc_lo: estimate.lo,
                tc_hi: estimate.hi,
                flagged: !report.converged() || estimate.censored,
            },
            report,
            sweep,
            estimate,
        });
    }
    let points: Vec<ScalingPoint> = runs.iter().map(|r| r.point).collect();
    let fit = if points.iter().filter(|p| !p.flagged).count() >= 3 {
        Some(fit_log_scaling(&points)?)
    } else {
        None
    };
    Ok(FiniteSizeResult { runs, fit })
}
