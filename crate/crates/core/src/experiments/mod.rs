//! Training and the measurement pipelines built on trained models.

mod eval;
mod genlen;
mod geometry;
mod horizon;
mod scaling;
mod sweep;
mod train;

pub use eval::{all_s3_episodes, predict, sample_episodes, Predictions};
pub use genlen::{genlen_csv, length_generalization_eval, GenLenRow, DEFAULT_LENGTHS, F32_MAX_LEN};
pub use geometry::{
    class_states, mass_gap, mass_gap_of, pca_csv, pca_snapshot, silhouette, ClassStates, MassGap, PcaPanel,
};
pub use horizon::{fit_lambda, jacobian_horizon, log_grid, prefix_operators, HorizonCurve, HorizonMethod, FIT_FROM};
pub use scaling::{
    finite_size_scan, fit_log_scaling, linear_fit, scaling_csv, FiniteSizeResult, ScalingFit, ScalingPoint, SizeRun,
};
pub use sweep::{estimate_tc, noise_sweep, percentile, uniform_grid, SweepResult, SweepSpec, TcEstimate};
pub use train::{train, LogEntry, TrainOutcome, TrainReport, TrainSpec};
