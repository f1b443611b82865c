//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! experiment = "sweep"      # train | sweep | scaling | genlen | horizon
//!                           # | massgap | pca | scan-bench (optional; the
//!                           # CLI subcommand sets it)
//! seed = 7
//! out = "results"
//! workers = 0               # 0 uses every core
//! precision = 64            # 32 | 64
//! checkpoint = "model.ckpt" # evaluate this model instead of training one
//!
//! [task]
//! kind = "s3"               # or kind = "binding", vars = 10
//!
//! [model]                   # kind, hidden, layers, heads, d_ff, positional,
//! kind = "holonomic"        # max_len, pooling, init_scale
//! hidden = 32
//!
//! [train]                   # batch_size, max_steps, lr_final, check_every, ...
//! [train.adam]              # lr, beta1, beta2, eps, clip
//! [train.curriculum]        # schedule, l_min, l_max, sample_min, gate, ...
//! [sweep]                   # t_min, t_max, points | temperatures, episodes,
//!                           # len, resamples, site, threshold
//! [scaling]                 # ns
//! [genlen]                  # lengths, episodes
//! [horizon]                 # t_max, grid, methods
//! [geometry]                # per_class, len, temperature, checkpoints
//! [scan_bench]              # hidden, vocab, lengths, workers, modes
//! ```
//!
//! Every table and key is optional; unknown keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autodiff::Precision;
use crate::error::{Error, Result};
use crate::experiments::{uniform_grid, HorizonMethod, SweepSpec, TrainSpec, DEFAULT_LENGTHS};
use crate::models::{fnv1a, ModelKind, ModelSpec, NoiseSite};
use crate::scan::ScanMode;
use crate::tasks::{CurriculumSpec, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Sweep,
    Scaling,
    Genlen,
    Horizon,
    Massgap,
    Pca,
    ScanBench,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Sweep => "sweep",
            Experiment::Scaling => "scaling",
            Experiment::Genlen => "genlen",
            Experiment::Horizon => "horizon",
            Experiment::Massgap => "massgap",
            Experiment::Pca => "pca",
            Experiment::ScanBench => "scan-bench",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Explicit grid; overrides `t_min`, `t_max` and `points`.
    pub temperatures: Option<Vec<f64>>,
    pub episodes: usize,
    pub len: usize,
    pub resamples: usize,
    pub site: Option<NoiseSite>,
    /// Accuracy that the lower confidence bound must reach below T_c.
    pub threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 2.0,
            points: 41,
            temperatures: None,
            episodes: 512,
            len: 5,
            resamples: 1000,
            site: None,
            threshold: 0.99,
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Vec<f64> {
        match &self.temperatures {
            Some(t) => t.clone(),
            None => uniform_grid(self.t_min, self.t_max, self.points),
        }
    }

    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            grid: self.grid(),
            episodes: self.episodes,
            len: self.len,
            resamples: self.resamples,
            site: self.site,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub ns: Vec<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            ns: vec![8, 16, 32, 64, 128],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenlenConfig {
    pub lengths: Vec<usize>,
    pub episodes: usize,
}

impl Default for GenlenConfig {
    fn default() -> Self {
        Self {
            lengths: DEFAULT_LENGTHS.to_vec(),
            episodes: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    pub t_max: usize,
    /// Explicit steps; defaults to a 1-2-5 grid up to `t_max`.
    pub grid: Option<Vec<usize>>,
    pub methods: Vec<HorizonMethod>,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            t_max: 5000,
            grid: None,
            methods: vec![HorizonMethod::Autodiff, HorizonMethod::OperatorNorm],
        }
    }
}

impl HorizonConfig {
    pub fn grid(&self) -> Vec<usize> {
        self.grid.clone().unwrap_or_else(|| crate::experiments::log_grid(self.t_max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub per_class: usize,
    pub len: usize,
    /// Noise temperature for PCA snapshots.
    pub temperature: f64,
    /// Further models to place beside the main one in a PCA snapshot.
    pub checkpoints: Vec<PathBuf>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            len: 5,
            temperature: 0.0,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanBenchConfig {
    pub hidden: usize,
    pub vocab: usize,
    pub lengths: Vec<usize>,
    pub workers: Vec<usize>,
    pub modes: Vec<ScanMode>,
}

impl Default for ScanBenchConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            vocab: 6,
            lengths: vec![1024, 16384],
            workers: vec![1, 2, 4],
            modes: vec![ScanMode::Sequential, ScanMode::Tree, ScanMode::Streaming],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub precision: u32,
    pub checkpoint: Option<PathBuf>,
    pub task: Task,
    pub model: ModelSpec,
    pub train: TrainSpec,
    pub sweep: SweepConfig,
    pub scaling: ScalingConfig,
    pub genlen: GenlenConfig,
    pub horizon: HorizonConfig,
    pub geometry: GeometryConfig,
    pub scan_bench: ScanBenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            out: PathBuf::from("results"),
            workers: 0,
            precision: 64,
            checkpoint: None,
            task: Task::S3,
            model: ModelSpec::default(),
            train: TrainSpec::default(),
            sweep: SweepConfig::default(),
            scaling: ScalingConfig::default(),
            genlen: GenlenConfig::default(),
            horizon: HorizonConfig::default(),
            geometry: GeometryConfig::default(),
            scan_bench: ScanBenchConfig::default(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, column)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    if text.trim().is_empty() {
        return Err(Error::ConfigParse {
            line: 1,
            column: 1,
            message: "configuration is empty".into(),
        });
    }
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    cfg.sync();
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn precision(&self) -> Precision {
        Precision::from_bits(self.precision).unwrap_or_default()
    }

    /// Pushes run-level settings into the nested specs.
    ///
    /// A binding task left on the default stepwise curriculum is switched to
    /// the linear ramp over lengths 5 to 50.
    pub fn sync(&mut self) {
        self.train.precision = self.precision();
        if self.task.has_query() && self.train.curriculum == CurriculumSpec::default() {
            self.train.curriculum = CurriculumSpec::linear_ramp(5, 50, 5);
        }
    }

    /// Cross-field checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigValidation(m));
        if Precision::from_bits(self.precision).is_none() {
            return fail(format!("precision must be 32 or 64, got {}", self.precision));
        }
        if let Task::Binding { vars } = self.task {
            if vars < 2 {
                return fail(format!("binding task needs vars >= 2, got {vars}"));
            }
            if self.model.hidden < vars {
                return fail(format!(
                    "binding task needs N >= V for a faithful representation, got N = {} < V = {vars}",
                    self.model.hidden
                ));
            }
        }
        let m = &self.model;
        if m.hidden == 0 {
            return fail("model.hidden must be positive".into());
        }
        if !(m.init_scale > 0.0) {
            return fail("model.init_scale must be positive".into());
        }
        if m.kind == ModelKind::Transformer {
            if m.heads == 0 || m.hidden % m.heads != 0 {
                return fail(format!("d_model {} must be divisible by heads {}", m.hidden, m.heads));
            }
            if m.max_len == 0 {
                return fail("model.max_len must be positive".into());
            }
        }
        self.train.validate()?;
        let s = &self.sweep;
        let grid = s.grid();
        if grid.is_empty() || grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return fail("sweep temperatures must be finite and non-negative".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return fail("sweep temperatures must be strictly increasing".into());
        }
        if s.episodes == 0 || s.len == 0 {
            return fail("sweep.episodes and sweep.len must be positive".into());
        }
        let chance = 1.0 / self.task.classes() as f64;
        if !(s.threshold > chance && s.threshold <= 1.0) {
            return fail(format!("sweep.threshold must lie in ({chance:.4}, 1], got {}", s.threshold));
        }
        let mut ns = self.scaling.ns.clone();
        ns.sort_unstable();
        if ns.windows(2).any(|w| w[0] == w[1]) || ns.first() == Some(&0) {
            return fail("scaling.ns must be distinct positive sizes".into());
        }
        if self.genlen.lengths.is_empty() || self.genlen.lengths.contains(&0) || self.genlen.episodes == 0 {
            return fail("genlen needs positive lengths and episodes".into());
        }
        if self.precision() == Precision::F32 {
            if let Some(l) = self.genlen.lengths.iter().find(|&&l| l > crate::experiments::F32_MAX_LEN) {
                if self.experiment == Some(Experiment::Genlen) {
                    return fail(format!("genlen length {l} requires precision = 64"));
                }
            }
        }
        let h = &self.horizon;
        let hg = h.grid();
        if hg.is_empty() || hg[0] == 0 || hg.windows(2).any(|w| w[1] <= w[0]) || h.methods.is_empty() {
            return fail("horizon grid must be strictly increasing positive steps with at least one method".into());
        }
        let g = &self.geometry;
        if g.per_class == 0 || g.len == 0 || !(g.temperature >= 0.0) {
            return fail("geometry needs per_class >= 1, len >= 1 and temperature >= 0".into());
        }
        let b = &self.scan_bench;
        if b.hidden == 0 || b.vocab == 0 || b.lengths.contains(&0) || b.workers.contains(&0) {
            return fail("scan_bench sizes, lengths and workers must be positive".into());
        }
        Ok(())
    }

    /// The configuration as TOML; parsing it back yields the same run.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// Short identifier derived from the snapshot.
    pub fn run_id(&self) -> String {
        format!("s{}-{:08x}", self.seed, fnv1a(self.snapshot().as_bytes()) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("seed = 3\n").unwrap();
        assert_eq!(cfg.model.hidden, 32);
        assert_eq!(cfg.model.kind, ModelKind::Holonomic);
        assert_eq!(cfg.train.curriculum.l_max, 5);
        assert_eq!(cfg.task, Task::S3);
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(parse_config("  \n"), Err(Error::ConfigParse { .. })));
    }

    #[test]
    fn unknown_key_reports_position() {
        match parse_config("seed = 1\n[model]\nhiden = 4\n") {
            Err(Error::ConfigParse { line, column, .. }) => assert_eq!((line, column), (3, 1)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn binding_needs_enough_hidden_units() {
        let text = "[task]\nkind = \"binding\"\nvars = 10\n[model]\nhidden = 8\n";
        match parse_config(text) {
            Err(Error::ConfigValidation(m)) => assert!(m.contains("N >= V"), "{m}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let text = "seed = 9\nprecision = 32\n[task]\nkind = \"binding\"\nvars = 5\n[sweep]\ntemperatures = [0.0, 0.5]\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.snapshot()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.run_id(), again.run_id());
        assert_eq!(again.train.precision, Precision::F32);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
