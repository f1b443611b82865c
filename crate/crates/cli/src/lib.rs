//! `holonet`: configuration-driven experiment runner.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use holonomic::config::{parse_config, Experiment, RunConfig};
use holonomic::error::Error;
use holonomic::experiments::{
    estimate_tc, finite_size_scan, genlen_csv, jacobian_horizon, length_generalization_eval, mass_gap, noise_sweep,
    pca_csv, pca_snapshot, scaling_csv, train, TrainReport,
};
use holonomic::models::{load_checkpoint, save_checkpoint, Model};
use holonomic::par::{with_workers, Exec};
use holonomic::report::{render_report, RunDir, Summary, CURVE_FILE, SNAPSHOT_FILE, SUMMARY_FILE};
use holonomic::scan::{bench_scan, random_table, ScanMode};
use holonomic::tensor::RngState;

pub mod verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "holonet", version, about = "Holonomic network experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Results root (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Numeric precision in bits.
    #[arg(long, global = true, value_parser = ["32", "64"])]
    precision: Option<String>,
    /// Evaluate this checkpoint instead of training (overrides the config).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the configured model and save a checkpoint.
    Train,
    /// Accuracy against noise temperature and the critical threshold.
    Sweep,
    /// Critical threshold across hidden sizes with a ln N fit.
    Scaling,
    /// Accuracy at lengths beyond training.
    Genlen,
    /// Jacobian norm ‖∂h_t/∂h_0‖ against t.
    Horizon,
    /// Minimum angular separation of class centroids.
    Massgap,
    /// Principal-component snapshot of final states.
    Pca,
    /// Time sequential, tree and streaming scans.
    ScanBench,
    /// Markdown summary of every run under the results root.
    Report,
    /// Run the invariant and gradient-check suite.
    Verify,
}

impl Command {
    fn experiment(&self) -> Option<Experiment> {
        Some(match self {
            Command::Train => Experiment::Train,
            Command::Sweep => Experiment::Sweep,
            Command::Scaling => Experiment::Scaling,
            Command::Genlen => Experiment::Genlen,
            Command::Horizon => Experiment::Horizon,
            Command::Massgap => Experiment::Massgap,
            Command::Pca => Experiment::Pca,
            Command::ScanBench => Experiment::ScanBench,
            Command::Report | Command::Verify => return None,
        })
    }
}

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::NotConverged(_) => EXIT_NOT_CONVERGED,
            Failure::Error(e) => match e {
                Error::Numeric { .. } | Error::Convergence { .. } | Error::Dimension { .. } => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Error(e) => write!(f, "{e}"),
            Failure::NotConverged(m) => write!(f, "training did not converge: {m}"),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Progress goes to stderr, results to files.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn load_config(common: &Common, experiment: Option<Experiment>) -> Outcome<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(p) = &common.precision {
        cfg.precision = p.parse().expect("clap restricts the values");
    }
    if let Some(c) = &common.checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    match (cfg.experiment, experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::ConfigValidation(format!(
                "config is for experiment '{}' but '{}' was requested",
                a.name(),
                b.name()
            ))
            .into())
        }
        (_, Some(b)) => cfg.experiment = Some(b),
        _ => {}
    }
    cfg.sync();
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Report => {
            let cfg = load_config(&cli.common, None)?;
            let md = render_report(&cfg.out)?;
            print!("{md}");
            Ok(())
        }
        Command::Verify => {
            let cfg = load_config(&cli.common, None)?;
            let results = with_workers(cfg.workers, || verify::run_suite(cfg.seed))?;
            let mut failed = 0;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Error::Numeric {
                    op: "verify",
                    detail: format!("{failed} of {} checks failed", results.len()),
                }
                .into());
            }
            Ok(())
        }
        ref cmd => {
            let cfg = load_config(&cli.common, cmd.experiment())?;
            with_workers(cfg.workers, || run_experiment(&cfg))?
        }
    }
}

/// Runs the experiment named in `cfg` and writes its result directory.
pub fn run_experiment(cfg: &RunConfig) -> Outcome<()> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| Error::ConfigValidation("no experiment selected".into()))?;
    let run = RunDir::create(&cfg.out, experiment.name(), &cfg.run_id())?;
    run.write(SNAPSHOT_FILE, &cfg.snapshot())?;
    let mut summary = Summary::new();
    summary.set("experiment", experiment.name()).set("seed", cfg.seed);
    let result = match experiment {
        Experiment::Train => run_train(cfg, &run, &mut summary),
        Experiment::Sweep => run_sweep(cfg, &run, &mut summary),
        Experiment::Scaling => run_scaling(cfg, &run, &mut summary),
        Experiment::Genlen => run_genlen(cfg, &run, &mut summary),
        Experiment::Horizon => run_horizon(cfg, &run, &mut summary),
        Experiment::Massgap => run_massgap(cfg, &run, &mut summary),
        Experiment::Pca => run_pca(cfg, &run, &mut summary),
        Experiment::ScanBench => run_scan_bench(cfg, &run, &mut summary),
    };
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(f) => f.to_string(),
    };
    summary.set("status", status);
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    summary.set("finished", secs);
    run.write(SUMMARY_FILE, &summary.render())?;
    eprintln!("results in {}", run.path().display());
    result
}

fn master(cfg: &RunConfig) -> RngState {
    RngState::new(cfg.seed)
}

fn train_fresh(cfg: &RunConfig, summary: &mut Summary) -> Outcome<(Model, TrainReport)> {
    let rng = master(cfg);
    let mut model = Model::new(&cfg.model, cfg.task, &mut rng.split(0))?;
    eprintln!(
        "training {} (N = {}) on {} ...",
        model.kind().name(),
        model.hidden(),
        cfg.task.name()
    );
    let report = train(&mut model, &cfg.train, &rng.split(1), Exec::Parallel)?;
    summary
        .set("train_outcome", format!("{:?}", report.outcome))
        .set("train_steps", report.steps)
        .set("train_validation_accuracy", report.validation_accuracy);
    Ok((model, report))
}

/// The model under study: the configured checkpoint, or a freshly trained
/// one (which must converge).
fn obtain_model(cfg: &RunConfig, summary: &mut Summary) -> Outcome<Model> {
    let model = match &cfg.checkpoint {
        Some(p) => {
            summary.set("checkpoint", p.display());
            load_checkpoint(p)?
        }
        None => {
            let (model, report) = train_fresh(cfg, summary)?;
            if !report.converged() {
                return Err(Failure::NotConverged(format!(
                    "validation accuracy {} after {} steps",
                    report.validation_accuracy, report.steps
                )));
            }
            model
        }
    };
    summary
        .set("model", model.kind().name())
        .set("hidden", model.hidden())
        .set("task", model.task().name())
        .set("parameters", model.param_count().total);
    Ok(model)
}

fn experiment_rng(cfg: &RunConfig) -> RngState {
    master(cfg).split(2)
}

fn run_train(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let (model, report) = train_fresh(cfg, summary)?;
    summary
        .set("model", model.kind().name())
        .set("hidden", model.hidden())
        .set("task", model.task().name())
        .set("parameters", model.param_count().total);
    for (item, n) in &model.param_count().items {
        summary.set(&format!("parameters.{item}"), n);
    }
    run.write(CURVE_FILE, &report.log_csv())?;
    let ckpt = run.path().join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    summary.set("checkpoint", ckpt.display());
    if !report.converged() {
        return Err(Failure::NotConverged(format!(
            "reached L = {} with validation accuracy {}",
            report.final_max_len, report.validation_accuracy
        )));
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let model = obtain_model(cfg, summary)?;
    let spec = cfg.sweep.spec();
    let sweep = noise_sweep(&model, &spec, &experiment_rng(cfg), cfg.precision(), Exec::Parallel)?;
    let tc = estimate_tc(&sweep, cfg.sweep.threshold)?;
    run.write(CURVE_FILE, &sweep.csv())?;
    summary
        .set("threshold", tc.threshold)
        .set("tc", format!("{:.6}", tc.tc))
        .set("tc_lo", format!("{:.6}", tc.lo))
        .set("tc_hi", format!("{:.6}", tc.hi))
        .set("censored", tc.censored)
        .set("no_passing_point", tc.none);
    Ok(())
}

fn run_scaling(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let res = finite_size_scan(
        &cfg.scaling.ns,
        &cfg.model,
        cfg.task,
        &cfg.train,
        &cfg.sweep.spec(),
        cfg.sweep.threshold,
        &master(cfg),
        Exec::Parallel,
    )?;
    run.write(CURVE_FILE, &scaling_csv(&res.points()))?;
    summary.set("model", cfg.model.kind.name()).set("threshold", cfg.sweep.threshold);
    for r in &res.runs {
        let n = r.point.n;
        run.write(&format!("sweep_N{n}.csv"), &r.sweep.csv())?;
        summary.set(&format!("N{n}.flagged"), r.point.flagged);
    }
    match &res.fit {
        Some(f) => {
            summary
                .set("alpha", format!("{:.6}", f.alpha))
                .set("beta", format!("{:.6}", f.beta))
                .set("r2", format!("{:.6}", f.r2));
        }
        None => {
            summary.set("fit", "refused: fewer than 3 unflagged points");
        }
    }
    Ok(())
}

fn run_genlen(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let model = obtain_model(cfg, summary)?;
    let rows = length_generalization_eval(
        &model,
        &cfg.genlen.lengths,
        cfg.genlen.episodes,
        cfg.precision(),
        &experiment_rng(cfg),
        Exec::Parallel,
    )?;
    run.write(CURVE_FILE, &genlen_csv(&rows))?;
    let capped: Vec<String> = rows.iter().filter(|r| r.capacity.is_some()).map(|r| r.len.to_string()).collect();
    if !capped.is_empty() {
        summary.set("capacity_exceeded_at", capped.join(" "));
    }
    Ok(())
}

fn run_horizon(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let model = obtain_model(cfg, summary)?;
    let grid = cfg.horizon.grid();
    let rng = experiment_rng(cfg);
    let mut draw = rng.split(0);
    let t_max = *grid.last().expect("validated nonempty");
    let tokens = model.task().sample(&mut draw, t_max).tokens;
    for (i, &method) in cfg.horizon.methods.iter().enumerate() {
        let curve = jacobian_horizon(&model, &tokens, &grid, method, &rng.split(1))?;
        let name = if i == 0 {
            CURVE_FILE.to_string()
        } else {
            format!("curve.{}.csv", method.name())
        };
        run.write(&name, &curve.csv())?;
        let key = method.name();
        if let (Some(l), Some(r2)) = (curve.lambda, curve.r2) {
            summary
                .set(&format!("{key}.lambda"), format!("{l:.6e}"))
                .set(&format!("{key}.r2"), format!("{r2:.6}"));
        }
        let dev = curve.j.iter().map(|j| (j - 1.0).abs()).fold(0.0, f64::max);
        summary.set(&format!("{key}.max_abs_J_minus_1"), format!("{dev:.3e}"));
    }
    Ok(())
}

fn run_massgap(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let model = obtain_model(cfg, summary)?;
    let g = &cfg.geometry;
    let gap = mass_gap(&model, g.per_class, g.len, &experiment_rng(cfg), Exec::Parallel)?;
    let mut csv = String::from("class_a,class_b,angle\n");
    let units: Vec<_> = gap.centroids.iter().map(|c| c.normalized()).collect();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let angle = units[i].dot(&units[j]).clamp(-1.0, 1.0).acos();
            csv.push_str(&format!("{},{},{angle:.12}\n", gap.classes[i], gap.classes[j]));
        }
    }
    run.write(CURVE_FILE, &csv)?;
    summary
        .set("delta", format!("{:.9}", gap.delta))
        .set("classes", gap.classes.len())
        .set("within_spread", format!("{:.3e}", gap.within_spread));
    Ok(())
}

fn run_pca(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let main = obtain_model(cfg, summary)?;
    let mut others = Vec::new();
    for p in &cfg.geometry.checkpoints {
        others.push(load_checkpoint(p)?);
    }
    let mut models = vec![&main];
    models.extend(others.iter());
    let g = &cfg.geometry;
    let panels = pca_snapshot(&models, g.temperature, g.per_class, g.len, &experiment_rng(cfg), Exec::Parallel)?;
    run.write(CURVE_FILE, &pca_csv(&panels))?;
    summary.set("temperature", g.temperature);
    for (i, p) in panels.iter().enumerate() {
        let key = format!("{i}.{}", p.model);
        summary
            .set(
                &format!("{key}.silhouette"),
                p.silhouette.map_or("undefined (single class)".to_string(), |s| format!("{s:.6}")),
            )
            .set(&format!("{key}.within_spread"), format!("{:.3e}", p.within_spread))
            .set(
                &format!("{key}.explained"),
                format!("{:.4} {:.4} {:.4}", p.explained[0], p.explained[1], p.explained[2]),
            );
    }
    Ok(())
}

fn run_scan_bench(cfg: &RunConfig, run: &RunDir, summary: &mut Summary) -> Outcome<()> {
    let b = &cfg.scan_bench;
    let rng = experiment_rng(cfg);
    let table = random_table(b.hidden, b.vocab, &mut rng.split(0))?;
    let mut csv = String::from("mode,N,L,workers,ortho_drift\n");
    let mut draw = rng.split(1);
    for &len in &b.lengths {
        for &mode in &b.modes {
            let workers: &[usize] = if mode == ScanMode::Tree { &b.workers } else { &[1] };
            for &w in workers {
                let row = bench_scan(&table, len, mode, w, &mut draw)?;
                eprintln!("{}", row.csv_line());
                csv.push_str(&format!("{},{},{},{},{:.3e}\n", mode.name(), row.n, len, w, row.ortho_drift));
                // Timings differ between runs, so they stay out of the curve file.
                summary.set(&format!("wall_ms.{}.L{len}.w{w}", mode.name()), format!("{:.3}", row.wall_ms));
            }
        }
    }
    run.write(CURVE_FILE, &csv)?;
    summary.set("hidden", b.hidden).set("vocab", b.vocab);
    Ok(())
}

/// Convenience for tests: the run directory a config writes to.
pub fn run_dir_for(cfg: &RunConfig) -> PathBuf {
    let exp = cfg.experiment.map_or("none", Experiment::name);
    Path::new(&cfg.out).join(exp).join(cfg.run_id())
}
