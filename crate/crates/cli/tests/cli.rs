use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn holonet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holonet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The single run directory under `<out>/<experiment>/`.
fn only_run(out: &Path, experiment: &str) -> PathBuf {
    let mut runs: Vec<PathBuf> = fs::read_dir(out.join(experiment))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs.pop().unwrap()
}

const SMALL_HOLO: &str = r#"
seed = 3
out = "out"

[model]
kind = "holonomic"
hidden = 8

[train]
max_steps = 4000
"#;

fn trained_checkpoint(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "train.toml", SMALL_HOLO);
    let o = holonet(dir, &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    only_run(&dir.join("out"), "train").join("model.ckpt")
}

#[test]
fn verify_passes_on_a_fresh_build() {
    let dir = TempDir::new().unwrap();
    let o = holonet(dir.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn missing_checkpoint_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let o = holonet(dir.path(), &["sweep", "--checkpoint", "no/such/model.ckpt", "--out", "out"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn parse_errors_report_position_and_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "seed = 1\n\n[model]\nhiden = 32\n");
    let o = holonet(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4, column 1"), "{}", stderr(&o));

    let empty = write_config(dir.path(), "empty.toml", "");
    let o = holonet(dir.path(), &["train", "--config", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn binding_with_too_few_dimensions_is_rejected_before_compute() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        "out = \"out\"\n[task]\nkind = \"binding\"\nvars = 10\n[model]\nkind = \"holonomic\"\nhidden = 8\n",
    );
    let o = holonet(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("N >= V"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn single_precision_long_sequences_are_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "g.toml", "[genlen]\nlengths = [100]\n");
    let o = holonet(
        dir.path(),
        &["genlen", "--config", cfg.to_str().unwrap(), "--precision", "32", "--out", "out"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn exhausted_budget_exits_4_but_keeps_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "t.toml", "out = \"out\"\n[model]\nhidden = 8\n[train]\nmax_steps = 3\n");
    let o = holonet(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let run = only_run(&dir.path().join("out"), "train");
    assert!(run.join("model.ckpt").exists());
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(summary.contains("train_outcome = BudgetExhausted"), "{summary}");
}

#[test]
fn train_then_evaluate_pipelines() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let ckpt = trained_checkpoint(d);
    let train_run = ckpt.parent().unwrap();
    let snapshot = fs::read_to_string(train_run.join("config.snapshot")).unwrap();
    assert!(snapshot.contains("experiment = \"train\""));
    let log = fs::read_to_string(train_run.join("curve.csv")).unwrap();
    assert!(log.starts_with("step,l_max,loss,acc\n"));
    let ck = ckpt.to_str().unwrap();

    let sweep = write_config(
        d,
        "sweep.toml",
        "out = \"out\"\n[sweep]\nt_max = 0.5\npoints = 3\nepisodes = 64\nresamples = 50\n",
    );
    let sw = sweep.to_str().unwrap();
    let o = holonet(d, &["sweep", "--config", sw, "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run(&d.join("out"), "sweep");
    let curve = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert!(curve.starts_with("T,acc_mean,acc_lo,acc_hi,episodes\n"), "{curve}");
    assert_eq!(curve.lines().count(), 4);
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(summary.contains("tc = "));

    // Same config and seed: the curve is byte-identical.
    fs::remove_dir_all(&run).unwrap();
    let o = holonet(d, &["sweep", "--config", sw, "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(run.join("curve.csv")).unwrap(), curve);

    // The snapshot alone replays the run.
    let replay = d.join("replay");
    let o = holonet(
        d,
        &["sweep", "--config", run.join("config.snapshot").to_str().unwrap(), "--out", replay.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let again = only_run(&replay, "sweep");
    assert_eq!(fs::read_to_string(again.join("curve.csv")).unwrap(), curve);

    let gl = write_config(d, "gl.toml", "out = \"out\"\n[genlen]\nlengths = [3, 5]\nepisodes = 256\n");
    let o = holonet(d, &["genlen", "--config", gl.to_str().unwrap(), "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curve = fs::read_to_string(only_run(&d.join("out"), "genlen").join("curve.csv")).unwrap();
    assert!(curve.starts_with("L,acc,episodes,precision\n"));
    for row in curve.lines().skip(1) {
        assert_eq!(row.split(',').nth(1), Some("1.000000"), "{curve}");
    }

    let hz = write_config(d, "h.toml", "out = \"out\"\n[horizon]\nt_max = 200\n");
    let o = holonet(d, &["horizon", "--config", hz.to_str().unwrap(), "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run(&d.join("out"), "horizon");
    let curve = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert!(curve.starts_with("t,J\n"));
    for row in curve.lines().skip(1) {
        let j: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((j - 1.0).abs() < 1e-6, "{row}");
    }

    let geo = write_config(d, "m.toml", "out = \"out\"\n[geometry]\nper_class = 20\n");
    let o = holonet(d, &["massgap", "--config", geo.to_str().unwrap(), "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(only_run(&d.join("out"), "massgap").join("summary.txt")).unwrap();
    assert!(summary.contains("delta = "), "{summary}");

    let o = holonet(d, &["pca", "--config", geo.to_str().unwrap(), "--checkpoint", ck]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curve = fs::read_to_string(only_run(&d.join("out"), "pca").join("curve.csv")).unwrap();
    assert!(curve.starts_with("model,class,pc1,pc2,pc3\n"));
    assert_eq!(curve.lines().count(), 1 + 6 * 20);

    let o = holonet(d, &["report", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = String::from_utf8(o.stdout).unwrap();
    for section in ["## train", "## sweep", "## genlen", "## horizon", "## massgap", "## pca"] {
        assert!(md.contains(section), "{md}");
    }
}

#[test]
fn scan_bench_writes_deterministic_curve() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "out = \"out\"\n[scan_bench]\nhidden = 8\nlengths = [256]\nworkers = [1, 2]\n",
    );
    let o = holonet(dir.path(), &["scan-bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run(&dir.path().join("out"), "scan-bench");
    let curve = fs::read_to_string(run.join("curve.csv")).unwrap();
    assert!(curve.starts_with("mode,N,L,workers,ortho_drift\n"));
    assert_eq!(curve.lines().count(), 1 + 4);
    let summary = fs::read_to_string(run.join("summary.txt")).unwrap();
    assert!(summary.contains("wall_ms.tree.L256.w2"));
}

#[test]
fn conflicting_experiment_in_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"sweep\"\n");
    let o = holonet(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
