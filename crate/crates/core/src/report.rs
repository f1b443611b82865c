//! Result directories (`<out>/<experiment>/<run-id>/`) and cross-run reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// One run's output directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn create(out: &Path, experiment: &str, run_id: &str) -> Result<Self> {
        let path = out.join(experiment).join(run_id);
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path.join(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}

/// `key = value` lines; later duplicates win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let mut s = Self::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                s.set(k.trim(), v.trim());
            }
        }
        s
    }
}

/// A run found on disk.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub experiment: String,
    pub run_id: String,
    pub summary: Summary,
    pub curve: Option<String>,
}

/// Every `<root>/<experiment>/<run-id>/summary.txt`, sorted by path.
pub fn scan_results(root: &Path) -> Result<Vec<StoredRun>> {
    let mut runs = Vec::new();
    let read_dir = |p: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| Error::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        v.sort();
        Ok(v)
    };
    for exp in read_dir(root)? {
        for run in read_dir(&exp)? {
            let summary_path = run.join(SUMMARY_FILE);
            let Ok(text) = fs::read_to_string(&summary_path) else {
                continue;
            };
            let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            runs.push(StoredRun {
                experiment: name(&exp),
                run_id: name(&run),
                summary: Summary::parse(&text),
                curve: fs::read_to_string(run.join(CURVE_FILE)).ok(),
            });
        }
    }
    Ok(runs)
}

fn parse_sweep(curve: &str) -> BTreeMap<String, f64> {
    curve
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split(',');
            let t = f.next()?.to_string();
            let acc = f.next()?.parse().ok()?;
            Some((t, acc))
        })
        .collect()
}

/// Markdown summary of every run under `root`, with sweep curves placed
/// side by side.
pub fn render_report(root: &Path) -> Result<String> {
    let runs = scan_results(root)?;
    let mut out = format!("# Results under {}\n\n", root.display());
    if runs.is_empty() {
        out.push_str("No runs found.\n");
        return Ok(out);
    }
    let mut by_exp: BTreeMap<&str, Vec<&StoredRun>> = BTreeMap::new();
    for r in &runs {
        by_exp.entry(&r.experiment).or_default().push(r);
    }
    for (exp, list) in &by_exp {
        out.push_str(&format!("## {exp}\n\n"));
        let mut keys: Vec<&str> = Vec::new();
        for r in list {
            for (k, _) in &r.summary.entries {
                if k != "finished" && !keys.contains(&k.as_str()) {
                    keys.push(k);
                }
            }
        }
        out.push_str(&format!("| run | {} |\n", keys.join(" | ")));
        out.push_str(&format!("|---|{}\n", "---|".repeat(keys.len())));
        for r in list {
            let cells: Vec<&str> = keys.iter().map(|k| r.summary.get(k).unwrap_or("")).collect();
            out.push_str(&format!("| {} | {} |\n", r.run_id, cells.join(" | ")));
        }
        out.push('\n');
        if *exp == "sweep" {
            let curves: Vec<(String, BTreeMap<String, f64>)> = list
                .iter()
                .filter_map(|r| {
                    let label = format!("{} ({})", r.summary.get("model").unwrap_or("?"), r.run_id);
                    r.curve.as_deref().map(|c| (label, parse_sweep(c)))
                })
                .collect();
            let mut temps: Vec<(f64, String)> = curves
                .iter()
                .flat_map(|(_, c)| c.keys().map(|t| (t.parse().unwrap_or(f64::NAN), t.clone())))
                .collect();
            temps.sort_by(|a, b| a.0.total_cmp(&b.0));
            temps.dedup_by(|a, b| a.1 == b.1);
            if !curves.is_empty() {
                let labels: Vec<&str> = curves.iter().map(|(l, _)| l.as_str()).collect();
                out.push_str(&format!("| T | {} |\n", labels.join(" | ")));
                out.push_str(&format!("|---|{}\n", "---|".repeat(labels.len())));
                for (_, t) in &temps {
                    let cells: Vec<String> = curves
                        .iter()
                        .map(|(_, c)| c.get(t).map(|a| format!("{a:.4}")).unwrap_or_default())
                        .collect();
                    out.push_str(&format!("| {t} | {} |\n", cells.join(" | ")));
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip_keeps_order_and_overrides() {
        let mut s = Summary::new();
        s.set("model", "holonomic").set("tc", 0.5).set("model", "rnn");
        let text = s.render();
        assert_eq!(text, "model = rnn\ntc = 0.5\n");
        assert_eq!(Summary::parse(&text), s);
    }

    #[test]
    fn report_lists_runs_and_sweeps() {
        let dir = tempfile::tempdir().unwrap();
        for (id, model, acc) in [("a", "holonomic", "1.0"), ("b", "rnn", "0.5")] {
            let run = RunDir::create(dir.path(), "sweep", id).unwrap();
            run.write(SUMMARY_FILE, &format!("model = {model}\nfinished = 1\n")).unwrap();
            run.write(CURVE_FILE, &format!("T,acc_mean,acc_lo,acc_hi,episodes\n0.000000,{acc},1,1,4\n"))
                .unwrap();
        }
        let md = render_report(dir.path()).unwrap();
        assert!(md.contains("## sweep"));
        assert!(md.contains("| 0.000000 | 1.0000 | 0.5000 |"), "{md}");
        assert!(!md.contains("finished"));
    }
}
