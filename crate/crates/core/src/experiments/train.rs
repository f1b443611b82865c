//! Curriculum training loop shared by all architectures.

use serde::{Deserialize, Serialize};

use super::eval::{all_s3_episodes, predict, sample_episodes};
use crate::autodiff::{AdamConfig, ParamStore, Precision};
use crate::error::{Error, Result};
use crate::models::{LossGrad, Model, NoiseConfig};
use crate::par::{map_slice, Exec};
use crate::tasks::{Curriculum, CurriculumSpec, Episode, Schedule, Task};
use crate::tensor::RngState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub batch_size: usize,
    /// Optimizer step budget.
    pub max_steps: usize,
    pub adam: AdamConfig,
    /// Cosine-decay the learning rate to this value over `max_steps`.
    pub lr_final: Option<f64>,
    pub curriculum: CurriculumSpec,
    /// Set from the run-level precision, never from the `[train]` table.
    #[serde(skip)]
    pub precision: Precision,
    /// Minimum steps between two gate validations.
    pub check_every: usize,
    /// Consecutive perfect training batches that trigger a gate validation.
    pub perfect_streak: usize,
    /// Validate exhaustively when the task has at most this many sequences
    /// of the current length; otherwise sample `validation_episodes`.
    pub exhaustive_limit: usize,
    pub validation_episodes: usize,
    /// Sampled episodes that must all pass before a full gate validation
    /// runs (0 disables the pre-screen).
    pub prescreen_episodes: usize,
    /// Final validation accuracy required to call a ramp run converged.
    pub target_accuracy: f64,
    /// Splits each batch into this many independently recorded pieces whose
    /// gradients are summed in order.
    pub grad_chunks: usize,
    pub log_every: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_steps: 20_000,
            adam: AdamConfig::default(),
            lr_final: None,
            curriculum: CurriculumSpec::default(),
            precision: Precision::F64,
            check_every: 25,
            perfect_streak: 10,
            exhaustive_limit: 7776,
            validation_episodes: 2048,
            prescreen_episodes: 256,
            target_accuracy: 0.999,
            grad_chunks: 1,
            log_every: 10,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::ConfigValidation(m.into()));
        if self.batch_size == 0 || self.max_steps == 0 {
            return fail("training needs batch_size >= 1 and max_steps >= 1");
        }
        if self.grad_chunks == 0 || self.grad_chunks > self.batch_size {
            return fail("grad_chunks must lie in [1, batch_size]");
        }
        if !(self.adam.lr > 0.0) {
            return fail("learning rate must be positive");
        }
        if self.check_every == 0 || self.log_every == 0 || self.validation_episodes == 0 {
            return fail("check_every, log_every and validation_episodes must be positive");
        }
        self.curriculum.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainOutcome {
    Converged,
    /// Budget ran out; the model holds the best parameters seen.
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub max_len: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub steps: usize,
    pub final_max_len: usize,
    /// Accuracy of the last validation run.
    pub validation_accuracy: f64,
    pub log: Vec<LogEntry>,
}

impl TrainReport {
    pub fn converged(&self) -> bool {
        self.outcome == TrainOutcome::Converged
    }

    /// `step,l_max,loss,acc` rows.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("step,l_max,loss,acc\n");
        for e in &self.log {
            s.push_str(&format!("{},{},{:.9},{:.6}\n", e.step, e.max_len, e.loss, e.accuracy));
        }
        s
    }
}

fn batch_step(model: &Model, batch: &[Episode], spec: &TrainSpec, exec: Exec) -> Result<LossGrad> {
    if spec.grad_chunks == 1 {
        return model.loss_and_grad(batch, spec.precision);
    }
    let size = batch.len().div_ceil(spec.grad_chunks);
    let pieces: Vec<&[Episode]> = batch.chunks(size).collect();
    let parts = map_slice(exec, &pieces, |p| model.loss_and_grad(p, spec.precision));
    let mut total: Option<LossGrad> = None;
    for (piece, part) in pieces.iter().zip(parts) {
        let part = part?;
        let w = piece.len() as f64 / batch.len() as f64;
        match total.as_mut() {
            None => {
                let grads = part.grads.iter().map(|g| g.scale(w)).collect();
                total = Some(LossGrad {
                    loss: part.loss * w,
                    correct: part.correct,
                    grads,
                });
            }
            Some(t) => {
                t.loss += part.loss * w;
                t.correct += part.correct;
                for (a, g) in t.grads.iter_mut().zip(&part.grads) {
                    a.axpy(w, g);
                }
            }
        }
    }
    Ok(total.expect("at least one piece"))
}

fn validation_set(task: &Task, len: usize, spec: &TrainSpec, rng: &RngState) -> Vec<Episode> {
    if *task == Task::S3 && 6f64.powi(len as i32) <= spec.exhaustive_limit as f64 {
        all_s3_episodes(len)
    } else {
        sample_episodes(task, rng, len, spec.validation_episodes)
    }
}

fn accuracy(model: &Model, episodes: &[Episode], spec: &TrainSpec, exec: Exec) -> Result<f64> {
    let preds = predict(
        model,
        episodes,
        &NoiseConfig::off(),
        &RngState::new(0),
        spec.precision,
        exec,
        false,
    )?;
    Ok(preds.accuracy(episodes))
}

/// Trains `model` in place. Randomness flows from `rng` only.
pub fn train(model: &mut Model, spec: &TrainSpec, rng: &RngState, exec: Exec) -> Result<TrainReport> {
    spec.validate()?;
    let task = model.task();
    let mut curriculum = Curriculum::new(spec.curriculum.clone())?;
    let mut data_rng = rng.split(1);
    let val_root = rng.split(2);
    let mut log = Vec::new();
    let mut streak = 0;
    let mut last_check = 0;
    let mut checks = 0u64;
    let mut validation_accuracy = 0.0;
    let mut best: Option<((usize, f64), ParamStore)> = None;
    let base_lr = spec.adam.lr;

    for step in 0..spec.max_steps {
        if spec.curriculum.schedule == Schedule::LinearRamp {
            curriculum.advance_progress(step as f64 / spec.max_steps as f64);
        }
        let len = curriculum.sample_length(&mut data_rng);
        let batch: Vec<Episode> = (0..spec.batch_size).map(|_| task.sample(&mut data_rng, len)).collect();
        let mut res = batch_step(model, &batch, spec, exec)?;
        let mut adam = spec.adam;
        if let Some(lr_final) = spec.lr_final {
            let phase = std::f64::consts::PI * step as f64 / spec.max_steps as f64;
            adam.lr = lr_final + 0.5 * (base_lr - lr_final) * (1.0 + phase.cos());
        }
        model.params_mut().adam_step(&mut res.grads, &adam)?;
        model.project();

        let batch_acc = res.correct as f64 / batch.len() as f64;
        if step % spec.log_every == 0 {
            log.push(LogEntry {
                step,
                max_len: curriculum.max_len(),
                loss: res.loss,
                accuracy: batch_acc,
            });
        }
        if spec.curriculum.schedule != Schedule::Stepwise {
            continue;
        }
        streak = if res.correct == batch.len() { streak + 1 } else { 0 };
        if streak < spec.perfect_streak || step + 1 - last_check < spec.check_every {
            continue;
        }
        last_check = step + 1;
        checks += 1;
        let cur = curriculum.max_len();
        let lengths: Vec<usize> = if curriculum.at_final_length() {
            (1..=cur).collect()
        } else {
            vec![cur]
        };
        let mut acc = 1.0f64;
        if spec.prescreen_episodes > 0 {
            let screen = sample_episodes(&task, &val_root.split_path(&[checks, 0]), cur, spec.prescreen_episodes);
            acc = accuracy(model, &screen, spec, exec)?;
        }
        if acc >= spec.curriculum.gate {
            for &l in &lengths {
                let episodes = validation_set(&task, l, spec, &val_root.split_path(&[checks, l as u64]));
                acc = acc.min(accuracy(model, &episodes, spec, exec)?);
            }
        }
        validation_accuracy = acc;
        let score = (cur, acc);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.params().clone()));
        }
        if acc >= spec.curriculum.gate {
            if curriculum.at_final_length() {
                return Ok(TrainReport {
                    outcome: TrainOutcome::Converged,
                    steps: step + 1,
                    final_max_len: cur,
                    validation_accuracy,
                    log,
                });
            }
            curriculum.advance_accuracy(acc);
            streak = 0;
        }
    }

    let final_max_len = curriculum.max_len();
    if spec.curriculum.schedule == Schedule::LinearRamp {
        let lo = spec.curriculum.sample_min;
        let hi = spec.curriculum.l_max;
        let mut vr = val_root.split(u64::MAX);
        let episodes: Vec<Episode> = (0..spec.validation_episodes)
            .map(|_| {
                let l = vr.range_inclusive(lo, hi);
                task.sample(&mut vr, l)
            })
            .collect();
        validation_accuracy = accuracy(model, &episodes, spec, exec)?;
        let outcome = if validation_accuracy >= spec.target_accuracy {
            TrainOutcome::Converged
        } else {
            TrainOutcome::BudgetExhausted
        };
        return Ok(TrainReport {
            outcome,
            steps: spec.max_steps,
            final_max_len,
            validation_accuracy,
            log,
        });
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(TrainReport {
        outcome: TrainOutcome::BudgetExhausted,
        steps: spec.max_steps,
        final_max_len,
        validation_accuracy,
        log,
    })
}
