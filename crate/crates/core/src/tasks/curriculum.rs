use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Grow the maximum length by one each time the current one is mastered.
    Stepwise,
    /// Ramp the maximum length linearly with training progress, then bias
    /// sampling towards the longest length.
    LinearRamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSpec {
    pub schedule: Schedule,
    /// Starting maximum length.
    pub l_min: usize,
    /// Final maximum length.
    pub l_max: usize,
    /// Shortest length ever sampled.
    pub sample_min: usize,
    /// Accuracy needed to advance a stepwise schedule.
    pub gate: f64,
    /// Fraction of training over which the ramp reaches `l_max`.
    pub ramp_fraction: f64,
    /// Probability of sampling exactly `l_max` once the ramp is complete.
    pub terminal_bias: f64,
    /// Stepwise only: probability of sampling exactly the current maximum
    /// length rather than a uniform draw up to it.
    pub frontier_bias: f64,
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        Self::stepwise(1, 5)
    }
}

impl CurriculumSpec {
    pub fn stepwise(l_min: usize, l_max: usize) -> Self {
        Self {
            schedule: Schedule::Stepwise,
            l_min,
            l_max,
            sample_min: 1,
            gate: 1.0,
            ramp_fraction: 0.7,
            terminal_bias: 0.5,
            frontier_bias: 0.5,
        }
    }

    pub fn linear_ramp(l_min: usize, l_max: usize, sample_min: usize) -> Self {
        Self {
            schedule: Schedule::LinearRamp,
            l_min,
            l_max,
            sample_min,
            ..Self::stepwise(l_min, l_max)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ConfigValidation(m));
        if self.l_min < 1 || self.l_min > self.l_max {
            return fail(format!("curriculum needs 1 <= l_min <= l_max, got [{}, {}]", self.l_min, self.l_max));
        }
        if self.sample_min < 1 || self.sample_min > self.l_min {
            return fail(format!("curriculum sample_min {} must lie in [1, l_min]", self.sample_min));
        }
        if [self.gate, self.terminal_bias, self.frontier_bias].iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("curriculum gate, terminal_bias and frontier_bias must lie in [0, 1]".into());
        }
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction <= 1.0) {
            return fail("curriculum ramp_fraction must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Curriculum state: the current maximum training length.
#[derive(Clone, Debug, PartialEq)]
pub struct Curriculum {
    spec: CurriculumSpec,
    current: usize,
    progress: f64,
}

impl Curriculum {
    pub fn new(spec: CurriculumSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            current: spec.l_min,
            spec,
            progress: 0.0,
        })
    }

    pub fn spec(&self) -> &CurriculumSpec {
        &self.spec
    }

    pub fn max_len(&self) -> usize {
        self.current
    }

    pub fn progress(&self) -> f64 {
        self.progress
    }

    /// True once a stepwise schedule has mastered `l_max`, or a ramp has
    /// reached it.
    pub fn at_final_length(&self) -> bool {
        self.current == self.spec.l_max
    }

    /// Stepwise: one length up iff `accuracy` meets the gate. No-op for ramps.
    /// Returns whether the maximum length changed.
    pub fn advance_accuracy(&mut self, accuracy: f64) -> bool {
        if self.spec.schedule == Schedule::Stepwise
            && accuracy >= self.spec.gate
            && self.current < self.spec.l_max
        {
            self.current += 1;
            return true;
        }
        false
    }

    /// Ramp: sets the maximum length from the fraction of training done.
    /// No-op for stepwise schedules.
    pub fn advance_progress(&mut self, progress: f64) {
        if self.spec.schedule != Schedule::LinearRamp {
            return;
        }
        self.progress = progress.clamp(0.0, 1.0);
        let frac = (self.progress / self.spec.ramp_fraction).min(1.0);
        let span = (self.spec.l_max - self.spec.l_min) as f64;
        let target = (self.spec.l_min as f64 + span * frac).round() as usize;
        self.current = self.current.max(target).min(self.spec.l_max);
    }

    /// Draws a training length under the current schedule.
    pub fn sample_length(&self, rng: &mut RngState) -> usize {
        let lo = self.spec.sample_min;
        if self.spec.schedule == Schedule::LinearRamp && self.progress >= self.spec.ramp_fraction {
            if rng.uniform() < self.spec.terminal_bias {
                return self.spec.l_max;
            }
            return rng.range_inclusive(lo, self.spec.l_max);
        }
        if self.spec.schedule == Schedule::Stepwise && rng.uniform() < self.spec.frontier_bias {
            return self.current;
        }
        rng.range_inclusive(lo, self.current)
    }
}
