//! Batched, parallel evaluation over episode lists.

use crate::autodiff::Precision;
use crate::error::Result;
use crate::models::{Model, NoiseConfig};
use crate::par::{map_slice, Exec};
use crate::tasks::{Episode, Task};
use crate::tensor::{Matrix, RngState};

/// Episodes per evaluation batch.
const CHUNK: usize = 128;

/// Predictions (and optionally final states) for `episodes`, in input order.
#[derive(Clone, Debug)]
pub struct Predictions {
    pub predicted: Vec<usize>,
    pub states: Option<Matrix>,
}

impl Predictions {
    pub fn correct(&self, episodes: &[Episode]) -> Vec<bool> {
        self.predicted
            .iter()
            .zip(episodes)
            .map(|(p, e)| *p == e.target)
            .collect()
    }

    pub fn accuracy(&self, episodes: &[Episode]) -> f64 {
        if episodes.is_empty() {
            return 0.0;
        }
        self.correct(episodes).iter().filter(|&&c| c).count() as f64 / episodes.len() as f64
    }
}

/// Evaluates every episode. Episode `i` draws its noise from
/// `noise_root.split(i)`, so results do not depend on batching or threads.
pub fn predict(
    model: &Model,
    episodes: &[Episode],
    noise: &NoiseConfig,
    noise_root: &RngState,
    precision: Precision,
    exec: Exec,
    keep_states: bool,
) -> Result<Predictions> {
    // Group indices by length, then cut each group into fixed-size chunks.
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by_key(|&i| episodes[i].len());
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match chunks.last_mut() {
            Some(c) if c.len() < CHUNK && episodes[c[0]].len() == episodes[i].len() => c.push(i),
            _ => chunks.push(vec![i]),
        }
    }
    let results = map_slice(exec, &chunks, |idx| -> Result<_> {
        let batch: Vec<Episode> = idx.iter().map(|&i| episodes[i].clone()).collect();
        let mut rngs: Vec<RngState> = idx.iter().map(|&i| noise_root.split(i as u64)).collect();
        model.evaluate(&batch, noise, &mut rngs, precision)
    });
    let hidden = model.hidden();
    let mut predicted = vec![0; episodes.len()];
    let mut states = keep_states.then(|| Matrix::zeros(episodes.len(), hidden));
    for (idx, res) in chunks.iter().zip(results) {
        let ev = res?;
        for (k, (&i, p)) in idx.iter().zip(ev.predictions()).enumerate() {
            predicted[i] = p;
            if let Some(s) = states.as_mut() {
                s.row_mut(i).copy_from_slice(ev.states.row(k));
            }
        }
    }
    Ok(Predictions { predicted, states })
}

/// Every S₃ sequence of length `len`, in lexicographic token order.
pub fn all_s3_episodes(len: usize) -> Vec<Episode> {
    let count = 6usize.pow(len as u32);
    (0..count)
        .map(|mut code| {
            let mut tokens = vec![0; len];
            for t in tokens.iter_mut().rev() {
                *t = code % 6;
                code /= 6;
            }
            let target = Task::S3.target(&tokens, None).expect("valid tokens");
            Episode {
                tokens,
                query: None,
                target,
            }
        })
        .collect()
}

/// `count` fresh episodes of length `len` from stream `rng`.
pub fn sample_episodes(task: &Task, rng: &RngState, len: usize, count: usize) -> Vec<Episode> {
    let mut r = rng.clone();
    (0..count).map(|_| task.sample(&mut r, len)).collect()
}
