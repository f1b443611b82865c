//! Accuracy at sequence lengths beyond the training range.

use super::eval::{predict, sample_episodes};
use crate::autodiff::Precision;
use crate::error::{Error, Result};
use crate::models::{argmax_rows, Model, NoiseConfig, Positional};
use crate::par::{map_slice, Exec};
use crate::scan::{streaming_infer, MemoryMeter, OperatorTable, ScanPlan};
use crate::tasks::Episode;
use crate::tensor::{Matrix, RngState};

/// Longest length allowed in 32-bit mode.
pub const F32_MAX_LEN: usize = 50;

/// Extrapolation lengths used when none are configured.
pub const DEFAULT_LENGTHS: [usize; 7] = [50, 100, 200, 500, 1000, 2000, 5000];

#[derive(Clone, Debug, PartialEq)]
pub struct GenLenRow {
    pub len: usize,
    /// `None` when the model cannot represent this length.
    pub accuracy: Option<f64>,
    pub episodes: usize,
    pub precision: Precision,
    /// Positional table size that `len` exceeded.
    pub capacity: Option<usize>,
}

/// `L,acc,episodes,precision` rows; capacity records leave `acc` empty.
pub fn genlen_csv(rows: &[GenLenRow]) -> String {
    let mut s = String::from("L,acc,episodes,precision\n");
    for r in rows {
        let acc = r.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", r.len, acc, r.episodes, r.precision.bits()));
    }
    s
}

fn holonomic_streaming(model: &Model, episodes: &[Episode], exec: Exec) -> Result<Vec<usize>> {
    let Model::Holonomic(h) = model else {
        unreachable!("caller checked the architecture")
    };
    let table = OperatorTable::from_model(h)?;
    let h0 = h.h0();
    let plan = ScanPlan::default();
    map_slice(exec, episodes, |e| -> Result<usize> {
        let mut meter = MemoryMeter::default();
        let res = streaming_infer(&table, &h0, e.tokens.iter().copied(), &plan, false, &mut meter)?;
        let w = h.readout(e.readout());
        let logits: Vec<f64> = (0..w.rows()).map(|c| crate::tensor::dot(w.row(c), res.state.as_slice())).collect();
        Ok(argmax_rows(&Matrix::row_vector(&logits))[0])
    })
    .into_iter()
    .collect()
}

/// Noise-free accuracy at each length over `episodes` fresh sequences.
/// Episodes for length index `k` come from `rng.split(k)`.
pub fn length_generalization_eval(
    model: &Model,
    lengths: &[usize],
    episodes: usize,
    precision: Precision,
    rng: &RngState,
    exec: Exec,
) -> Result<Vec<GenLenRow>> {
    if episodes == 0 {
        return Err(Error::arg("length generalization needs at least one episode per length"));
    }
    if precision == Precision::F32 {
        if let Some(&l) = lengths.iter().find(|&&l| l > F32_MAX_LEN) {
            return Err(Error::arg(format!(
                "length {l} requires 64-bit inference (32-bit is limited to L <= {F32_MAX_LEN})"
            )));
        }
    }
    let task = model.task();
    let mut rows = Vec::with_capacity(lengths.len());
    for (k, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::arg("lengths must be positive"));
        }
        if let Model::Transformer(t) = model {
            let d = t.dims();
            if d.positional == Positional::Learned && len > d.max_len {
                rows.push(GenLenRow {
                    len,
                    accuracy: None,
                    episodes: 0,
                    precision,
                    capacity: Some(d.max_len),
                });
                continue;
            }
        }
        let eps = sample_episodes(&task, &rng.split(k as u64), len, episodes);
        let predicted = match model {
            Model::Holonomic(_) if precision == Precision::F64 => holonomic_streaming(model, &eps, exec)?,
            _ => predict(model, &eps, &NoiseConfig::off(), &RngState::new(0), precision, exec, false)?.predicted,
        };
        let hits = predicted.iter().zip(&eps).filter(|(p, e)| **p == e.target).count();
        rows.push(GenLenRow {
            len,
            accuracy: Some(hits as f64 / episodes as f64),
            episodes,
            precision,
            capacity: None,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_rows_leave_accuracy_blank() {
        let rows = vec![
            GenLenRow {
                len: 10,
                accuracy: Some(1.0),
                episodes: 4,
                precision: Precision::F64,
                capacity: None,
            },
            GenLenRow {
                len: 100,
                accuracy: None,
                episodes: 0,
                precision: Precision::F64,
                capacity: Some(64),
            },
        ];
        assert_eq!(genlen_csv(&rows), "L,acc,episodes,precision\n10,1.000000,4,64\n100,,0,64\n");
    }
}
