//! Evaluation of path-ordered operator products `H_L = U_L ⋯ U_1`.
//!
//! Three strategies share one memoized operator table: a sequential fold,
//! a level-synchronous binary tree reduction (the associative form used for
//! parallel prefix evaluation), and a streaming state update whose working
//! memory does not grow with the sequence.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Holonomic;
use crate::par::{map_range, with_workers, Exec};
use crate::tensor::{reorthonormalize, Matrix, RngState, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    Sequential,
    Tree,
    Streaming,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::Sequential => "sequential",
            ScanMode::Tree => "tree",
            ScanMode::Streaming => "streaming",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScanPlan {
    pub mode: ScanMode,
    /// Re-orthonormalize (or renormalize the state) every this many steps.
    pub renorm_every: usize,
}

impl Default for ScanPlan {
    fn default() -> Self {
        Self {
            mode: ScanMode::Sequential,
            renorm_every: 64,
        }
    }
}

impl ScanPlan {
    fn check(&self) -> Result<()> {
        if self.renorm_every == 0 {
            return Err(Error::arg("renormalization interval must be at least 1"));
        }
        Ok(())
    }
}

/// Memoized transition operators, one per vocabulary token.
#[derive(Clone, Debug)]
pub struct OperatorTable {
    ops: Vec<Matrix>,
    n: usize,
}

impl OperatorTable {
    pub fn new(ops: Vec<Matrix>) -> Result<Self> {
        let n = ops.first().map_or(0, Matrix::rows);
        if ops.is_empty() || ops.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::dim("operator table", "operators must be square and share one size"));
        }
        Ok(Self { ops, n })
    }

    pub fn from_model(model: &Holonomic) -> Result<Self> {
        Self::new(model.operators()?)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn vocab(&self) -> usize {
        self.ops.len()
    }

    pub fn get(&self, token: usize) -> Result<&Matrix> {
        self.ops
            .get(token)
            .ok_or_else(|| Error::arg(format!("token {token} outside vocabulary of {}", self.ops.len())))
    }
}

fn nonempty(tokens: &[usize]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::arg("scan needs at least one token"));
    }
    Ok(())
}

/// `U_L ⋯ U_1` folded left to right, re-orthonormalized every `K` steps.
pub fn sequential_holonomy(table: &OperatorTable, tokens: &[usize], plan: &ScanPlan) -> Result<Matrix> {
    plan.check()?;
    nonempty(tokens)?;
    let mut h = table.get(tokens[0])?.clone();
    for (t, &tok) in tokens.iter().enumerate().skip(1) {
        h = table.get(tok)?.matmul(&h)?;
        if (t + 1) % plan.renorm_every == 0 {
            h = reorthonormalize(&h)?;
        }
    }
    Ok(h)
}

/// Product of a contiguous token range, later tokens on the left, with each
/// node of the tree reduction re-orthonormalized.
pub fn tree_scan_holonomy(table: &OperatorTable, tokens: &[usize], plan: &ScanPlan, workers: usize) -> Result<Matrix> {
    tree_scan_with(table, tokens, plan, workers, Exec::Parallel)
}

/// [`tree_scan_holonomy`] with an explicit execution policy.
pub fn tree_scan_with(
    table: &OperatorTable,
    tokens: &[usize],
    plan: &ScanPlan,
    workers: usize,
    exec: Exec,
) -> Result<Matrix> {
    plan.check()?;
    nonempty(tokens)?;
    for &t in tokens {
        table.get(t)?;
    }
    with_workers(workers, || tree_reduce(table, tokens, exec, false))?
}

/// Shared reduction; `swap_once` reverses the operands at the root, which
/// exists only to demonstrate that operand order matters.
fn tree_reduce(table: &OperatorTable, tokens: &[usize], exec: Exec, swap_once: bool) -> Result<Matrix> {
    let mut level: Vec<Matrix> = tokens.iter().map(|&t| table.ops[t].clone()).collect();
    while level.len() > 1 {
        let pairs = level.len() / 2;
        let last_pair = level.len() <= 3;
        let combined = map_range(exec, pairs, |i| -> Result<Matrix> {
            let (earlier, later) = (&level[2 * i], &level[2 * i + 1]);
            let p = if swap_once && last_pair && i == 0 {
                earlier.matmul(later)?
            } else {
                later.matmul(earlier)?
            };
            reorthonormalize(&p)
        });
        let mut next = combined.into_iter().collect::<Result<Vec<_>>>()?;
        if level.len() % 2 == 1 {
            next.push(level.pop().expect("odd level has a last element"));
        }
        level = next;
    }
    Ok(level.pop().expect("nonempty"))
}

/// Tree reduction with the operands of one node reversed.
pub fn tree_scan_swapped(table: &OperatorTable, tokens: &[usize]) -> Result<Matrix> {
    nonempty(tokens)?;
    tree_reduce(table, tokens, Exec::Serial, true)
}

/// Counts the auxiliary scalars a streaming run keeps alive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MemoryMeter {
    current: usize,
    peak: usize,
}

impl MemoryMeter {
    fn alloc(&mut self, scalars: usize) {
        self.current += scalars;
        self.peak = self.peak.max(self.current);
    }

    fn free(&mut self, scalars: usize) {
        self.current -= scalars;
    }

    /// Largest number of scalars held at once.
    pub fn peak(&self) -> usize {
        self.peak
    }
}

#[derive(Clone, Debug)]
pub struct StreamResult {
    pub state: Vector,
    /// Accumulated operator, when requested.
    pub operator: Option<Matrix>,
    pub steps: usize,
}

/// Applies each token's operator to the state as it arrives. The state is
/// renormalized to `‖h0‖` every `K` steps; when `track_operator` is set the
/// running product is kept too (and re-orthonormalized on the same cadence).
pub fn streaming_infer<I>(
    table: &OperatorTable,
    h0: &Vector,
    stream: I,
    plan: &ScanPlan,
    track_operator: bool,
    meter: &mut MemoryMeter,
) -> Result<StreamResult>
where
    I: IntoIterator<Item = usize>,
{
    plan.check()?;
    let n = table.dim();
    if h0.dim() != n {
        return Err(Error::dim("streaming_infer", format!("state of {} for operators of {n}", h0.dim())));
    }
    let norm0 = h0.norm();
    let mut state = h0.as_slice().to_vec();
    let mut scratch = vec![0.0; n];
    meter.alloc(2 * n);
    let mut op = track_operator.then(|| Matrix::identity(n));
    if track_operator {
        meter.alloc(n * n);
    }
    let mut steps = 0;
    for tok in stream {
        let u = table.get(tok)?;
        for (i, s) in scratch.iter_mut().enumerate() {
            *s = crate::tensor::dot(u.row(i), &state);
        }
        std::mem::swap(&mut state, &mut scratch);
        if let Some(h) = op.as_mut() {
            *h = u.matmul(h)?;
        }
        steps += 1;
        if steps % plan.renorm_every == 0 {
            let cur = crate::tensor::dot(&state, &state).sqrt();
            if cur > 0.0 {
                let s = norm0 / cur;
                state.iter_mut().for_each(|v| *v *= s);
            }
            if let Some(h) = op.as_mut() {
                *h = reorthonormalize(h)?;
            }
        }
    }
    meter.free(2 * n);
    if track_operator {
        meter.free(n * n);
    }
    if steps == 0 {
        return Err(Error::arg("streaming inference needs at least one token"));
    }
    Ok(StreamResult {
        state: Vector::from_vec(state),
        operator: op,
        steps,
    })
}

/// One benchmark row: `mode,N,L,workers,wall_ms,ortho_drift`.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: ScanMode,
    pub n: usize,
    pub len: usize,
    pub workers: usize,
    pub wall_ms: f64,
    pub ortho_drift: f64,
}

impl BenchRow {
    pub const HEADER: &'static str = "mode,N,L,workers,wall_ms,ortho_drift";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.3e}",
            self.mode.name(),
            self.n,
            self.len,
            self.workers,
            self.wall_ms,
            self.ortho_drift
        )
    }
}

/// Random skew generators of size `n` for `vocab` tokens.
pub fn random_table(n: usize, vocab: usize, rng: &mut RngState) -> Result<OperatorTable> {
    let ops = (0..vocab)
        .map(|_| {
            let m = rng.gaussian_matrix(n, n, 1.0 / (n as f64).sqrt());
            crate::tensor::mat_exp(&crate::tensor::skew(&m)?)
        })
        .collect::<Result<Vec<_>>>()?;
    OperatorTable::new(ops)
}

/// Times one scan of `len` random tokens.
pub fn bench_scan(table: &OperatorTable, len: usize, mode: ScanMode, workers: usize, rng: &mut RngState) -> Result<BenchRow> {
    let tokens: Vec<usize> = (0..len).map(|_| rng.below(table.vocab())).collect();
    let plan = ScanPlan {
        mode,
        ..ScanPlan::default()
    };
    let start = Instant::now();
    let h = match mode {
        ScanMode::Sequential => sequential_holonomy(table, &tokens, &plan)?,
        ScanMode::Tree => tree_scan_holonomy(table, &tokens, &plan, workers)?,
        ScanMode::Streaming => {
            let h0 = Vector::basis(table.dim(), 0);
            let mut meter = MemoryMeter::default();
            streaming_infer(table, &h0, tokens.iter().copied(), &plan, true, &mut meter)?
                .operator
                .expect("operator tracked")
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(BenchRow {
        mode,
        n: table.dim(),
        len,
        workers,
        wall_ms,
        ortho_drift: h.orthogonality_defect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token_is_its_operator() {
        let mut rng = RngState::new(3);
        let table = random_table(6, 3, &mut rng).unwrap();
        let plan = ScanPlan::default();
        let seq = sequential_holonomy(&table, &[2], &plan).unwrap();
        assert_eq!(&seq, table.get(2).unwrap());
        let tree = tree_scan_holonomy(&table, &[2], &plan, 1).unwrap();
        assert_eq!(seq, tree);
    }

    #[test]
    fn empty_and_bad_tokens_rejected() {
        let table = random_table(4, 2, &mut RngState::new(1)).unwrap();
        let plan = ScanPlan::default();
        assert!(sequential_holonomy(&table, &[], &plan).is_err());
        assert!(tree_scan_holonomy(&table, &[0, 5], &plan, 1).is_err());
        let bad = ScanPlan {
            renorm_every: 0,
            ..plan
        };
        assert!(sequential_holonomy(&table, &[0], &bad).is_err());
    }
}
