use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::perm::{s3_elements, s3_index, Perm};
use crate::error::{Error, Result};
use crate::tensor::RngState;

/// One task instance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Episode {
    pub tokens: Vec<usize>,
    /// Variable whose final value is asked for (binding task only).
    pub query: Option<usize>,
    pub target: usize,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Readout index: the query, or 0 for tasks without one.
    pub fn readout(&self) -> usize {
        self.query.unwrap_or(0)
    }
}

/// `L;tok,tok,...;query;target` with an empty query field when absent.
impl fmt::Display for Episode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};", self.tokens.len())?;
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(";")?;
        if let Some(q) = self.query {
            write!(f, "{q}")?;
        }
        write!(f, ";{}", self.target)
    }
}

impl FromStr for Episode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::arg(format!("malformed episode line {s:?}: {what}"));
        let fields: Vec<&str> = s.trim().split(';').collect();
        let [len, toks, query, target] = fields[..] else {
            return Err(bad("expected 4 fields"));
        };
        let len: usize = len.parse().map_err(|_| bad("length"))?;
        let tokens = toks
            .split(',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<usize>().map_err(|_| bad("token")))
            .collect::<Result<Vec<_>>>()?;
        if tokens.len() != len {
            return Err(bad("length field disagrees with token count"));
        }
        let query = if query.is_empty() {
            None
        } else {
            Some(query.parse().map_err(|_| bad("query"))?)
        };
        let target = target.parse().map_err(|_| bad("target"))?;
        Ok(Episode { tokens, query, target })
    }
}

/// Which synthetic task to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Task {
    /// Path integration over S₃: 6 tokens, 6 classes.
    S3,
    /// SWAP variable binding over `vars` variables.
    Binding { vars: usize },
}

impl Task {
    pub fn binding(vars: usize) -> Result<Self> {
        if vars < 2 {
            return Err(Error::arg(format!("binding task needs at least 2 variables, got {vars}")));
        }
        Ok(Task::Binding { vars })
    }

    pub fn vocab_size(&self) -> usize {
        match *self {
            Task::S3 => 6,
            Task::Binding { vars } => vars * (vars - 1) / 2,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Task::S3 => 6,
            Task::Binding { vars } => vars,
        }
    }

    /// Number of distinct readout queries (1 when the task has none).
    pub fn queries(&self) -> usize {
        match *self {
            Task::S3 => 1,
            Task::Binding { vars } => vars,
        }
    }

    pub fn has_query(&self) -> bool {
        matches!(self, Task::Binding { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::S3 => "s3",
            Task::Binding { .. } => "binding",
        }
    }

    /// The permutation a token stands for.
    pub fn token_perm(&self, token: usize) -> Result<Perm> {
        if token >= self.vocab_size() {
            return Err(Error::arg(format!(
                "token {token} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        Ok(match *self {
            Task::S3 => s3_elements()[token].clone(),
            Task::Binding { vars } => {
                let (i, j) = swap_pair(vars, token);
                Perm::transposition(vars, i, j)
            }
        })
    }

    pub fn sample(&self, rng: &mut RngState, len: usize) -> Episode {
        match *self {
            Task::S3 => s3_sample_episode(rng, len),
            Task::Binding { vars } => sv_sample_episode(rng, vars, len),
        }
    }

    /// Ground truth for `tokens` (and `query`) via permutation composition.
    pub fn target(&self, tokens: &[usize], query: Option<usize>) -> Result<usize> {
        match *self {
            Task::S3 => {
                let mut acc = Perm::identity(3);
                for &t in tokens {
                    acc = self.token_perm(t)?.compose(&acc)?;
                }
                Ok(s3_index(&acc).expect("S3 product stays in S3"))
            }
            Task::Binding { vars } => {
                let q = query.ok_or_else(|| Error::arg("binding episode needs a query"))?;
                if q >= vars {
                    return Err(Error::arg(format!("query {q} outside {vars} variables")));
                }
                // Swapping values of slots i and j maps values to values∘τ,
                // so the final value of q is τ_1(τ_2(…τ_L(q))).
                let mut slot = q;
                for &t in tokens.iter().rev() {
                    slot = self.token_perm(t)?.apply(slot);
                }
                Ok(slot)
            }
        }
    }
}

/// Vocabulary id of the unordered pair `{i, j}` among `vars` variables,
/// enumerating pairs `i < j` lexicographically.
pub fn swap_token(vars: usize, i: usize, j: usize) -> Result<usize> {
    if i == j || i >= vars || j >= vars {
        return Err(Error::arg(format!("invalid swap ({i}, {j}) over {vars} variables")));
    }
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    Ok(a * (2 * vars - a - 1) / 2 + (b - a - 1))
}

/// Inverse of [`swap_token`]; returns the pair with `i < j`.
pub fn swap_pair(vars: usize, token: usize) -> (usize, usize) {
    let mut base = 0;
    for a in 0..vars {
        let row = vars - a - 1;
        if token < base + row {
            return (a, a + 1 + token - base);
        }
        base += row;
    }
    panic!("swap token {token} outside vocabulary of {vars} variables");
}

pub fn s3_sample_episode(rng: &mut RngState, len: usize) -> Episode {
    let tokens: Vec<usize> = (0..len).map(|_| rng.below(6)).collect();
    let target = Task::S3.target(&tokens, None).expect("tokens within vocabulary");
    Episode {
        tokens,
        query: None,
        target,
    }
}

pub fn sv_sample_episode(rng: &mut RngState, vars: usize, len: usize) -> Episode {
    let task = Task::Binding { vars };
    let vocab = task.vocab_size();
    let tokens: Vec<usize> = (0..len).map(|_| rng.below(vocab)).collect();
    let query = rng.below(vars);
    let target = task.target(&tokens, Some(query)).expect("tokens within vocabulary");
    Episode {
        tokens,
        query: Some(query),
        target,
    }
}
