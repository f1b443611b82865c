//! Binary checkpoint container.
//!
//! Layout (all integers little-endian `u32` unless noted):
//!
//! ```text
//! magic "HOLONET\0" | version | kind | task | vars | vocab | hidden | layers
//! | heads | d_ff | positional | max_len | pooling | tensor count
//! | per tensor: name length, name bytes, rows, cols, rows*cols f64
//! | FNV-1a 64 checksum (u64) of every preceding byte
//! ```
//!
//! A human-readable `<path>.meta` sidecar is written alongside.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Model, ModelKind, ModelSpec, Pooling, Positional};
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tasks::Task;
use crate::tensor::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"HOLONET\0";

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn kind_code(k: ModelKind) -> u32 {
    match k {
        ModelKind::Holonomic => 0,
        ModelKind::Rnn => 1,
        ModelKind::NormalizedRnn => 2,
        ModelKind::Transformer => 3,
    }
}

fn kind_from(code: u32) -> Option<ModelKind> {
    [
        ModelKind::Holonomic,
        ModelKind::Rnn,
        ModelKind::NormalizedRnn,
        ModelKind::Transformer,
    ]
    .get(code as usize)
    .copied()
}

fn positional_code(p: Positional) -> u32 {
    match p {
        Positional::Learned => 0,
        Positional::Sinusoidal => 1,
        Positional::None => 2,
    }
}

fn positional_from(code: u32) -> Option<Positional> {
    [Positional::Learned, Positional::Sinusoidal, Positional::None]
        .get(code as usize)
        .copied()
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

impl Model {
    /// Architecture description sufficient to rebuild this model.
    pub fn spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.kind(), self.hidden());
        if let Model::Transformer(t) = self {
            let d = t.dims;
            spec.layers = d.layers;
            spec.heads = d.heads;
            spec.d_ff = d.d_ff;
            spec.positional = d.positional;
            spec.max_len = d.max_len;
            spec.pooling = Some(d.pooling);
        }
        spec
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let spec = model.spec();
    let task = model.task();
    let dims = spec.dims(task);
    let (task_code, vars) = match task {
        Task::S3 => (0, 0),
        Task::Binding { vars } => (1, vars as u32),
    };
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let header = [
        CHECKPOINT_VERSION,
        kind_code(spec.kind),
        task_code,
        vars,
        task.vocab_size() as u32,
        spec.hidden as u32,
        dims.layers as u32,
        dims.heads as u32,
        dims.d_ff as u32,
        positional_code(dims.positional),
        dims.max_len as u32,
        u32::from(dims.pooling == Pooling::Mean),
        model.params().len() as u32,
    ];
    for v in header {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (name, m) in model.params().iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = fnv1a(&buf);
    buf.extend_from_slice(&sum.to_le_bytes());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;

    let mut meta = String::new();
    let _ = writeln!(meta, "format_version = {CHECKPOINT_VERSION}");
    let _ = writeln!(meta, "model = {}", spec.kind.name());
    let _ = writeln!(meta, "task = {}", task.name());
    if let Task::Binding { vars } = task {
        let _ = writeln!(meta, "vars = {vars}");
    }
    let _ = writeln!(meta, "vocab = {}", task.vocab_size());
    let _ = writeln!(meta, "hidden = {}", spec.hidden);
    if spec.kind == ModelKind::Transformer {
        let _ = writeln!(meta, "layers = {}", dims.layers);
        let _ = writeln!(meta, "heads = {}", dims.heads);
        let _ = writeln!(meta, "d_ff = {}", dims.d_ff);
        let _ = writeln!(meta, "positional = {:?}", dims.positional);
        let _ = writeln!(meta, "max_len = {}", dims.max_len);
        let _ = writeln!(meta, "pooling = {:?}", dims.pooling);
    }
    let count = model.param_count();
    let _ = writeln!(meta, "parameters = {}", count.total);
    for (k, n) in &count.items {
        let _ = writeln!(meta, "parameters.{k} = {n}");
    }
    let _ = writeln!(meta, "checksum = {sum:#018x}");
    let mp = meta_path(path);
    fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.corrupt("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::Corrupt {
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |d: &str| Error::Corrupt {
        path: path.to_path_buf(),
        detail: d.into(),
    };
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing checkpoint signature"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < 12 + 8 {
        return Err(corrupt("file too short"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        bytes: body,
        pos: 12,
        path,
    };
    let kind = kind_from(r.u32()?).ok_or_else(|| corrupt("unknown model kind"))?;
    let task = match (r.u32()?, r.u32()?) {
        (0, _) => Task::S3,
        (1, vars) => Task::binding(vars as usize).map_err(|_| corrupt("bad variable count"))?,
        _ => return Err(corrupt("unknown task")),
    };
    if r.u32()? as usize != task.vocab_size() {
        return Err(corrupt("vocabulary size disagrees with task"));
    }
    let hidden = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let heads = r.u32()? as usize;
    let d_ff = r.u32()? as usize;
    let positional = positional_from(r.u32()?).ok_or_else(|| corrupt("unknown positional mode"))?;
    let max_len = r.u32()? as usize;
    let pooling = if r.u32()? == 1 { Pooling::Mean } else { Pooling::Final };
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| corrupt("parameter name is not UTF-8"))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows.saturating_mul(cols).min(body.len() / 8));
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        store.push(name, Matrix::from_vec(rows, cols, data)?);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after parameters"));
    }
    let spec = ModelSpec {
        kind,
        hidden,
        layers,
        heads,
        d_ff,
        positional,
        max_len,
        pooling: Some(pooling),
        init_scale: 1.0,
    };
    Model::from_params(&spec, task, store).map_err(|e| corrupt(&e.to_string()))
}
