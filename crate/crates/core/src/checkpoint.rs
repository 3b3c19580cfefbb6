//! Flat binary checkpoint.
//!
//! Layout, all integers little-endian u32:
//! magic `EMGNN1`, version, token count, then each token as length + UTF-8
//! bytes in id order, then tensor blocks (name length, name, rank, dims,
//! f64 payload) up to a trailing CRC32 of everything before it.
//! The run configuration travels as the tensor `meta.config`.

use std::path::Path;

use crate::config::RunConfig;
use crate::data::{write_atomic, Mode};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::gnn::Variant;
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"EMGNN1";
pub const VERSION: u32 = 1;
pub const META_CONFIG: &str = "meta.config";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn config_values(c: &RunConfig) -> Vec<f64> {
    vec![
        c.dim as f64,
        c.fc_dim as f64,
        c.outer_iters as f64,
        c.inner_steps as f64,
        c.variant.code() as f64,
        c.batch_size as f64,
        c.lr_base,
        c.lr_floor,
        c.epochs as f64,
        (c.seed >> 32) as f64,
        (c.seed & 0xffff_ffff) as f64,
        c.k_options as f64,
        match c.mode {
            Mode::Visdial => 0.0,
            Mode::Visdialq => 1.0,
        },
    ]
}

fn config_from_values(v: &[f64]) -> Result<RunConfig> {
    let bad = || Error::Checkpoint(format!("malformed `{META_CONFIG}` tensor"));
    if v.len() != 13 {
        return Err(bad());
    }
    let int = |x: f64| -> Result<usize> {
        if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(bad())
        }
    };
    let cfg = RunConfig {
        dim: int(v[0])?,
        fc_dim: int(v[1])?,
        outer_iters: int(v[2])?,
        inner_steps: int(v[3])?,
        variant: Variant::from_code(int(v[4])? as u32).ok_or_else(bad)?,
        batch_size: int(v[5])?,
        lr_base: v[6],
        lr_floor: v[7],
        epochs: int(v[8])?,
        seed: ((int(v[9])? as u64) << 32) | int(v[10])? as u64,
        k_options: int(v[11])?,
        mode: match int(v[12])? {
            0 => Mode::Visdial,
            1 => Mode::Visdialq,
            _ => return Err(bad()),
        },
    };
    cfg.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(cfg)
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: impl Iterator<Item = f64>) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len());
    for &d in shape {
        put_u32(out, d);
    }
    for x in values {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn to_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_u32(&mut out, model.vocab.len());
    for t in model.vocab.tokens() {
        put_u32(&mut out, t.len());
        out.extend_from_slice(t.as_bytes());
    }
    let meta = config_values(&model.config);
    put_tensor(&mut out, META_CONFIG, &[meta.len()], meta.iter().copied());
    for (name, t) in model.named_tensors() {
        put_tensor(&mut out, &name, t.shape(), t.values().iter().map(|x| x.as_f64()));
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f64>> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("CRC mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("token count")?;
    let mut tokens = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        tokens.push(r.string("token")?);
    }
    let vocab = Vocabulary::from_tokens(tokens).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut config = None;
    let mut tensors = Vec::new();
    while !r.done() {
        let name = r.string("tensor name")?;
        let rank = r.u32("rank")?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("dims")?);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= (body.len() - r.pos) / 8)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` payload exceeds the file")))?;
        let payload = r.take(len * 8, "payload")?;
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if name == META_CONFIG {
            config = Some(config_from_values(&values)?);
        } else {
            tensors.push((name, Tensor::new(shape, values)?));
        }
    }
    let config = config.ok_or_else(|| Error::Checkpoint(format!("missing `{META_CONFIG}` tensor")))?;
    Model::from_named(vocab, config, tensors)
}

pub fn save<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_bytes(model))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
