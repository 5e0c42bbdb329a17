//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "ASDNCKPT"
//! version  u32
//! meta     u32 length + UTF-8 key=value lines (model config, step, optimizer)
//! records  until EOF: u32 name length, name, u32 rank, rank x u32 dims,
//!          raw f32 values
//! ```
//! All integers and floats are little-endian. Adam moments are stored as extra
//! records named `<param>.adam_m` and `<param>.adam_v`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Asdn, ModelConfig};
use crate::error::{Error, Result};
use crate::kv;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ASDNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const ADAM_M: &str = ".adam_m";
const ADAM_V: &str = ".adam_v";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Asdn<f32>,
    /// Updates completed when the checkpoint was written.
    pub step: u64,
    /// Whether Adam moments are stored (they live in the model parameters).
    pub optimizer: bool,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(err(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

struct Record {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Checkpoint {
    pub fn new(model: Asdn<f32>, step: u64, optimizer: bool) -> Self {
        Self {
            model,
            step,
            optimizer,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.model.config().to_kv();
        let _ = writeln!(meta, "step={}", self.step);
        let _ = writeln!(meta, "optimizer={}", self.optimizer);

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, meta.len() as u32);
        out.extend_from_slice(meta.as_bytes());
        for p in self.model.params() {
            put_record(&mut out, &p.name, &p.shape, &p.value);
        }
        if self.optimizer {
            for p in self.model.params() {
                put_record(&mut out, &format!("{}{ADAM_M}", p.name), &p.shape, &p.m);
                put_record(&mut out, &format!("{}{ADAM_V}", p.name), &p.shape, &p.v);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| err("file too short for a checkpoint"))? != CHECKPOINT_MAGIC {
            return Err(err("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| err("metadata is not UTF-8"))?;
        let mut config = ModelConfig::desk();
        let (mut step, mut optimizer) = (None, false);
        for (k, v) in kv::parse(meta)? {
            match k.as_str() {
                "step" => step = Some(kv::value::<u64>(&k, &v)?),
                "optimizer" => optimizer = kv::flag(&k, &v)?,
                _ => {
                    if !config.set(&k, &v)? {
                        return Err(err(format!("unknown metadata key {k:?}")));
                    }
                }
            }
        }
        let step = step.ok_or_else(|| err("metadata lacks a step"))?;
        config.validate()?;

        let mut records: HashMap<String, Record> = HashMap::new();
        while !r.done() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| err("record name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(err(format!("record {name} has implausible rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| err(format!("record {name} is too large")))?;
            let data = r
                .take(count)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            if records.insert(name.clone(), Record { shape, data }).is_some() {
                return Err(err(format!("record {name} appears twice")));
            }
        }

        let mut model = Asdn::<f32>::build(&config)?;
        for p in model.params_mut() {
            let mut fetch = |name: &str| -> Result<Vec<f32>> {
                let rec = records
                    .remove(name)
                    .ok_or_else(|| err(format!("missing record {name}")))?;
                if rec.shape != p.shape {
                    return Err(err(format!(
                        "record {name} has shape {:?}, the config implies {:?}",
                        rec.shape, p.shape
                    )));
                }
                Ok(rec.data)
            };
            p.value = fetch(&p.name)?;
            if optimizer {
                p.m = fetch(&format!("{}{ADAM_M}", p.name))?;
                p.v = fetch(&format!("{}{ADAM_V}", p.name))?;
            } else {
                p.reset_optimizer_state();
            }
        }
        if let Some(extra) = records.keys().min() {
            return Err(err(format!("unexpected record {extra}")));
        }
        Ok(Self {
            model,
            step,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::param_count;
    use crate::tensor::Tensor4;

    fn ckpt(optimizer: bool) -> Checkpoint {
        let cfg = ModelConfig {
            base_channels: 8,
            growth_channels: 8,
            seed: 5,
            ..ModelConfig::desk()
        };
        let mut model = Asdn::<f32>::build(&cfg).unwrap();
        for (i, p) in model.params_mut().into_iter().enumerate() {
            p.m.iter_mut().for_each(|v| *v = i as f32 * 0.5);
            p.v.iter_mut().for_each(|v| *v = i as f32 * 0.25);
        }
        Checkpoint::new(model, 1234, optimizer)
    }

    #[test]
    fn round_trip_is_bitwise() {
        for opt in [false, true] {
            let c = ckpt(opt);
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(back.step, 1234);
            for (a, b) in c.model.params().iter().zip(back.model.params()) {
                assert_eq!(a.value, b.value);
                if opt {
                    assert_eq!((&a.m, &a.v), (&b.m, &b.v));
                } else {
                    assert!(b.m.iter().chain(&b.v).all(|&v| v == 0.0));
                }
            }
            let x = Tensor4::filled(1, 3, 9, 7, 0.3f32);
            assert_eq!(
                c.model.forward(&x, &[2, 9]).unwrap(),
                back.model.forward(&x, &[2, 9]).unwrap()
            );
        }
    }

    #[test]
    fn size_is_params_plus_header() {
        let c = ckpt(false);
        let bytes = c.to_bytes();
        let n = param_count(c.model.config());
        let payload = n * 4;
        assert!(bytes.len() > payload);
        // names and dims are small next to the weights
        assert!(bytes.len() < payload + 8 * 1024, "{} vs {payload}", bytes.len());
        let with_opt = ckpt(true).to_bytes();
        assert!(with_opt.len() > 3 * payload);
    }

    #[test]
    fn rejects_damage() {
        let good = ckpt(false).to_bytes();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&good[..good.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(&good[..40]).is_err());

        // first record's first dim lives right after its name
        let meta_len = u32::from_le_bytes(good[12..16].try_into().unwrap()) as usize;
        let rec = 16 + meta_len;
        let name_len = u32::from_le_bytes(good[rec..rec + 4].try_into().unwrap()) as usize;
        let dim0 = rec + 4 + name_len + 4;
        let mut bad = good.clone();
        bad[dim0] ^= 1;
        match Checkpoint::from_bytes(&bad) {
            Err(Error::Checkpoint(_)) => {}
            other => panic!("expected checkpoint error, got {other:?}"),
        }
    }
}
