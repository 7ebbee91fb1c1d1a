//! Checkpoint layout (little-endian):
//!
//! ```text
//! magic "STSW" | u32 version=1 | u32 config length | config JSON (canonical)
//! repeated, in sorted-name order until end of file:
//!   u32 name length | name | u32 rank | rank × u32 dims | product(dims) × f32
//! ```

use std::fs;
use std::path::Path;

use crate::nn::Parameters;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"STSW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One stored tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// The run configuration as canonical JSON text.
    pub config: String,
    pub tensors: Vec<StoredTensor>,
}

/// Serializes a JSON value with object keys sorted at every level.
pub fn canonical_json(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so a round trip through `Value` sorts.
    serde_json::to_string(value).expect("JSON values always serialize")
}

impl Checkpoint {
    pub fn from_parameters(config: String, params: &Parameters) -> Self {
        let mut tensors: Vec<StoredTensor> = params
            .iter()
            .map(|p| StoredTensor {
                name: p.name.clone(),
                shape: p.shape.clone(),
                values: p.value.iter().map(|&v| v as f32).collect(),
            })
            .collect();
        tensors.sort_by(|a, b| a.name.cmp(&b.name));
        Checkpoint { config, tensors }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        u32le(&mut out, CHECKPOINT_VERSION as usize);
        u32le(&mut out, self.config.len());
        out.extend_from_slice(self.config.as_bytes());
        for t in &self.tensors {
            u32le(&mut out, t.name.len());
            out.extend_from_slice(t.name.as_bytes());
            u32le(&mut out, t.shape.len());
            for &d in &t.shape {
                u32le(&mut out, d);
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic, expected \"STSW\"".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config = r.string()?;
        let mut tensors = Vec::new();
        while r.pos < buf.len() {
            let name = r.string()?;
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let values = r
                .take(count * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            tensors.push(StoredTensor { name, shape, values });
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Copies stored values into `params`, which must hold exactly the same names and
    /// shapes.
    pub fn load_into(&self, params: &mut Parameters) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for t in &self.tensors {
            let id = params
                .find(&t.name)
                .ok_or_else(|| Error::Checkpoint(format!("model has no parameter {:?}", t.name)))?;
            if params.param(id).shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "{}: stored shape {:?}, model shape {:?}",
                    t.name,
                    t.shape,
                    params.param(id).shape
                )));
            }
            for (dst, &src) in params.value_mut(id).iter_mut().zip(&t.values) {
                *dst = src as f64;
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated: need {end} bytes, have {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
}
