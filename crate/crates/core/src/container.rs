//! Self-describing binary container for fp64 arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"BDRISv1\0"
//! header_len u64
//! header     header_len bytes of UTF-8 JSON:
//!            {"kind": str, "meta": object, "arrays": [{"name": str, "shape": [usize]}]}
//! payload    for each array in header order, product(shape) f64 values (LE, row-major)
//! ```
//!
//! Channel sets, coupling matrices, network parameters and checkpoints all use it;
//! values round-trip bit-exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{CMat, Complex64, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BDRISv1\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<Array>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.push(Array {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: &Tensor) {
        self.push(name, vec![t.rows(), t.cols()], t.to_vec());
    }

    /// Stores `name.re` and `name.im`, each row-major.
    pub fn push_cmat(&mut self, name: &str, m: &CMat) {
        let (r, c) = m.shape();
        let mut re = Vec::with_capacity(r * c);
        let mut im = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        self.push(format!("{name}.re"), vec![r, c], re);
        self.push(format!("{name}.im"), vec![r, c], im);
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.arrays.iter().find(|a| a.name == name)
    }

    fn require(&self, name: &str) -> Result<&Array> {
        self.get(name)
            .ok_or_else(|| Error::Contract(format!("container has no array `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<Tensor> {
        let a = self.require(name)?;
        match a.shape.as_slice() {
            [r, c] => Tensor::new(*r, *c, a.data.clone()),
            s => Err(Error::Contract(format!("array `{name}` has rank {}", s.len()))),
        }
    }

    pub fn cmat(&self, name: &str) -> Result<CMat> {
        let re = self.tensor(&format!("{name}.re"))?;
        let im = self.tensor(&format!("{name}.im"))?;
        if re.shape() != im.shape() {
            return Err(Error::Contract(format!("`{name}` re/im shapes differ")));
        }
        Ok(DMatrix::from_fn(re.rows(), re.cols(), |i, j| {
            Complex64::new(re.get(i, j), im.get(i, j))
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.arrays.iter().map(|a| a.data.len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing container magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16usize.saturating_add(hlen))
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
        let mut pos = 16 + hlen;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for a in header.arrays {
            let n: usize = a.shape.iter().product();
            let end = pos + n * 8;
            let chunk = bytes
                .get(pos..end)
                .ok_or_else(|| bad(&format!("truncated payload for `{}`", a.name)))?;
            let data = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            arrays.push(Array {
                name: a.name,
                shape: a.shape,
                data,
            });
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn expect_kind(&self, kind: &str, path: &Path) -> Result<()> {
        if self.kind != kind {
            return Err(Error::format(
                path,
                format!("expected a `{kind}` container, found `{}`", self.kind),
            ));
        }
        Ok(())
    }
}
