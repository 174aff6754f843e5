//! Named parameter storage and the binary parameter file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FNPARAMS"
//! version  u32      PARAM_FORMAT_VERSION
//! width    u8       bytes per element (4 = f32, 8 = f64)
//! count    u32      number of parameters
//! count x {
//!   name_len u32, name utf-8 bytes,
//!   rank u32, dims u64 x rank,
//!   data     width x product(dims) bytes, row-major
//! }
//! ```

use std::io::{Read, Write};

use super::{Gradients, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::fnv1a64;

pub const PARAM_MAGIC: &[u8; 8] = b"FNPARAMS";
pub const PARAM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<S: Scalar = f32> {
    pub name: String,
    pub tensor: Tensor<S>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<S: Scalar = f32> {
    params: Vec<Param<S>>,
}

/// Parameters recorded as leaves of one tape.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    /// Register a trainable tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param {
            name,
            tensor: tensor.with_requires_grad(true),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<S>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, S>) -> BoundParams {
        BoundParams {
            vars: self.params.iter().map(|p| tape.leaf(&p.tensor)).collect(),
        }
    }

    /// Store `d loss / d param` in every parameter's `grad`; parameters the
    /// loss never reached get zeros. Returns the names of those parameters.
    pub fn set_grads(&mut self, grads: &mut Gradients<S>, bound: &BoundParams) -> Vec<String> {
        let mut unreached = Vec::new();
        for (p, &var) in self.params.iter_mut().zip(&bound.vars) {
            let g = grads.take(var).unwrap_or_else(|| {
                unreached.push(p.name.clone());
                vec![S::zero(); p.tensor.numel()]
            });
            p.tensor.set_grad(g).expect("gradient shape matches its leaf");
        }
        unreached
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }

    /// Replace values from `other`, which must hold the same names and shapes.
    pub fn load_values(&mut self, other: ParamStore<S>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "parameter file has {} tensors, model expects {}",
                other.params.len(),
                self.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(other.params) {
            if mine.name != theirs.name || mine.tensor.shape() != theirs.tensor.shape() {
                return Err(Error::Dimension(format!(
                    "parameter mismatch: model has `{}` {:?}, file has `{}` {:?}",
                    mine.name,
                    mine.tensor.shape(),
                    theirs.name,
                    theirs.tensor.shape()
                )));
            }
            mine.tensor = theirs.tensor.with_requires_grad(true);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.num_scalars() * S::WIDTH as usize);
        out.extend_from_slice(PARAM_MAGIC);
        out.extend_from_slice(&PARAM_FORMAT_VERSION.to_le_bytes());
        out.push(S::WIDTH);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
            for &d in p.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in p.tensor.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != PARAM_MAGIC {
            return Err(Error::Input("not a parameter file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != PARAM_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported parameter format version {version}"
            )));
        }
        let width = r.take(1)?[0];
        if width != S::WIDTH {
            return Err(Error::Dimension(format!(
                "parameter file stores {width}-byte floats, expected {}",
                S::WIDTH
            )));
        }
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Input(format!("parameter name is not utf-8: {e}")))?
                .to_owned();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * width as usize)?;
            let data = raw.chunks(width as usize).map(S::read_le).collect();
            store.add(name, Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Input("trailing bytes after parameter data".into()));
        }
        Ok(store)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// FNV-1a over the serialized form, as 16 hex digits.
    pub fn checksum(&self) -> String {
        format!("{:016x}", fnv1a64(&self.to_bytes()))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Input("parameter file is truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
