//! Versioned binary checkpoint.
//!
//! ```text
//! magic            8 bytes  "STLCKPT\0"
//! version          u32
//! input_dim        u32
//! hidden count     u32, then one u32 per hidden layer
//! activation       u8       0 = tanh, 1 = relu
//! metadata count   u32, then per entry: name (u16 len + utf8), u32 len, f64 values
//! layout count     u32, then per tensor: name (u16 len + utf8), rows u32, cols u32
//! payload count    u64, then f64 values
//! ```
//!
//! All integers and floats are little-endian. Metadata carries named real
//! arrays for layers above the network (demarcations, input scaling).

use std::path::Path;

use super::{Activation, NetworkSpec, ParamVector, TensorShape};
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub metadata: Vec<(String, Vec<f64>)>,
    pub params: ParamVector,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: ParamVector) -> Result<Self> {
        params.check_spec(&spec)?;
        Ok(Self {
            spec,
            metadata: Vec::new(),
            params,
        })
    }

    pub fn with_metadata(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.metadata.push((name.into(), values));
        self
    }

    pub fn metadata(&self, name: &str) -> Option<&[f64]> {
        self.metadata.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(self.spec.input_dim as u32);
        w.u32(self.spec.hidden_dims.len() as u32);
        for &h in &self.spec.hidden_dims {
            w.u32(h as u32);
        }
        w.u8(match self.spec.hidden_activation {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        });
        w.u32(self.metadata.len() as u32);
        for (name, values) in &self.metadata {
            w.str(name);
            w.u32(values.len() as u32);
            values.iter().for_each(|&v| w.f64(v));
        }
        w.u32(self.params.layout().len() as u32);
        for shape in self.params.layout() {
            w.str(&shape.name);
            w.u32(shape.rows as u32);
            w.u32(shape.cols as u32);
        }
        w.u64(self.params.len() as u64);
        self.params.values().iter().for_each(|&v| w.f64(v));
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(KIND, data);
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(r.corrupt_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                kind: KIND,
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let input_dim = r.u32()? as usize;
        let n_hidden = r.u32()?;
        let n_hidden = r.count(4, n_hidden.into())?;
        let hidden_dims = (0..n_hidden)
            .map(|_| r.u32().map(|h| h as usize))
            .collect::<Result<Vec<_>>>()?;
        let act_at = r.offset();
        let hidden_activation = match r.u8()? {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            other => return Err(r.corrupt_at(act_at, format!("unknown activation tag {other}"))),
        };
        let spec = NetworkSpec {
            input_dim,
            hidden_dims,
            hidden_activation,
        };
        spec.validate().map_err(|e| r.corrupt_at(8, e.to_string()))?;

        let n_meta = r.u32()?;
        let n_meta = r.count(6, n_meta.into())?;
        let mut metadata = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let name = r.str()?;
            let len = r.u32()?;
            let len = r.count(8, len.into())?;
            let values = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            metadata.push((name, values));
        }

        let layout_at = r.offset();
        let n_layout = r.u32()?;
        let n_layout = r.count(10, n_layout.into())?;
        let mut layout = Vec::with_capacity(n_layout);
        for _ in 0..n_layout {
            let name = r.str()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            layout.push(TensorShape::new(name, rows, cols));
        }
        if layout != spec.layout() {
            return Err(r.corrupt_at(layout_at, "layout table disagrees with network spec"));
        }

        let payload_at = r.offset();
        let n_values = r.u64()?;
        let expected: usize = layout.iter().map(TensorShape::len).sum();
        if n_values != expected as u64 {
            return Err(r.corrupt_at(
                payload_at,
                format!("payload holds {n_values} values, layout requires {expected}"),
            ));
        }
        let n_values = r.count(8, n_values)?;
        let values = (0..n_values).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.expect_end()?;
        Ok(Self {
            spec,
            metadata,
            params: ParamVector::new(values, layout)?,
        })
    }
}

pub fn save_params(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&data)
}
