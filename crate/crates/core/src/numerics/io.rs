//! Binary model persistence shared by every module.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    4 bytes  "PAUG"
//! version  u16      currently 1
//! role     u8       b'M' plain model, b'R' regressor, b'G' generator
//! d_z      u32      only present when role == b'G'
//! layers   u32
//! per layer:
//!   in_dim   u32
//!   out_dim  u32
//!   act tag  u8     0 identity, 1 relu, 2 leaky-relu (followed by slope f64)
//!   weights  out*in f64, row-major
//!   biases   out f64
//! ```
//!
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::matrix::Matrix;
use super::mlp::{Activation, Layer, MlpModel};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"PAUG";
const FORMAT_VERSION: u16 = 1;

/// Role tag distinguishing which module owns a persisted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelRole {
    Plain,
    Regressor,
    /// Generator; carries its noise dimension in the header.
    Generator {
        noise_dim: u32,
    },
}

impl ModelRole {
    fn tag(&self) -> u8 {
        match self {
            ModelRole::Plain => b'M',
            ModelRole::Regressor => b'R',
            ModelRole::Generator { .. } => b'G',
        }
    }
}

pub fn save_model(path: &Path, model: &MlpModel, role: ModelRole) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[role.tag()])?;
    if let ModelRole::Generator { noise_dim } = role {
        w.write_all(&noise_dim.to_le_bytes())?;
    }
    w.write_all(&(model.layers().len() as u32).to_le_bytes())?;
    for layer in model.layers() {
        w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        match layer.activation {
            Activation::Identity => w.write_all(&[0u8])?,
            Activation::ReLU => w.write_all(&[1u8])?,
            Activation::LeakyReLU(slope) => {
                w.write_all(&[2u8])?;
                w.write_all(&slope.to_le_bytes())?;
            }
        }
        for v in layer.weight.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &layer.bias {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("unexpected end of model file".into()))?;
    Ok(buf)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(f64::from_le_bytes(read_exact::<8>(r)?));
    }
    Ok(out)
}

pub fn load_model(path: &Path) -> Result<(MlpModel, ModelRole)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let magic = read_exact::<4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic bytes {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = u16::from_le_bytes(read_exact::<2>(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let role = match read_exact::<1>(&mut r)?[0] {
        b'M' => ModelRole::Plain,
        b'R' => ModelRole::Regressor,
        b'G' => {
            let noise_dim = u32::from_le_bytes(read_exact::<4>(&mut r)?);
            ModelRole::Generator { noise_dim }
        }
        other => return Err(Error::Format(format!("unknown role tag {other:#x}"))),
    };
    let layer_count = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
        let out_dim = u32::from_le_bytes(read_exact::<4>(&mut r)?) as usize;
        let activation = match read_exact::<1>(&mut r)?[0] {
            0 => Activation::Identity,
            1 => Activation::ReLU,
            2 => Activation::LeakyReLU(f64::from_le_bytes(read_exact::<8>(&mut r)?)),
            other => return Err(Error::Format(format!("unknown activation tag {other}"))),
        };
        let wdata = read_f64s(&mut r, in_dim * out_dim)?;
        let bias = read_f64s(&mut r, out_dim)?;
        layers.push(Layer {
            weight: Matrix::from_vec(out_dim, in_dim, wdata)
                .map_err(|e| Error::Format(e.to_string()))?,
            bias,
            activation,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after model data".into()));
    }
    let model = MlpModel::from_layers(layers).map_err(|e| Error::Format(e.to_string()))?;
    Ok((model, role))
}
