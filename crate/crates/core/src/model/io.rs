//! Little-endian binary model files.
//!
//! ```text
//! "DPRN1"            5 bytes
//! version            u32 (currently 1)
//! H                  u32
//! 8 x block          conv1.w conv1.b conv2.w conv2.b fc1.w fc1.b fc2.w fc2.b
//!   rank             u32
//!   extents          rank x u32
//!   data             numel x f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, Network};
use crate::error::{Error, Result};
use crate::layers::{Conv2dParams, LinearParams};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 5] = b"DPRN1";
pub const MODEL_VERSION: u32 = 1;

impl Network {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Serializes a network of the standard architecture.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if !self.arch.is_mnist() {
            return Err(Error::Config("only the standard architecture can be saved".into()));
        }
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        Ok(out)
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        if !self.arch.is_mnist() {
            return Err(std::io::Error::other("only the standard architecture can be saved"));
        }
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(self.arch.hidden as u32).to_le_bytes())?;
        for t in self.param_tensors() {
            w.write_all(&(t.dims().len() as u32).to_le_bytes())?;
            for &d in t.dims() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, at: 0 };
        if r.take(MODEL_MAGIC.len())? != MODEL_MAGIC {
            return Err(Error::ModelMagic);
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let hidden = r.u32()? as usize;
        if hidden == 0 {
            return Err(Error::ModelShape("hidden size 0".into()));
        }
        let arch = Architecture::mnist(hidden);
        let expected = expected_shapes(&arch);
        let mut blocks = Vec::with_capacity(expected.len());
        for (name, dims) in &expected {
            blocks.push(r.tensor(name, dims)?);
        }
        if r.at != bytes.len() {
            return Err(Error::ModelCorrupt(format!(
                "{} trailing bytes after the last block",
                bytes.len() - r.at
            )));
        }
        let mut it = blocks.into_iter();
        let mut next = || it.next().expect("block count fixed above");
        let mut convs = Vec::new();
        for &(cin, cout) in &[(1, arch.conv_channels[0]), (arch.conv_channels[0], arch.conv_channels[1])] {
            let mut c = Conv2dParams::zeros(cin, cout)?;
            c.weights = next();
            c.bias = next();
            convs.push(c);
        }
        let fc1 = LinearParams::from_parts(next(), next())?;
        let fc2 = LinearParams::from_parts(next(), next())?;
        Network::from_parts(arch, convs, fc1, fc2)
    }
}

fn expected_shapes(arch: &Architecture) -> Vec<(&'static str, Vec<usize>)> {
    let (c1, c2, h) = (arch.conv_channels[0], arch.conv_channels[1], arch.hidden);
    vec![
        ("conv1.w", vec![c1, 1, 5, 5]),
        ("conv1.b", vec![c1]),
        ("conv2.w", vec![c2, c1, 5, 5]),
        ("conv2.b", vec![c2]),
        ("fc1.w", vec![h, arch.features()]),
        ("fc1.b", vec![h]),
        ("fc2.w", vec![arch.classes, h]),
        ("fc2.b", vec![arch.classes]),
    ]
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::ModelCorrupt(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.at,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, name: &str, dims: &[usize]) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank > 4 {
            return Err(Error::ModelShape(format!("{name}: rank {rank}")));
        }
        let mut found = Vec::with_capacity(rank);
        for _ in 0..rank {
            found.push(self.u32()? as usize);
        }
        if found != dims {
            return Err(Error::ModelShape(format!("{name}: expected {dims:?}, found {found:?}")));
        }
        let n: usize = dims.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(dims, data)
    }
}
