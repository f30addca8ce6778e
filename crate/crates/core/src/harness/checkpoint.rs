//! Flat binary parameter dumps.
//!
//! Layout, little-endian: `b"LCRM"`, `u32` version, `u32` tensor count, then
//! per tensor a `u32` rank followed by that many `u32` dims, then every
//! tensor's values as row-major `f64` in the same order.

use std::fs;
use std::path::Path;

use crate::agent::QNetwork;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"LCRM";
const VERSION: u32 = 1;

pub fn encode(tensors: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(shape);
    }
    let mut out = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let raw = r.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("shape overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn save(net: &QNetwork, path: &Path) -> Result<()> {
    let params = net.params();
    let values: Vec<_> = params.iter().map(|p| p.value().clone()).collect();
    let refs: Vec<&Tensor> = values.iter().collect();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, encode(&refs))?;
    Ok(())
}

/// Overwrite `net`'s parameters from a file written by [`save`].
pub fn load_into(net: &QNetwork, path: &Path) -> Result<()> {
    let tensors = decode(&fs::read(path)?)?;
    let params = net.params();
    if tensors.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "{} holds {} tensors, the network has {}",
            path.display(),
            tensors.len(),
            params.len()
        )));
    }
    for (i, (p, t)) in params.iter().zip(&tensors).enumerate() {
        if p.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {i}: shape {:?} does not match parameter {:?}",
                t.shape(),
                p.shape()
            )));
        }
    }
    for (p, t) in params.iter().zip(&tensors) {
        p.set_value(t);
    }
    Ok(())
}
