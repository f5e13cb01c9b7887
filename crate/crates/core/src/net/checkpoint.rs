//! Binary checkpoint: magic, format version, layer sizes, little-endian f32
//! parameters, then the network version.

use std::path::Path;

use super::Mlp;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"COLORNET";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Mlp<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.n_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sizes().len() as u32).to_le_bytes());
        for &s in self.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&self.version().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let fv = r.u32()?;
        if fv != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint format {fv}")));
        }
        let n_layers = r.u32()? as usize;
        if !(2..=64).contains(&n_layers) {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let mut sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let s = r.u32()? as usize;
            if s == 0 {
                return Err(Error::Format("zero-width layer".into()));
            }
            sizes.push(s);
        }
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let version = r.u64()?;
        if !r.buf.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", r.buf.len())));
        }
        Mlp::from_params(&sizes, params, version)
    }

    /// Like [`Mlp::from_bytes`] but rejects a network of a different shape.
    pub fn from_bytes_expect(bytes: &[u8], sizes: &[usize]) -> Result<Self> {
        let net = Self::from_bytes(bytes)?;
        if net.sizes() != sizes {
            return Err(Error::Format(format!(
                "checkpoint shape {:?} does not match expected {:?}",
                net.sizes(),
                sizes
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
