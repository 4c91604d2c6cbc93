//! Versioned binary checkpoint: magic `CLPN`, version, network sizes, then
//! each tensor as name, shape and little-endian f64 data.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::params::{NetConfig, Params};

pub const MAGIC: &[u8; 4] = b"CLPN";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

pub fn encode(p: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * p.len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let c = &p.config;
    for d in [
        c.pitch_embedding,
        c.conv_channels,
        c.conditioning,
        c.code_embedding,
        c.gru_a,
        c.gru_b,
    ] {
        put_u32(&mut out, d as u32);
    }
    let tensors = p.tensors();
    put_u32(&mut out, tensors.len() as u32);
    for (name, t) in tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u32(&mut out, d as u32);
        }
        for v in &t.data {
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
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<Params> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in dims.iter_mut() {
        *d = r.u32()? as usize;
    }
    let config = NetConfig {
        pitch_embedding: dims[0],
        conv_channels: dims[1],
        conditioning: dims[2],
        code_embedding: dims[3],
        gru_a: dims[4],
        gru_b: dims[5],
    };
    if !config.is_valid() {
        return Err(Error::Checkpoint(format!("bad sizes {dims:?}")));
    }
    let mut p = Params::zeros(config);
    let count = r.u32()? as usize;
    if count != Params::NAMES.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {count}", Params::NAMES.len())));
    }
    for (name, t) in p.tensors_mut() {
        let len = r.u32()? as usize;
        let found = r.take(len)?;
        if found != name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if shape != t.shape {
            return Err(Error::Checkpoint(format!("{name}: shape {shape:?}, expected {:?}", t.shape)));
        }
        for v in t.data.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if !p.is_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    Ok(p)
}

pub fn save(p: &Params, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode(p)))
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Params> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
