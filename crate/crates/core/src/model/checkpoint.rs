//! Checkpoint layout (little-endian): `EMBD`, u16 version, architecture
//! descriptor (u32 input side, u32 stem pool, u32 block count, u32 channels
//! per block, u32 hidden width, u32 embedding width, u32 head classes),
//! u32 mask length and one u8 frozen flag per block, u32 tensor count, then
//! per tensor u32 rank, u32 dims and f64 values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::embedder::{Architecture, EmbedderParams, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EMBD";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_checkpoint<T: Scalar, W: Write>(params: &EmbedderParams<T>, mut w: W) -> std::io::Result<()> {
    let arch = &params.arch;
    let mut buf = Vec::with_capacity(64 + params.parameter_count() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut buf, arch.input_side);
    put_u32(&mut buf, arch.stem_pool);
    put_u32(&mut buf, arch.channels.len());
    for &c in &arch.channels {
        put_u32(&mut buf, c);
    }
    put_u32(&mut buf, arch.hidden);
    put_u32(&mut buf, arch.embed_dim);
    put_u32(&mut buf, arch.classes);
    put_u32(&mut buf, params.frozen.len());
    buf.extend(params.frozen.iter().map(|&f| f as u8));
    put_u32(&mut buf, params.tensors.len());
    for t in &params.tensors {
        put_u32(&mut buf, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut buf, d);
        }
        for v in &t.data {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::format("checkpoint", "unexpected end of data"))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn bounded(&mut self, what: &str, max: usize) -> Result<usize> {
        let v = self.u32()?;
        if v > max {
            return Err(Error::format("checkpoint", format!("{what} {v} exceeds {max}")));
        }
        Ok(v)
    }
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: R) -> Result<EmbedderParams<T>> {
    let mut c = Cursor { inner: r };
    if &c.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "missing EMBD magic"));
    }
    let version = u16::from_le_bytes(c.bytes()?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let input_side = c.u32()?;
    let stem_pool = c.u32()?;
    let blocks = c.bounded("conv block count", 64)?;
    let channels = (0..blocks).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        input_side,
        stem_pool,
        channels,
        hidden: c.u32()?,
        embed_dim: c.u32()?,
        classes: c.u32()?,
    };
    arch.validate()
        .map_err(|e| Error::format("checkpoint", format!("bad architecture: {e}")))?;
    let mask_len = c.u32()?;
    if mask_len != arch.block_count() {
        return Err(Error::format(
            "checkpoint",
            "frozen mask length does not match architecture",
        ));
    }
    let frozen = (0..mask_len)
        .map(|_| match c.bytes::<1>()?[0] {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::format("checkpoint", format!("frozen flag {v}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let count = c.u32()?;
    if count != 2 * arch.block_count() {
        return Err(Error::format("checkpoint", "tensor count does not match architecture"));
    }
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let rank = c.bounded("tensor rank", 8)?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let (w, b, _) = arch.block_shapes(i / 2);
        let expected = if i % 2 == 0 { w } else { b };
        if shape != expected {
            return Err(Error::format(
                "checkpoint",
                format!("tensor {i} has shape {shape:?}, expected {expected:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = f64::from_le_bytes(c.bytes()?);
            if !v.is_finite() {
                return Err(Error::format("checkpoint", format!("non-finite value in tensor {i}")));
            }
            data.push(T::lit(v));
        }
        tensors.push(Tensor { shape, data });
    }
    Ok(EmbedderParams { arch, tensors, frozen })
}
