//! Binary cache of unshuffled patch spectra.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FFCS"            4 bytes
//! version           u16 = 1
//! C, K, Hp, Wp      u16 each
//! sample count      u32
//! per sample:
//!   label           u16
//!   source-id hash  u64 (FNV-1a of the source id)
//!   real parts      C*K*K*Hp*Wp f32, row-major (C, K^2, Hp, Wp)
//!   imag parts      same count
//! ```

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::tensor::{ComplexTensor, Real, Shape};

pub const MAGIC: &[u8; 4] = b"FFCS";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheHeader {
    pub channels: u16,
    pub patches: u16,
    pub patch_height: u16,
    pub patch_width: u16,
    pub count: u32,
}

impl CacheHeader {
    pub fn values_per_part(&self) -> usize {
        let k = self.patches as usize;
        self.channels as usize * k * k * self.patch_height as usize * self.patch_width as usize
    }

    /// Shape of one cached sample: `(C, K^2, Hp, Wp)`.
    pub fn sample_shape(&self) -> Result<Shape> {
        let k = self.patches as usize;
        Shape::new(vec![
            self.channels as usize,
            k * k,
            self.patch_height as usize,
            self.patch_width as usize,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub label: u16,
    pub source_hash: u64,
    pub re: Vec<f32>,
    pub im: Vec<f32>,
}

impl CacheEntry {
    pub fn from_spectrum<T: Real>(spectrum: &ComplexTensor<T>, label: u16, source_id: &str) -> Self {
        Self {
            label,
            source_hash: fnv1a64(source_id.as_bytes()),
            re: spectrum.re().data().iter().map(|v| v.as_f64() as f32).collect(),
            im: spectrum.im().data().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }

    pub fn spectrum<T: Real>(&self, shape: Shape) -> Result<ComplexTensor<T>> {
        ComplexTensor::from_parts(
            shape,
            self.re.iter().map(|&v| T::of(f64::from(v))).collect(),
            self.im.iter().map(|&v| T::of(f64::from(v))).collect(),
        )
    }
}

pub fn write_cache<W: Write>(mut out: W, header: &CacheHeader, entries: &[CacheEntry]) -> Result<()> {
    if entries.len() != header.count as usize {
        return Err(Error::Format {
            kind: "spectral cache",
            reason: format!("header announces {} samples, got {}", header.count, entries.len()),
        });
    }
    let n = header.values_per_part();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for v in [header.channels, header.patches, header.patch_height, header.patch_width] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&header.count.to_le_bytes())?;
    let mut buf = Vec::with_capacity(10 + 8 * n);
    for e in entries {
        if e.re.len() != n || e.im.len() != n {
            return Err(Error::Format {
                kind: "spectral cache",
                reason: format!("sample has {} values, expected {n}", e.re.len()),
            });
        }
        buf.clear();
        buf.extend_from_slice(&e.label.to_le_bytes());
        buf.extend_from_slice(&e.source_hash.to_le_bytes());
        for v in e.re.iter().chain(&e.im) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format {
            kind: "spectral cache",
            reason: "file is truncated".into(),
        }
    } else {
        Error::Io(e)
    }
}

pub fn read_header<R: Read>(input: &mut R) -> Result<CacheHeader> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            kind: "spectral cache",
            reason: format!("bad magic {magic:?}, expected \"FFCS\""),
        });
    }
    let version = read_u16(input).map_err(truncated)?;
    if version != VERSION {
        return Err(Error::Format {
            kind: "spectral cache",
            reason: format!("unsupported version {version}"),
        });
    }
    let mut f = [0u16; 4];
    for v in &mut f {
        *v = read_u16(input).map_err(truncated)?;
    }
    let count = read_u32(input).map_err(truncated)?;
    Ok(CacheHeader {
        channels: f[0],
        patches: f[1],
        patch_height: f[2],
        patch_width: f[3],
        count,
    })
}

pub fn read_cache<R: Read>(mut input: R) -> Result<(CacheHeader, Vec<CacheEntry>)> {
    let header = read_header(&mut input)?;
    let n = header.values_per_part();
    let mut entries = Vec::with_capacity(header.count as usize);
    let mut raw = vec![0u8; 8 * n];
    for _ in 0..header.count {
        let label = read_u16(&mut input).map_err(truncated)?;
        let source_hash = read_u64(&mut input).map_err(truncated)?;
        input.read_exact(&mut raw).map_err(truncated)?;
        let mut values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        let re: Vec<f32> = values.by_ref().take(n).collect();
        let im: Vec<f32> = values.collect();
        entries.push(CacheEntry {
            label,
            source_hash,
            re,
            im,
        });
    }
    Ok((header, entries))
}
