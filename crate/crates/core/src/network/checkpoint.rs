//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FFCW"            4 bytes
//! version           u16 = 1
//! entry count       u32
//! per entry:
//!   name length     u16
//!   name            UTF-8 bytes
//!   rank            u8
//!   dims            u32 each
//! then every tensor's values as f32, in entry order
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

use super::model::Model;

pub const MAGIC: &[u8; 4] = b"FFCW";
pub const VERSION: u16 = 1;
/// Tolerance of the gamma PSD check on load.
pub const GAMMA_PSD_TOLERANCE: f64 = -1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "checkpoint",
        reason: reason.into(),
    }
}

fn eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        format_err("file is truncated")
    } else {
        Error::Io(e)
    }
}

pub fn encode<T: Real>(model: &Model<T>) -> Result<Vec<u8>> {
    let state = model.state();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (name, t) in &state {
        let len = u16::try_from(name.len()).map_err(|_| format_err(format!("tensor name too long: {name}")))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape().rank() as u8);
        for &d in t.shape().dims() {
            let d = u32::try_from(d).map_err(|_| format_err(format!("dimension too large in {name}")))?;
            buf.extend_from_slice(&d.to_le_bytes());
        }
    }
    for (_, t) in &state {
        for v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode(model)?)?;
    out.flush()?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(eof)?;
    Ok(b)
}

pub fn read_manifest<R: Read>(r: &mut R) -> Result<Vec<ManifestEntry>> {
    if &read_exact::<4, _>(r)? != MAGIC {
        return Err(format_err("bad magic, not an FFCW checkpoint"));
    }
    let version = u16::from_le_bytes(read_exact(r)?);
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}, expected {VERSION}")));
    }
    let count = u32::from_le_bytes(read_exact(r)?);
    let mut entries = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(eof)?;
        let name = String::from_utf8(name).map_err(|_| format_err("tensor name is not UTF-8"))?;
        let rank = read_exact::<1, _>(r)?[0] as usize;
        let shape = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(read_exact(r)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        entries.push(ManifestEntry { name, shape });
    }
    Ok(entries)
}

fn mismatch_report<T: Real>(model: &Model<T>, found: &[ManifestEntry]) -> String {
    let mut s = String::from("checkpoint does not match the architecture\nexpected:\n");
    for (name, t) in model.state() {
        let _ = writeln!(s, "  {name} {}", t.shape());
    }
    s.push_str("found:\n");
    for e in found {
        let dims: Vec<String> = e.shape.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "  {} [{}]", e.name, dims.join("x"));
    }
    s
}

/// Overwrites every tensor of `model` from a checkpoint stream.
pub fn decode_into<T: Real, R: Read>(model: &mut Model<T>, r: &mut R) -> Result<()> {
    let manifest = read_manifest(r)?;
    let matches = {
        let state = model.state();
        state.len() == manifest.len()
            && state
                .iter()
                .zip(&manifest)
                .all(|((name, t), e)| *name == e.name && t.shape().dims() == e.shape.as_slice())
    };
    if !matches {
        return Err(Error::CheckpointMismatch(mismatch_report(model, &manifest)));
    }
    for (t, e) in model.state_mut().into_iter().zip(&manifest) {
        let n: usize = e.shape.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw).map_err(eof)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| T::of(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))))
            .collect();
        *t = Tensor::new(Shape::new(e.shape.clone())?, data)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes after the last tensor"));
    }
    model.check_gamma_psd(GAMMA_PSD_TOLERANCE)
}

pub fn load_checkpoint<T: Real>(model: &mut Model<T>, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    decode_into(model, &mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ArchitectureSpec;

    fn model(seed: u64) -> Model<f32> {
        Model::build(&ArchitectureSpec::mini(4), 16, seed).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ffcw");
        let mut m = model(1);
        m.stem.bn.running_mean.data_mut()[0] = 0.25;
        save_checkpoint(&m, &path).unwrap();
        let mut loaded = model(2);
        load_checkpoint(&mut loaded, &path).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(std::fs::read(&path).unwrap(), encode(&loaded).unwrap());
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model(0)).unwrap();
        assert_eq!(&bytes[..4], b"FFCW");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        assert_eq!(count, model(0).state().len());
        let name_len = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
        assert_eq!(&bytes[12..12 + name_len], b"stem.conv.kernel_re");
        assert_eq!(bytes[12 + name_len], 4);
    }

    #[test]
    fn mismatch_lists_shapes() {
        let bytes = encode(&model(0)).unwrap();
        let mut other = Model::<f32>::build(&ArchitectureSpec::mini(4), 4, 0).unwrap();
        let err = decode_into(&mut other, &mut bytes.as_slice()).unwrap_err().to_string();
        assert!(err.contains("expected:") && err.contains("[16x4x3x3]") && err.contains("[16x16x3x3]"), "{err}");
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&model(0)).unwrap();
        let mut m = model(0);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_into(&mut m, &mut bad.as_slice()).unwrap_err().to_string().contains("magic"));
        let short = &bytes[..bytes.len() - 3];
        assert!(decode_into(&mut m, &mut &short[..]).unwrap_err().to_string().contains("truncated"));
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_into(&mut m, &mut long.as_slice()).is_err());
    }

    #[test]
    fn rejects_non_psd_gamma() {
        let mut m = model(0);
        m.stem.bn.gamma.data_mut()[2] = 5.0;
        let bytes = encode(&m).unwrap();
        let mut target = model(0);
        assert!(decode_into(&mut target, &mut bytes.as_slice()).is_err());
    }
}
