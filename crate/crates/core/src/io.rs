//! Binary volume (`LRV1`) and mask (`LRM1`) files.
//!
//! Volume layout: magic `LRV1`, version byte (1), scalar code (0 = complex
//! f64, 1 = complex f32), axis count `A`, `A` axis codes, `A` little-endian
//! u64 extents, then interleaved little-endian `(re, im)` pairs in row-major
//! order of the declared axes. Masks use magic `LRM1`, omit the scalar code,
//! and store one byte per grid point (1 = observed).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::volume::{checked_len, Axis, ComplexVolume};

pub const VOLUME_MAGIC: [u8; 4] = *b"LRV1";
pub const MASK_MAGIC: [u8; 4] = *b"LRM1";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    fn code(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Precision::F64),
            1 => Ok(Precision::F32),
            other => Err(Error::UnknownScalarCode(other)),
        }
    }

    fn scalar_bytes(self) -> usize {
        match self {
            Precision::F64 => 16,
            Precision::F32 => 8,
        }
    }
}

/// Mask grid as stored on disk: labelled axes plus one flag per point in
/// row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskGrid {
    pub axes: Vec<Axis>,
    pub dims: Vec<usize>,
    pub observed: Vec<bool>,
}

pub fn encode_volume(vol: &ComplexVolume, precision: Precision) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 9 * vol.axes().len() + vol.len() * precision.scalar_bytes());
    out.extend_from_slice(&VOLUME_MAGIC);
    out.push(VERSION);
    out.push(precision.code());
    write_axes(&mut out, vol.axes(), vol.dims());
    for v in vol.data() {
        match precision {
            Precision::F64 => {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
            Precision::F32 => {
                out.extend_from_slice(&(v.re as f32).to_le_bytes());
                out.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<ComplexVolume> {
    let mut cur = Cursor::new(bytes);
    cur.magic(VOLUME_MAGIC)?;
    cur.version()?;
    let precision = Precision::from_code(cur.byte()?)?;
    let (axes, dims) = cur.axes()?;
    let n = checked_len(&dims)?;
    let need = n
        .checked_mul(precision.scalar_bytes())
        .ok_or(Error::DimsOverflow)?;
    let payload = cur.payload(need)?;
    let data = match precision {
        Precision::F64 => payload
            .chunks_exact(16)
            .map(|c| C64::new(f64_at(c, 0), f64_at(c, 8)))
            .collect(),
        Precision::F32 => payload
            .chunks_exact(8)
            .map(|c| C64::new(f32_at(c, 0) as f64, f32_at(c, 4) as f64))
            .collect(),
    };
    ComplexVolume::new(axes, dims, data)
}

pub fn write_volume(vol: &ComplexVolume, path: impl AsRef<Path>) -> Result<()> {
    write_volume_as(vol, path, Precision::F64)
}

pub fn write_volume_as(vol: &ComplexVolume, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    fs::write(path, encode_volume(vol, precision))?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<ComplexVolume> {
    decode_volume(&fs::read(path)?)
}

pub fn encode_mask(grid: &MaskGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 9 * grid.axes.len() + grid.observed.len());
    out.extend_from_slice(&MASK_MAGIC);
    out.push(VERSION);
    write_axes(&mut out, &grid.axes, &grid.dims);
    out.extend(grid.observed.iter().map(|&b| b as u8));
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<MaskGrid> {
    let mut cur = Cursor::new(bytes);
    cur.magic(MASK_MAGIC)?;
    cur.version()?;
    let (axes, dims) = cur.axes()?;
    let n = checked_len(&dims)?;
    let payload = cur.payload(n)?;
    let observed = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Structure(format!("mask byte {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskGrid { axes, dims, observed })
}

pub fn write_mask(grid: &MaskGrid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_mask(grid))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskGrid> {
    decode_mask(&fs::read(path)?)
}

fn write_axes(out: &mut Vec<u8>, axes: &[Axis], dims: &[usize]) {
    out.push(axes.len() as u8);
    out.extend(axes.iter().map(|a| a.code()));
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
}

fn f64_at(c: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(c[at..at + 8].try_into().expect("8 bytes"))
}

fn f32_at(c: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(c[at..at + 4].try_into().expect("4 bytes"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::DimsOverflow)?;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        match self.byte()? {
            VERSION => Ok(()),
            v => Err(Error::UnsupportedVersion(v)),
        }
    }

    fn axes(&mut self) -> Result<(Vec<Axis>, Vec<usize>)> {
        let count = self.byte()? as usize;
        let axes = self
            .take(count)?
            .iter()
            .map(|&c| Axis::from_code(c))
            .collect::<Result<Vec<_>>>()?;
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
            dims.push(usize::try_from(raw).map_err(|_| Error::DimsOverflow)?);
        }
        Ok((axes, dims))
    }

    /// Exactly `n` remaining bytes.
    fn payload(&mut self, n: usize) -> Result<&'a [u8]> {
        let rest = self.bytes.len() - self.pos;
        if rest < n {
            return Err(Error::Truncated {
                expected: n,
                found: rest,
            });
        }
        if rest > n {
            return Err(Error::Structure(format!("{} trailing bytes after payload", rest - n)));
        }
        self.take(n)
    }
}
