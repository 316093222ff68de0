//! Axis-labelled dense complex volumes and the monochromatic 4D tensors cut
//! from them.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Axis label. The discriminant is the on-disk axis code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Axis {
    T = 0,
    F = 1,
    Rx = 2,
    Ry = 3,
    Sx = 4,
    Sy = 5,
}

impl Axis {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Axis::T,
            1 => Axis::F,
            2 => Axis::Rx,
            3 => Axis::Ry,
            4 => Axis::Sx,
            5 => Axis::Sy,
            other => return Err(Error::UnknownAxisCode(other)),
        })
    }

    pub const SPATIAL: [Axis; 4] = [Axis::Rx, Axis::Ry, Axis::Sx, Axis::Sy];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::T => "t",
            Axis::F => "f",
            Axis::Rx => "rx",
            Axis::Ry => "ry",
            Axis::Sx => "sx",
            Axis::Sy => "sy",
        };
        f.write_str(s)
    }
}

/// Extents of the four acquisition axes `(rx, ry, sx, sy)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpatialDims {
    pub rx: usize,
    pub ry: usize,
    pub sx: usize,
    pub sy: usize,
}

impl SpatialDims {
    pub fn new(rx: usize, ry: usize, sx: usize, sy: usize) -> Self {
        Self { rx, ry, sx, sy }
    }

    pub fn len(&self) -> usize {
        self.rx * self.ry * self.sx * self.sy
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn receivers(&self) -> usize {
        self.rx * self.ry
    }

    pub fn sources(&self) -> usize {
        self.sx * self.sy
    }

    pub fn extent(&self, axis: Axis) -> Option<usize> {
        match axis {
            Axis::Rx => Some(self.rx),
            Axis::Ry => Some(self.ry),
            Axis::Sx => Some(self.sx),
            Axis::Sy => Some(self.sy),
            _ => None,
        }
    }

    /// Linear index with `rx` fastest, then `ry`, `sx`, `sy`.
    #[inline]
    pub fn index(&self, rx: usize, ry: usize, sx: usize, sy: usize) -> usize {
        rx + self.rx * (ry + self.ry * (sx + self.sx * sy))
    }

    #[inline]
    pub fn coords(&self, mut idx: usize) -> (usize, usize, usize, usize) {
        let rx = idx % self.rx;
        idx /= self.rx;
        let ry = idx % self.ry;
        idx /= self.ry;
        let sx = idx % self.sx;
        (rx, ry, sx, idx / self.sx)
    }
}

/// One monochromatic slice as a 4D tensor `T[rx, ry, sx, sy]`, stored with
/// `rx` fastest (see [`SpatialDims::index`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    pub dims: SpatialDims,
    pub data: Vec<C64>,
}

impl Tensor4 {
    pub fn zeros(dims: SpatialDims) -> Self {
        Self {
            dims,
            data: vec![C64::new(0.0, 0.0); dims.len()],
        }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize, usize) -> C64>(dims: SpatialDims, mut f: F) -> Self {
        let data = (0..dims.len())
            .map(|i| {
                let (a, b, c, d) = dims.coords(i);
                f(a, b, c, d)
            })
            .collect();
        Self { dims, data }
    }

    #[inline]
    pub fn get(&self, rx: usize, ry: usize, sx: usize, sy: usize) -> C64 {
        self.data[self.dims.index(rx, ry, sx, sy)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Dense complex N-dimensional array, row-major in the declared axis order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVolume {
    axes: Vec<Axis>,
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexVolume {
    pub fn new(axes: Vec<Axis>, dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if axes.len() != dims.len() {
            return Err(Error::Structure(format!(
                "{} axis labels for {} extents",
                axes.len(),
                dims.len()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::Structure(format!("duplicate axis {a}")));
            }
        }
        let spectral = axes.iter().filter(|a| matches!(a, Axis::T | Axis::F)).count();
        if spectral != 1 {
            return Err(Error::Structure(
                "exactly one of the t or f axes must be present".into(),
            ));
        }
        let n = checked_len(&dims)?;
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} scalars"),
                got: format!("{}", data.len()),
            });
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("volume data"));
        }
        Ok(Self { axes, dims, data })
    }

    pub fn zeros(axes: Vec<Axis>, dims: Vec<usize>) -> Result<Self> {
        let n = checked_len(&dims)?;
        Self::new(axes, dims, vec![C64::new(0.0, 0.0); n])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn position(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|a| *a == axis)
    }

    pub fn extent(&self, axis: Axis) -> Option<usize> {
        self.position(axis).map(|i| self.dims[i])
    }

    /// Row-major strides in the declared order.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The single spectral axis (`t` or `f`).
    pub fn spectral_axis(&self) -> Axis {
        *self
            .axes
            .iter()
            .find(|a| matches!(a, Axis::T | Axis::F))
            .expect("validated at construction")
    }

    /// Extents of the four acquisition axes; the volume must have exactly
    /// those plus one spectral axis.
    pub fn spatial_dims(&self) -> Result<SpatialDims> {
        let get = |a: Axis| {
            self.extent(a)
                .ok_or_else(|| Error::Structure(format!("volume has no {a} axis")))
        };
        if self.axes.len() != 5 {
            return Err(Error::Structure(format!(
                "expected 5 axes (four spatial + t/f), found {}",
                self.axes.len()
            )));
        }
        Ok(SpatialDims::new(
            get(Axis::Rx)?,
            get(Axis::Ry)?,
            get(Axis::Sx)?,
            get(Axis::Sy)?,
        ))
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub(crate) fn relabel(&mut self, from: Axis, to: Axis) {
        if let Some(i) = self.position(from) {
            self.axes[i] = to;
        }
    }

    /// Offsets (into `data`) of every element of a 4D slice at spectral index
    /// `k`, in [`SpatialDims::index`] order.
    fn slice_offsets(&self, k: usize) -> Result<(SpatialDims, Vec<usize>)> {
        let dims = self.spatial_dims()?;
        let strides = self.strides();
        let st = |a: Axis| strides[self.position(a).expect("spatial axis")];
        let spec_pos = self.position(self.spectral_axis()).expect("spectral axis");
        if k >= self.dims[spec_pos] {
            return Err(Error::InvalidParameter(format!(
                "bin {k} out of range {}",
                self.dims[spec_pos]
            )));
        }
        let base = k * strides[spec_pos];
        let (srx, sry, ssx, ssy) = (st(Axis::Rx), st(Axis::Ry), st(Axis::Sx), st(Axis::Sy));
        let offsets = (0..dims.len())
            .map(|i| {
                let (a, b, c, d) = dims.coords(i);
                base + a * srx + b * sry + c * ssx + d * ssy
            })
            .collect();
        Ok((dims, offsets))
    }

    /// Cut the 4D tensor at spectral index `k`.
    pub fn slice(&self, k: usize) -> Result<Tensor4> {
        let (dims, offsets) = self.slice_offsets(k)?;
        Ok(Tensor4 {
            dims,
            data: offsets.iter().map(|&o| self.data[o]).collect(),
        })
    }

    pub fn set_slice(&mut self, k: usize, t: &Tensor4) -> Result<()> {
        let (dims, offsets) = self.slice_offsets(k)?;
        if dims != t.dims {
            return Err(Error::ShapeMismatch {
                expected: format!("{dims:?}"),
                got: format!("{:?}", t.dims),
            });
        }
        if !t.data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite("slice data"));
        }
        for (o, v) in offsets.into_iter().zip(&t.data) {
            self.data[o] = *v;
        }
        Ok(())
    }
}

pub(crate) fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::DimsOverflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(ComplexVolume::zeros(vec![Axis::Rx, Axis::Rx, Axis::T], vec![1, 1, 1]).is_err());
        assert!(ComplexVolume::zeros(vec![Axis::Rx], vec![2]).is_err());
        assert!(ComplexVolume::zeros(vec![Axis::T, Axis::F], vec![2, 2]).is_err());
        assert!(ComplexVolume::new(vec![Axis::T], vec![3], vec![c(0.0); 2]).is_err());
        assert!(ComplexVolume::new(vec![Axis::T], vec![1], vec![c(f64::NAN)]).is_err());
    }

    #[test]
    fn slice_roundtrip_any_axis_order() {
        let axes = vec![Axis::Sy, Axis::T, Axis::Rx, Axis::Sx, Axis::Ry];
        let dims = vec![2, 3, 4, 2, 3];
        let n: usize = dims.iter().product();
        let data = (0..n).map(|i| c(i as f64)).collect();
        let vol = ComplexVolume::new(axes, dims, data).unwrap();
        let mut out = ComplexVolume::zeros(vol.axes().to_vec(), vol.dims().to_vec()).unwrap();
        for k in 0..3 {
            let s = vol.slice(k).unwrap();
            assert_eq!(s.dims, SpatialDims::new(4, 3, 2, 2));
            out.set_slice(k, &s).unwrap();
        }
        assert_eq!(out, vol);
        // spot-check one element through explicit strides
        let s = vol.slice(1).unwrap();
        let strides = vol.strides();
        let off = strides[0] + strides[1] + 3 * strides[2] + 2 * strides[4];
        assert_eq!(s.get(3, 2, 0, 1), vol.data()[off]);
    }
}
