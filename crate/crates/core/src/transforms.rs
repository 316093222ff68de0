//! Matricizations of monochromatic tensors, the sampling projector, and the
//! composed measurement operator `A = P_Ω S^H` with its adjoint.
//!
//! The acquisition layout is the [`Mode::SrcPair`] unfolding: receivers on
//! rows, sources on columns. Both unfoldings use the fastest-index-first
//! convention and are stored column-major, so the acquisition layout shares
//! its linear index with [`Tensor4`].

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::io::MaskGrid;
use crate::linalg::{CMatrix, C64};
use crate::volume::{Axis, SpatialDims, Tensor4};

/// Which spatial axes go on rows and columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// rows `(rx, ry)`, columns `(sx, sy)`: `row = rx + ry·n_rx`, `col = sx + sy·n_sx`.
    SrcPair,
    /// rows `(ry, sy)`, columns `(rx, sx)`: `row = ry + sy·n_ry`, `col = rx + sx·n_rx`.
    RecSrcX,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srcpair" | "src-pair" | "SrcPair" => Ok(Mode::SrcPair),
            "recsrcx" | "rec-src-x" | "RecSrcX" => Ok(Mode::RecSrcX),
            other => Err(Error::Config(format!("unknown matricization {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::SrcPair => "srcpair",
            Mode::RecSrcX => "recsrcx",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Matricization {
    pub mode: Mode,
    pub dims: SpatialDims,
}

impl Matricization {
    pub fn new(mode: Mode, dims: SpatialDims) -> Self {
        Self { mode, dims }
    }

    /// Plain `p × q` matrix viewed as a tensor with `ry = sy = 1`.
    pub fn plain(p: usize, q: usize) -> Self {
        Self::new(Mode::SrcPair, SpatialDims::new(p, 1, q, 1))
    }

    pub fn shape(&self) -> (usize, usize) {
        let d = self.dims;
        match self.mode {
            Mode::SrcPair => (d.rx * d.ry, d.sx * d.sy),
            Mode::RecSrcX => (d.ry * d.sy, d.rx * d.sx),
        }
    }

    #[inline]
    pub fn position(&self, rx: usize, ry: usize, sx: usize, sy: usize) -> (usize, usize) {
        let d = self.dims;
        match self.mode {
            Mode::SrcPair => (rx + ry * d.rx, sx + sy * d.sx),
            Mode::RecSrcX => (ry + sy * d.ry, rx + sx * d.rx),
        }
    }

    /// Column-major matrix offset of every tensor element, in tensor order.
    pub fn permutation(&self) -> Vec<usize> {
        let (p, _) = self.shape();
        (0..self.dims.len())
            .map(|i| {
                let (a, b, c, d) = self.dims.coords(i);
                let (r, col) = self.position(a, b, c, d);
                r + p * col
            })
            .collect()
    }
}

/// A monochromatic slice in a chosen matricization.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySlice {
    pub matricization: Matricization,
    pub freq_index: usize,
    pub freq_hz: f64,
    pub data: CMatrix,
}

impl FrequencySlice {
    pub fn from_tensor(t: &Tensor4, mode: Mode, freq_index: usize, freq_hz: f64) -> Self {
        let m = Matricization::new(mode, t.dims);
        Self {
            matricization: m,
            freq_index,
            freq_hz,
            data: unfold(t, &m),
        }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn to_tensor(&self) -> Result<Tensor4> {
        fold(&self.data, &self.matricization)
    }
}

pub fn unfold(t: &Tensor4, m: &Matricization) -> CMatrix {
    assert_eq!(t.dims, m.dims, "tensor extents do not match matricization");
    let (p, q) = m.shape();
    let mut out = CMatrix::zeros(p, q);
    let buf = out.as_mut_slice();
    for (v, off) in t.data.iter().zip(m.permutation()) {
        buf[off] = *v;
    }
    out
}

pub fn fold(x: &CMatrix, m: &Matricization) -> Result<Tensor4> {
    let (p, q) = m.shape();
    if x.shape() != (p, q) {
        return Err(Error::ShapeMismatch {
            expected: format!("{p}x{q}"),
            got: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    let src = x.as_slice();
    Ok(Tensor4 {
        dims: m.dims,
        data: m.permutation().into_iter().map(|off| src[off]).collect(),
    })
}

/// Unfold a tensor given with explicit axis labels (any order) after checking
/// that exactly the four spatial axes are present.
pub fn unfold_labelled(axes: &[Axis], t: &Tensor4, mode: Mode) -> Result<CMatrix> {
    let mut sorted = axes.to_vec();
    sorted.sort_by_key(|a| a.code());
    if sorted != Axis::SPATIAL {
        return Err(Error::Structure(format!(
            "unfold needs axes {{rx, ry, sx, sy}}, got {axes:?}"
        )));
    }
    Ok(unfold(t, &Matricization::new(mode, t.dims)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Full,
    Uniform,
    Jittered,
}

/// Which structural axis a mask decimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decimated {
    Entries,
    Sources,
    Receivers,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskMeta {
    pub scheme: Scheme,
    pub keep_fraction: f64,
    pub decimated: Decimated,
}

/// Observed set Ω over the acquisition grid, stored in [`Tensor4`] order
/// (equivalently, column-major acquisition layout).
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    dims: SpatialDims,
    observed: Vec<bool>,
    meta: Option<MaskMeta>,
}

impl SamplingMask {
    pub fn new(dims: SpatialDims, observed: Vec<bool>, meta: Option<MaskMeta>) -> Result<Self> {
        if observed.len() != dims.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} grid points", dims.len()),
                got: format!("{}", observed.len()),
            });
        }
        if !observed.iter().any(|&b| b) {
            return Err(Error::InvalidParameter("mask observes no entries".into()));
        }
        Ok(Self { dims, observed, meta })
    }

    pub fn full(dims: SpatialDims) -> Self {
        Self {
            dims,
            observed: vec![true; dims.len()],
            meta: Some(MaskMeta {
                scheme: Scheme::Full,
                keep_fraction: 1.0,
                decimated: Decimated::Entries,
            }),
        }
    }

    /// Mask over a plain `p × q` matrix (column-major flags).
    pub fn plain(p: usize, q: usize, observed: Vec<bool>, meta: Option<MaskMeta>) -> Result<Self> {
        Self::new(SpatialDims::new(p, 1, q, 1), observed, meta)
    }

    pub fn dims(&self) -> SpatialDims {
        self.dims
    }

    pub fn meta(&self) -> Option<&MaskMeta> {
        self.meta.as_ref()
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn is_observed(&self, rx: usize, ry: usize, sx: usize, sy: usize) -> bool {
        self.observed[self.dims.index(rx, ry, sx, sy)]
    }

    /// `(rows, cols)` of the acquisition layout.
    pub fn shape(&self) -> (usize, usize) {
        (self.dims.receivers(), self.dims.sources())
    }

    pub fn to_grid(&self) -> MaskGrid {
        // LRM1 is row-major in declared order; declare axes slowest-first so
        // the payload matches the internal rx-fastest order.
        MaskGrid {
            axes: vec![Axis::Sy, Axis::Sx, Axis::Ry, Axis::Rx],
            dims: vec![self.dims.sy, self.dims.sx, self.dims.ry, self.dims.rx],
            observed: self.observed.clone(),
        }
    }

    pub fn from_grid(grid: &MaskGrid) -> Result<Self> {
        let mut sorted = grid.axes.clone();
        sorted.sort_by_key(|a| a.code());
        if sorted != Axis::SPATIAL {
            return Err(Error::Structure(format!(
                "mask must cover exactly rx, ry, sx, sy; got {:?}",
                grid.axes
            )));
        }
        let ext = |a: Axis| grid.dims[grid.axes.iter().position(|x| *x == a).expect("present")];
        let dims = SpatialDims::new(ext(Axis::Rx), ext(Axis::Ry), ext(Axis::Sx), ext(Axis::Sy));
        let mut strides = vec![1usize; grid.dims.len()];
        for i in (0..grid.dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * grid.dims[i + 1];
        }
        let st = |a: Axis| strides[grid.axes.iter().position(|x| *x == a).expect("present")];
        let observed = (0..dims.len())
            .map(|i| {
                let (a, b, c, d) = dims.coords(i);
                grid.observed[a * st(Axis::Rx) + b * st(Axis::Ry) + c * st(Axis::Sx) + d * st(Axis::Sy)]
            })
            .collect();
        Self::new(dims, observed, None)
    }
}

/// `P_Ω`: zero every entry of an acquisition-layout matrix outside Ω.
pub fn apply_sampling(mask: &SamplingMask, data: &CMatrix) -> Result<CMatrix> {
    let shape = mask.shape();
    if data.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", shape.0, shape.1),
            got: format!("{}x{}", data.nrows(), data.ncols()),
        });
    }
    let mut out = data.clone();
    for (v, &keep) in out.as_mut_slice().iter_mut().zip(&mask.observed) {
        if !keep {
            *v = C64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    /// Column-major offset in the acquisition layout.
    acq: usize,
    /// Position in the (untransposed) factor-domain matricization.
    row: usize,
    col: usize,
}

/// `A = P_Ω S^H : C^{p×q} → C^{n×m}` for a fixed mask and matricization.
///
/// Data-domain vectors supported on Ω are also handled compactly as
/// `Vec<C64>` in the order of [`MeasurementOp::observed_offsets`].
#[derive(Clone, Debug)]
pub struct MeasurementOp {
    mask: Arc<SamplingMask>,
    matricization: Matricization,
    entries: Arc<Vec<Entry>>,
    transposed: bool,
}

impl MeasurementOp {
    pub fn new(mask: SamplingMask, mode: Mode) -> Self {
        let mat = Matricization::new(mode, mask.dims());
        let perm = mat.permutation();
        let (p, _) = mat.shape();
        let entries = mask
            .observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| Entry {
                acq: i,
                row: perm[i] % p,
                col: perm[i] / p,
            })
            .collect();
        Self {
            mask: Arc::new(mask),
            matricization: mat,
            entries: Arc::new(entries),
            transposed: false,
        }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn matricization(&self) -> &Matricization {
        &self.matricization
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// The operator `Z ↦ A(Z^H)`. Lets the same factor solver handle both
    /// `L ↦ A(L R^H)` and `R ↦ A(L R^H)`.
    pub fn conj_transposed(&self) -> Self {
        Self {
            transposed: !self.transposed,
            ..self.clone()
        }
    }

    pub fn data_shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn factor_shape(&self) -> (usize, usize) {
        let (p, q) = self.matricization.shape();
        if self.transposed {
            (q, p)
        } else {
            (p, q)
        }
    }

    pub fn observed_count(&self) -> usize {
        self.entries.len()
    }

    pub fn observed_offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.acq)
    }

    fn check_factor(&self, z: &CMatrix) -> Result<()> {
        let (p, q) = self.factor_shape();
        if z.shape() != (p, q) {
            return Err(Error::ShapeMismatch {
                expected: format!("{p}x{q}"),
                got: format!("{}x{}", z.nrows(), z.ncols()),
            });
        }
        Ok(())
    }

    fn check_data(&self, w: &CMatrix) -> Result<()> {
        let (n, m) = self.data_shape();
        if w.shape() != (n, m) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{m}"),
                got: format!("{}x{}", w.nrows(), w.ncols()),
            });
        }
        Ok(())
    }

    /// `S^H`: factor-domain matrix to acquisition layout, no sampling.
    pub fn to_acquisition(&self, z: &CMatrix) -> Result<CMatrix> {
        self.check_factor(z)?;
        let base = if self.transposed { z.adjoint() } else { z.clone() };
        let t = fold(&base, &self.matricization)?;
        Ok(unfold(&t, &Matricization::new(Mode::SrcPair, t.dims)))
    }

    /// `S`: acquisition layout to factor domain.
    pub fn to_factor_domain(&self, w: &CMatrix) -> Result<CMatrix> {
        self.check_data(w)?;
        let t = fold(w, &Matricization::new(Mode::SrcPair, self.mask.dims()))?;
        let z = unfold(&t, &self.matricization);
        Ok(if self.transposed { z.adjoint() } else { z })
    }

    /// `A(Z) = P_Ω S^H Z`.
    pub fn measure(&self, z: &CMatrix) -> Result<CMatrix> {
        apply_sampling(&self.mask, &self.to_acquisition(z)?)
    }

    /// `A^*(W) = S P_Ω W`.
    pub fn measure_adjoint(&self, w: &CMatrix) -> Result<CMatrix> {
        self.to_factor_domain(&apply_sampling(&self.mask, w)?)
    }

    /// Observed entries of a data-domain matrix, in operator order.
    pub fn gather(&self, w: &CMatrix) -> Result<Vec<C64>> {
        self.check_data(w)?;
        let s = w.as_slice();
        Ok(self.entries.iter().map(|e| s[e.acq]).collect())
    }

    /// Inverse of [`MeasurementOp::gather`]; zero off Ω.
    pub fn scatter(&self, v: &[C64]) -> CMatrix {
        let (n, m) = self.data_shape();
        let mut out = CMatrix::zeros(n, m);
        let s = out.as_mut_slice();
        for (e, x) in self.entries.iter().zip(v) {
            s[e.acq] = *x;
        }
        out
    }

    /// True when `w` vanishes outside Ω.
    pub fn supported_on_mask(&self, w: &CMatrix) -> bool {
        w.as_slice()
            .iter()
            .zip(self.mask.observed())
            .all(|(v, &o)| o || *v == C64::new(0.0, 0.0))
    }

    #[inline]
    fn oriented(&self, e: &Entry) -> (usize, usize) {
        if self.transposed {
            (e.col, e.row)
        } else {
            (e.row, e.col)
        }
    }

    /// Lifted forward map `V ↦ A(V F^H)` restricted to Ω, never forming the
    /// `p × q` product.
    pub fn apply_factor(&self, v: &CMatrix, fixed: &CMatrix) -> Vec<C64> {
        let r = v.ncols();
        debug_assert_eq!(fixed.ncols(), r);
        // rows of v and fixed contiguous
        let vt = v.transpose();
        let ft = fixed.transpose();
        let (vs, fs) = (vt.as_slice(), ft.as_slice());
        self.entries
            .iter()
            .map(|e| {
                let (i, j) = self.oriented(e);
                let vi = &vs[i * r..(i + 1) * r];
                let fj = &fs[j * r..(j + 1) * r];
                let acc: C64 = vi.iter().zip(fj).map(|(a, b)| a * b.conj()).sum();
                if self.transposed {
                    acc.conj()
                } else {
                    acc
                }
            })
            .collect()
    }

    /// Adjoint of [`MeasurementOp::apply_factor`]: `y ↦ A^*(y) F`.
    pub fn adjoint_factor(&self, y: &[C64], fixed: &CMatrix) -> CMatrix {
        let r = fixed.ncols();
        let (p, _) = self.factor_shape();
        let ft = fixed.transpose();
        let fs = ft.as_slice();
        let mut out = vec![C64::new(0.0, 0.0); p * r];
        for (e, &ye) in self.entries.iter().zip(y) {
            let (i, j) = self.oriented(e);
            let w = if self.transposed { ye.conj() } else { ye };
            let oi = &mut out[i * r..(i + 1) * r];
            for (o, f) in oi.iter_mut().zip(&fs[j * r..(j + 1) * r]) {
                *o += w * f;
            }
        }
        // out is row-major p×r
        CMatrix::from_row_slice(p, r, &out)
    }
}

/// Singular values sorted descending and divided by the largest.
pub fn singular_decay(x: &CMatrix) -> Result<Vec<f64>> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut s: Vec<f64> = SVD::new(x.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let top = s[0];
    if top > 0.0 {
        s.iter_mut().for_each(|v| *v /= top);
    }
    Ok(s)
}

/// Fraction of the nuclear norm carried by the `k` largest singular values.
pub fn top_fraction(decay: &[f64], k: usize) -> f64 {
    let total: f64 = decay.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    decay.iter().take(k).sum::<f64>() / total
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(x: &CMatrix, rel_tol: f64) -> usize {
    if x.nrows() == 0 || x.ncols() == 0 {
        return 0;
    }
    let s = SVD::new(x.clone(), false, false).singular_values;
    let top = s.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * top).count()
}

pub fn write_decay_csv(path: impl AsRef<Path>, decay: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,sigma_normalized")?;
    for (i, v) in decay.iter().enumerate() {
        writeln!(f, "{i},{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob, gaussian_matrix, inner, rng};

    fn counting_tensor() -> Tensor4 {
        let dims = SpatialDims::new(2, 2, 2, 2);
        Tensor4::from_fn(dims, |rx, ry, sx, sy| C64::new((rx + 2 * ry + 4 * sx + 8 * sy) as f64, 0.0))
    }

    #[test]
    fn srcpair_index_map() {
        let t = counting_tensor();
        let m = unfold(&t, &Matricization::new(Mode::SrcPair, t.dims));
        assert_eq!(m[(3, 3)], C64::new(15.0, 0.0));
        // enumerate the whole map by hand-derived formula
        for rx in 0..2 {
            for ry in 0..2 {
                for sx in 0..2 {
                    for sy in 0..2 {
                        let v = (rx + 2 * ry + 4 * sx + 8 * sy) as f64;
                        assert_eq!(m[(rx + 2 * ry, sx + 2 * sy)].re, v);
                    }
                }
            }
        }
        let m = unfold(&t, &Matricization::new(Mode::RecSrcX, t.dims));
        // row = ry + 2 sy, col = rx + 2 sx; entry (row 1, col 2) ⇒ ry=1, sy=0, rx=0, sx=1
        assert_eq!(m[(1, 2)].re, 0.0 + 2.0 + 4.0);
    }

    #[test]
    fn fold_unfold_roundtrip_and_norm() {
        let mut r = rng(4);
        let dims = SpatialDims::new(3, 2, 4, 5);
        let t = Tensor4::from_fn(dims, |_, _, _, _| crate::linalg::complex_normal(&mut r));
        for mode in [Mode::SrcPair, Mode::RecSrcX] {
            let mat = Matricization::new(mode, dims);
            let m = unfold(&t, &mat);
            assert_eq!(m.shape(), mat.shape());
            assert_eq!(fold(&m, &mat).unwrap(), t);
            assert!((frob(&m) - t.norm()).abs() <= 1e-14 * t.norm());
            let key = |v: &C64| (v.re.to_bits(), v.im.to_bits());
            let mut a: Vec<_> = m.iter().map(key).collect();
            let mut b: Vec<_> = t.data.iter().map(key).collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn labelled_unfold_checks_axes() {
        let t = counting_tensor();
        assert!(unfold_labelled(&[Axis::Sy, Axis::Rx, Axis::Sx, Axis::Ry], &t, Mode::SrcPair).is_ok());
        assert!(matches!(
            unfold_labelled(&[Axis::T, Axis::Rx, Axis::Sx, Axis::Ry], &t, Mode::SrcPair),
            Err(Error::Structure(_))
        ));
    }

    fn source_mask(dims: SpatialDims, keep: &[bool]) -> SamplingMask {
        let obs = (0..dims.len())
            .map(|i| {
                let (_, _, sx, sy) = dims.coords(i);
                keep[sx + sy * dims.sx]
            })
            .collect();
        SamplingMask::new(dims, obs, None).unwrap()
    }

    #[test]
    fn sampling_projector() {
        let dims = SpatialDims::new(2, 3, 2, 2);
        let mut r = rng(5);
        let x = gaussian_matrix(6, 4, &mut r);
        let y = gaussian_matrix(6, 4, &mut r);
        let full = SamplingMask::full(dims);
        assert_eq!(apply_sampling(&full, &x).unwrap(), x);

        let mask = source_mask(dims, &[true, false, true, false]);
        let px = apply_sampling(&mask, &x).unwrap();
        assert!(px.column(1).iter().all(|v| v.norm() == 0.0));
        assert!(px.column(3).iter().all(|v| v.norm() == 0.0));
        assert_eq!(apply_sampling(&mask, &px).unwrap(), px);
        let lhs = inner(&px, &y);
        let rhs = inner(&x, &apply_sampling(&mask, &y).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        assert!(apply_sampling(&mask, &CMatrix::zeros(4, 6)).is_err());
    }

    #[test]
    fn measurement_adjoint_both_modes_and_transposed() {
        let dims = SpatialDims::new(3, 2, 2, 3);
        let mut r = rng(6);
        let obs: Vec<bool> = (0..dims.len()).map(|i| i % 3 != 1).collect();
        let mask = SamplingMask::new(dims, obs, None).unwrap();
        for mode in [Mode::SrcPair, Mode::RecSrcX] {
            let base = MeasurementOp::new(mask.clone(), mode);
            for op in [base.clone(), base.conj_transposed()] {
                let (p, q) = op.factor_shape();
                let (n, m) = op.data_shape();
                let z = gaussian_matrix(p, q, &mut r);
                let w = gaussian_matrix(n, m, &mut r);
                let lhs = inner(&op.measure(&z).unwrap(), &w);
                let rhs = inner(&z, &op.measure_adjoint(&w).unwrap());
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{mode:?}");

                // lifted map agrees with the dense path
                let rank = 2;
                let v = gaussian_matrix(p, rank, &mut r);
                let f = gaussian_matrix(q, rank, &mut r);
                let dense = op.measure(&(&v * f.adjoint())).unwrap();
                let lifted = op.scatter(&op.apply_factor(&v, &f));
                assert!(frob(&(dense - lifted)) < 1e-12);
                let yv = op.gather(&w).unwrap();
                let dense_adj = op.measure_adjoint(&w).unwrap() * &f;
                let lifted_adj = op.adjoint_factor(&yv, &f);
                assert!(frob(&(dense_adj - lifted_adj)) < 1e-12);
            }
        }
    }

    #[test]
    fn full_mask_measurement_is_unitary() {
        let dims = SpatialDims::new(2, 3, 3, 2);
        let mut r = rng(7);
        let op = MeasurementOp::new(SamplingMask::full(dims), Mode::RecSrcX);
        let (p, q) = op.factor_shape();
        let z = gaussian_matrix(p, q, &mut r);
        let back = op.measure_adjoint(&op.measure(&z).unwrap()).unwrap();
        assert!(frob(&(back - &z)) < 1e-15);
    }

    #[test]
    fn measurement_shape_errors() {
        let op = MeasurementOp::new(SamplingMask::full(SpatialDims::new(2, 2, 2, 1)), Mode::RecSrcX);
        assert!(op.measure(&CMatrix::zeros(3, 3)).is_err());
        assert!(op.measure_adjoint(&CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn decay_edge_cases() {
        let mut r = rng(8);
        let u = gaussian_matrix(6, 1, &mut r);
        let v = gaussian_matrix(4, 1, &mut r);
        let d = singular_decay(&(&u * v.adjoint())).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!(d[1..].iter().all(|x| x.abs() < 1e-12));

        let q = nalgebra::linalg::QR::new(gaussian_matrix(5, 5, &mut r)).q();
        assert!(singular_decay(&q).unwrap().iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(matches!(singular_decay(&CMatrix::zeros(0, 3)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn mask_grid_roundtrip() {
        let dims = SpatialDims::new(2, 3, 2, 2);
        let mask = source_mask(dims, &[true, false, false, true]);
        let grid = mask.to_grid();
        assert_eq!(SamplingMask::from_grid(&grid).unwrap().observed(), mask.observed());
        // a grid declared in another order decodes to the same flags
        let mut g2 = crate::io::MaskGrid {
            axes: vec![Axis::Rx, Axis::Ry, Axis::Sx, Axis::Sy],
            dims: vec![2, 3, 2, 2],
            observed: vec![false; 24],
        };
        for rx in 0..2 {
            for ry in 0..3 {
                for sx in 0..2 {
                    for sy in 0..2 {
                        g2.observed[((rx * 3 + ry) * 2 + sx) * 2 + sy] = mask.is_observed(rx, ry, sx, sy);
                    }
                }
            }
        }
        assert_eq!(SamplingMask::from_grid(&g2).unwrap().observed(), mask.observed());
    }
}
