//! Unitary DFT along the spectral axis of a volume.

use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::volume::{Axis, ComplexVolume};

/// Forward DFT over the `t` axis with `1/√N` scaling; the axis becomes `f`.
pub fn dft_time_axis(vol: &ComplexVolume) -> Result<ComplexVolume> {
    transform(vol, Axis::T, Axis::F, FftDirection::Forward)
}

/// Inverse of [`dft_time_axis`]; the `f` axis becomes `t`.
pub fn idft_freq_axis(vol: &ComplexVolume) -> Result<ComplexVolume> {
    transform(vol, Axis::F, Axis::T, FftDirection::Inverse)
}

fn transform(vol: &ComplexVolume, from: Axis, to: Axis, dir: FftDirection) -> Result<ComplexVolume> {
    let pos = vol
        .position(from)
        .ok_or_else(|| Error::Structure(format!("volume has no {from} axis")))?;
    let n = vol.dims()[pos];
    if n == 0 {
        return Err(Error::Structure(format!("{from} axis has zero extent")));
    }
    let stride = vol.strides()[pos];
    let outer = vol.len() / (n * stride);
    let fft = FftPlanner::<f64>::new().plan_fft(n, dir);
    let scale = 1.0 / (n as f64).sqrt();

    let mut out = vol.clone();
    let data = out.data_mut();
    let mut line = vec![C64::new(0.0, 0.0); n];
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * n * stride + inner;
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (i, v) in line.iter().enumerate() {
                data[base + i * stride] = v * scale;
            }
        }
    }
    out.relabel(from, to);
    Ok(out)
}

/// Frequency in Hz of bin `k` for `n` samples at interval `dt`.
pub fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    k as f64 / (n as f64 * dt)
}
