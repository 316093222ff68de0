//! Observation masks: fixed-cardinality uniform entry sampling and jittered
//! removal of whole sources or receivers.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::rng;
use crate::transforms::{Decimated, MaskMeta, SamplingMask, Scheme};
use crate::volume::SpatialDims;

/// One-dimensional jitter: split `len` points into bins of width
/// `round(1/keep)` and keep one uniformly chosen point per bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterSpec {
    pub len: usize,
    pub keep: f64,
    pub seed: u64,
}

impl JitterSpec {
    pub fn new(len: usize, keep: f64, seed: u64) -> Result<Self> {
        check_fraction(keep)?;
        Ok(Self { len, keep, seed })
    }

    pub fn bin_width(&self) -> usize {
        ((1.0 / self.keep).round() as usize).max(1)
    }
}

fn check_fraction(keep: f64) -> Result<()> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep fraction must lie in (0, 1], got {keep}"
        )));
    }
    Ok(())
}

/// Sorted kept indices. A trailing partial bin draws from the full bin width
/// and stays empty when the draw lands past the end.
pub fn jittered_indices(spec: &JitterSpec) -> Result<Vec<usize>> {
    check_fraction(spec.keep)?;
    let w = spec.bin_width();
    let mut r = rng(spec.seed);
    let bins = spec.len.div_ceil(w);
    Ok((0..bins)
        .filter_map(|b| {
            let i = b * w + r.random_range(0..w);
            (i < spec.len).then_some(i)
        })
        .collect())
}

/// How jitter is laid over a 2D source (or receiver) grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JitterLayout {
    /// Jitter the flattened index (`x` fastest).
    #[default]
    Flattened,
    /// Jitter along `x` independently for each `y` line.
    PerAxis,
}

/// Remove whole sources (or receivers) with jittered sampling.
pub fn jittered_mask(
    dims: SpatialDims,
    target: Decimated,
    layout: JitterLayout,
    keep: f64,
    seed: u64,
) -> Result<SamplingMask> {
    check_fraction(keep)?;
    let (nx, ny) = match target {
        Decimated::Sources => (dims.sx, dims.sy),
        Decimated::Receivers => (dims.rx, dims.ry),
        Decimated::Entries => {
            return Err(Error::InvalidParameter(
                "jittered sampling acts on sources or receivers".into(),
            ))
        }
    };
    let mut kept = vec![false; nx * ny];
    match layout {
        JitterLayout::Flattened => {
            for i in jittered_indices(&JitterSpec::new(nx * ny, keep, seed)?)? {
                kept[i] = true;
            }
        }
        JitterLayout::PerAxis => {
            for y in 0..ny {
                let line_seed = seed.wrapping_add((y as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                for x in jittered_indices(&JitterSpec::new(nx, keep, line_seed)?)? {
                    kept[x + y * nx] = true;
                }
            }
        }
    }
    let observed = (0..dims.len())
        .map(|i| {
            let (rx, ry, sx, sy) = dims.coords(i);
            match target {
                Decimated::Sources => kept[sx + sy * nx],
                _ => kept[rx + ry * nx],
            }
        })
        .collect();
    SamplingMask::new(
        dims,
        observed,
        Some(MaskMeta {
            scheme: if keep == 1.0 { Scheme::Full } else { Scheme::Jittered },
            keep_fraction: keep,
            decimated: target,
        }),
    )
}

/// Exactly `⌈keep·p·q⌉` entries of a `p × q` matrix, drawn without
/// replacement.
pub fn uniform_entry_mask(p: usize, q: usize, keep: f64, seed: u64) -> Result<SamplingMask> {
    check_fraction(keep)?;
    let n = p * q;
    let count = ((keep * n as f64).ceil() as usize).min(n);
    let mut observed = vec![false; n];
    for i in index::sample(&mut rng(seed), n, count) {
        observed[i] = true;
    }
    SamplingMask::plain(
        p,
        q,
        observed,
        Some(MaskMeta {
            scheme: if count == n { Scheme::Full } else { Scheme::Uniform },
            keep_fraction: keep,
            decimated: Decimated::Entries,
        }),
    )
}

/// Uniform entry sampling over a full acquisition grid.
pub fn uniform_grid_mask(dims: SpatialDims, keep: f64, seed: u64) -> Result<SamplingMask> {
    let plain = uniform_entry_mask(dims.len(), 1, keep, seed)?;
    SamplingMask::new(dims, plain.observed().to_vec(), plain.meta().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaps(kept: &[usize]) -> Vec<usize> {
        kept.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn full_keep() {
        let k = jittered_indices(&JitterSpec::new(17, 1.0, 3).unwrap()).unwrap();
        assert_eq!(k, (0..17).collect::<Vec<_>>());
        let m = uniform_entry_mask(4, 5, 1.0, 1).unwrap();
        assert_eq!(m.count(), 20);
    }

    #[test]
    fn forty_sources_eighty_percent_removed() {
        let spec = JitterSpec::new(40, 0.2, 12).unwrap();
        assert_eq!(spec.bin_width(), 5);
        let k = jittered_indices(&spec).unwrap();
        assert_eq!(k.len(), 8);
        // 25 m grid, 225 m maximum spacing
        assert!(gaps(&k).iter().all(|&g| (1..=9).contains(&g)));
    }

    #[test]
    fn deterministic() {
        let spec = JitterSpec::new(10, 0.5, 77).unwrap();
        assert_eq!(jittered_indices(&spec).unwrap(), jittered_indices(&spec).unwrap());
        let a = uniform_entry_mask(6, 7, 0.3, 5).unwrap();
        let b = uniform_entry_mask(6, 7, 0.3, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(JitterSpec::new(10, 0.0, 1).is_err());
        assert!(JitterSpec::new(10, 1.5, 1).is_err());
        assert!(uniform_entry_mask(3, 3, -0.1, 1).is_err());
        assert!(uniform_entry_mask(3, 3, f64::NAN, 1).is_err());
    }

    #[test]
    fn fixed_cardinality() {
        assert_eq!(uniform_entry_mask(10, 10, 0.5, 99).unwrap().count(), 50);
        assert_eq!(uniform_entry_mask(3, 3, 0.5, 99).unwrap().count(), 5);
    }

    #[test]
    fn uniform_inclusion_is_exchangeable() {
        let trials = 10_000;
        let mut hits = vec![0usize; 100];
        for seed in 0..trials {
            for (h, &o) in hits.iter_mut().zip(uniform_entry_mask(10, 10, 0.5, seed).unwrap().observed()) {
                *h += o as usize;
            }
        }
        for h in hits {
            let f = h as f64 / trials as f64;
            assert!((f - 0.5).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn source_mask_zeroes_whole_columns() {
        let dims = SpatialDims::new(3, 2, 8, 5);
        let m = jittered_mask(dims, Decimated::Sources, JitterLayout::Flattened, 0.2, 4).unwrap();
        assert_eq!(m.meta().unwrap().decimated, Decimated::Sources);
        for sx in 0..8 {
            for sy in 0..5 {
                let first = m.is_observed(0, 0, sx, sy);
                for rx in 0..3 {
                    for ry in 0..2 {
                        assert_eq!(m.is_observed(rx, ry, sx, sy), first);
                    }
                }
            }
        }
        assert_eq!(m.count(), 6 * 8);

        let per = jittered_mask(dims, Decimated::Sources, JitterLayout::PerAxis, 0.5, 4).unwrap();
        for sy in 0..5 {
            let kept = (0..8).filter(|&sx| per.is_observed(0, 0, sx, sy)).count();
            assert_eq!(kept, 4);
        }
        let rec = jittered_mask(dims, Decimated::Receivers, JitterLayout::Flattened, 0.5, 4).unwrap();
        assert_eq!(rec.count(), 3 * 40);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn jitter_gap_bounds(seed in any::<u64>(), len in 1usize..200, inv in 1usize..8) {
            let keep = 1.0 / inv as f64;
            let spec = JitterSpec::new(len, keep, seed).unwrap();
            let w = spec.bin_width();
            let k = jittered_indices(&spec).unwrap();
            prop_assert!(k.len() >= len / w);
            prop_assert!(k.len() <= len.div_ceil(w));
            for g in gaps(&k) {
                prop_assert!(g >= 1 && g < 2 * w);
            }
            // one sample per full bin
            for b in 0..len / w {
                prop_assert_eq!(k.iter().filter(|&&i| i / w == b).count(), 1);
            }
        }
    }
}
