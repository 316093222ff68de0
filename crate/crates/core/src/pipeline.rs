//! Volume-level driver: frequency transform, per-slice completion, inverse
//! transform, evaluation and CSV reports.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::altmin::{interpolate_slice, is_feasible, EtaTarget, OuterConfig};
use crate::config::{PipelineConfig, SolverKind};
use crate::dft::{bin_frequency, dft_time_axis, idft_freq_axis};
use crate::error::{Error, Result};
use crate::io::{read_mask, read_volume, write_volume};
use crate::levelset::{solve_levelset, LevelSetConfig};
use crate::linalg::{frob, C64};
use crate::sampling::{jittered_mask, uniform_grid_mask};
use crate::solver::PdConfig;
use crate::transforms::{apply_sampling, fold, unfold, Decimated, Matricization, MeasurementOp, Mode, SamplingMask, Scheme};
use crate::volume::{Axis, ComplexVolume, SpatialDims, Tensor4};

/// Reported when the estimate equals the truth exactly.
pub const SNR_CAP_DB: f64 = 300.0;

/// `−20 log10(‖truth − estimate‖ / ‖truth‖)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(truth: &[C64], estimate: &[C64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", truth.len()),
            got: format!("{}", estimate.len()),
        });
    }
    let t = truth.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if t == 0.0 {
        return Err(Error::InvalidParameter("SNR undefined for an all-zero reference".into()));
    }
    let d = truth
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if d == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((-20.0 * (d / t).log10()).min(SNR_CAP_DB))
}

/// One processed frequency slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub freq_hz: f64,
    pub rank: usize,
    pub eta_target: f64,
    pub rel_residual: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub wall_s: f64,
    pub snr_db: Option<f64>,
    /// `feasible`, `infeasible` or `failed:<reason>`.
    pub status: String,
}

impl ReportRow {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<ReportRow>,
    /// SNR of the whole output against the truth, in the input's domain.
    pub overall_snr_db: Option<f64>,
    /// `‖Im out‖ / ‖out‖` of a time-domain output.
    pub imag_ratio: f64,
    pub wall_s: f64,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn all_feasible(&self) -> bool {
        self.rows.iter().all(|r| r.status == "feasible")
    }
}

/// Draw a mask over `dims` from the sampling keys of `cfg`.
pub fn make_mask(dims: SpatialDims, cfg: &PipelineConfig) -> Result<SamplingMask> {
    match (cfg.scheme, cfg.decimate) {
        (Scheme::Full, _) => Ok(SamplingMask::full(dims)),
        (Scheme::Uniform, Decimated::Entries) => uniform_grid_mask(dims, cfg.keep, cfg.sampling_seed),
        (Scheme::Uniform, _) => Err(Error::Config(
            "uniform sampling acts on entries; use decimate = entries".into(),
        )),
        (Scheme::Jittered, target) => jittered_mask(dims, target, cfg.jitter_layout, cfg.keep, cfg.sampling_seed),
    }
}

/// Zero every unobserved trace of a 5-axis volume.
pub fn apply_mask(vol: &ComplexVolume, mask: &SamplingMask) -> Result<ComplexVolume> {
    let dims = vol.spatial_dims()?;
    if dims != mask.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", mask.dims()),
            got: format!("{dims:?}"),
        });
    }
    let n = vol.extent(vol.spectral_axis()).expect("spectral axis");
    let mut out = vol.clone();
    for k in 0..n {
        let mut t = vol.slice(k)?;
        for (v, &o) in t.data.iter_mut().zip(mask.observed()) {
            if !o {
                *v = C64::new(0.0, 0.0);
            }
        }
        out.set_slice(k, &t)?;
    }
    Ok(out)
}

struct SliceOutcome {
    bin: usize,
    tensor: Option<Tensor4>,
    row: ReportRow,
}

fn signed_frequency(k: usize, n: usize, dt: f64) -> f64 {
    if 2 * k <= n {
        bin_frequency(k, n, dt)
    } else {
        -bin_frequency(n - k, n, dt)
    }
}

fn solve_bin(
    k: usize,
    freq: f64,
    slice: &Tensor4,
    truth: Option<&Tensor4>,
    op: &MeasurementOp,
    cfg: &PipelineConfig,
) -> SliceOutcome {
    let start = Instant::now();
    let acq = Matricization::new(Mode::SrcPair, slice.dims);
    let fail = |msg: String, rank: usize, eta: f64| SliceOutcome {
        bin: k,
        tensor: None,
        row: ReportRow {
            freq_hz: freq,
            rank,
            eta_target: eta,
            rel_residual: f64::NAN,
            outer_iters: 0,
            inner_iters: 0,
            wall_s: start.elapsed().as_secs_f64(),
            snr_db: None,
            status: format!("failed:{msg}"),
        },
    };
    let (p, q) = op.factor_shape();
    let rank = cfg.rank.rank_for(freq, p.min(q));
    let b = match apply_sampling(op.mask(), &unfold(slice, &acq)) {
        Ok(b) => b,
        Err(e) => return fail(e.to_string(), rank, f64::NAN),
    };
    let b_norm = frob(&b);
    let eta = cfg.eta_fraction * b_norm;
    let seed = cfg.seed.wrapping_add(k as u64);
    let solved = match cfg.solver {
        SolverKind::Pd => {
            let ocfg = OuterConfig {
                rank,
                eta: EtaTarget::Fraction(cfg.eta_fraction),
                alpha: cfg.alpha,
                eta_mode: cfg.eta_mode,
                outer_iters: cfg.outer_iters,
                inner: PdConfig {
                    max_iters: cfg.inner_iters,
                    tol: cfg.inner_tol,
                    feas_tol: cfg.feas_tol,
                    ..PdConfig::default()
                },
                seed,
                balance: cfg.balance,
                ..OuterConfig::default()
            };
            interpolate_slice(op, &b, &ocfg).map(|s| {
                let r = s.report;
                let status = if r.feasible { "feasible" } else { "infeasible" };
                (s.completed, r.rel_residual(), r.outer_iters, r.inner_iters, status)
            })
        }
        SolverKind::LevelSet => {
            let lcfg = LevelSetConfig {
                root_tol: cfg.feas_tol,
                inner_iters: cfg.inner_iters,
                seed,
                ..LevelSetConfig::default()
            };
            solve_levelset(op, &b, eta, rank, &lcfg).map(|s| {
                let r = s.report;
                let ok = r.converged && is_feasible(r.residual, eta, b_norm, cfg.feas_tol);
                let status = if ok { "feasible" } else { "infeasible" };
                (s.completed, r.rel_residual(), r.root_iters, r.inner_iters, status)
            })
        }
    };
    let (completed, rel_residual, outer_iters, inner_iters, status) = match solved {
        Ok(v) => v,
        Err(e) => return fail(e.to_string(), rank, eta),
    };
    let tensor = match fold(&completed, &acq) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string(), rank, eta),
    };
    let snr = truth.and_then(|t| snr_db(&t.data, &tensor.data).ok());
    SliceOutcome {
        bin: k,
        tensor: Some(tensor),
        row: ReportRow {
            freq_hz: freq,
            rank,
            eta_target: eta,
            rel_residual,
            outer_iters,
            inner_iters,
            wall_s: start.elapsed().as_secs_f64(),
            snr_db: snr,
            status: status.into(),
        },
    }
}

/// Complete a zero-filled volume.
///
/// A time-domain input is transformed along `t`; bins whose `|f|` lies in
/// `[f_min, f_max]` are completed and the rest pass through. For real input
/// only bins up to Nyquist are solved and the others are filled by Hermitian
/// symmetry. A frequency-domain input has every bin completed as is.
pub fn interpolate_volume(
    observed: &ComplexVolume,
    mask: &SamplingMask,
    truth: Option<&ComplexVolume>,
    cfg: &PipelineConfig,
) -> Result<(ComplexVolume, RunSummary)> {
    cfg.validate()?;
    let start = Instant::now();
    let dims = observed.spatial_dims()?;
    if dims != mask.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", mask.dims()),
            got: format!("{dims:?}"),
        });
    }
    if let Some(t) = truth {
        if t.axes() != observed.axes() || t.dims() != observed.dims() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} {:?}", observed.axes(), observed.dims()),
                got: format!("{:?} {:?}", t.axes(), t.dims()),
            });
        }
    }
    let time_domain = observed.spectral_axis() == Axis::T;
    let n = observed.extent(observed.spectral_axis()).expect("spectral axis");
    let zero_filled = apply_mask(observed, mask)?;
    let real = time_domain && zero_filled.data().iter().all(|v| v.im == 0.0);

    let (spectrum, truth_spectrum) = if time_domain {
        (dft_time_axis(&zero_filled)?, truth.map(dft_time_axis).transpose()?)
    } else {
        (zero_filled, truth.cloned())
    };

    let nyquist = 0.5 / cfg.dt;
    let f_max = cfg.f_max.unwrap_or(nyquist);
    if time_domain && f_max > nyquist * (1.0 + 1e-12) {
        return Err(Error::Config(format!("f_max {f_max} Hz exceeds Nyquist {nyquist} Hz")));
    }
    let bins: Vec<(usize, f64)> = (0..n)
        .filter_map(|k| {
            if !time_domain {
                return Some((k, bin_frequency(k, n, cfg.dt)));
            }
            if real && 2 * k > n {
                return None;
            }
            let f = signed_frequency(k, n, cfg.dt);
            (f.abs() >= cfg.f_min && f.abs() <= f_max).then_some((k, f))
        })
        .collect();

    let op = MeasurementOp::new(mask.clone(), cfg.matricization);
    let jobs: Vec<(usize, f64, Tensor4, Option<Tensor4>)> = bins
        .iter()
        .map(|&(k, f)| {
            let truth_slice = truth_spectrum.as_ref().map(|t| t.slice(k)).transpose()?;
            Ok((k, f, spectrum.slice(k)?, truth_slice))
        })
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<SliceOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|(k, f, s, t)| solve_bin(*k, *f, s, t.as_ref(), &op, cfg))
            .collect()
    });

    let mut out = spectrum.clone();
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if let Some(mut t) = o.tensor {
            let k = o.bin;
            let self_conjugate = k == 0 || 2 * k == n;
            if real && self_conjugate {
                for v in &mut t.data {
                    *v = C64::new(v.re, 0.0);
                }
            }
            out.set_slice(k, &t)?;
            if real && !self_conjugate {
                let mirrored = Tensor4 {
                    dims: t.dims,
                    data: t.data.iter().map(|v| v.conj()).collect(),
                };
                out.set_slice(n - k, &mirrored)?;
            }
        }
        rows.push(o.row);
    }
    rows.sort_by(|a, b| a.freq_hz.total_cmp(&b.freq_hz));

    let out = if time_domain { idft_freq_axis(&out)? } else { out };
    let total = out.norm();
    let imag = out.data().iter().map(|v| v.im * v.im).sum::<f64>().sqrt();
    let imag_ratio = if time_domain && total > 0.0 { imag / total } else { 0.0 };
    let overall_snr_db = truth.and_then(|t| snr_db(t.data(), out.data()).ok());
    Ok((
        out,
        RunSummary {
            rows,
            overall_snr_db,
            imag_ratio,
            wall_s: start.elapsed().as_secs_f64(),
        },
    ))
}

/// File-driven run: read `input` (and `mask`, `truth`), complete, then write
/// `output` and `report` when set.
pub fn run_interpolation(cfg: &PipelineConfig) -> Result<RunSummary> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input volume given".into()))?;
    let vol = read_volume(input)?;
    let dims = vol.spatial_dims()?;
    let (mask, generated) = match &cfg.mask {
        Some(p) => (SamplingMask::from_grid(&read_mask(p)?)?, false),
        None => (make_mask(dims, cfg)?, true),
    };
    let truth = match (&cfg.truth, generated) {
        (Some(p), _) => Some(read_volume(p)?),
        (None, true) => Some(vol.clone()),
        (None, false) => None,
    };
    let (out, summary) = interpolate_volume(&vol, &mask, truth.as_ref(), cfg)?;
    if let Some(p) = &cfg.output {
        write_volume(&out, p)?;
    }
    if let Some(p) = &cfg.report {
        write_report(p, &summary.rows)?;
    }
    Ok(summary)
}

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Per-frequency differences between two runs (`b − a`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub freq_hz: f64,
    pub snr_a: Option<f64>,
    pub snr_b: Option<f64>,
    pub snr_delta: Option<f64>,
    pub wall_a: f64,
    pub wall_b: f64,
    pub wall_delta: f64,
}

/// Join two reports on frequency. Frequencies present in only one report
/// are skipped.
pub fn compare_reports(a: &[ReportRow], b: &[ReportRow]) -> Vec<CompareRow> {
    a.iter()
        .filter_map(|ra| {
            let rb = b
                .iter()
                .find(|rb| (rb.freq_hz - ra.freq_hz).abs() <= 1e-9 * ra.freq_hz.abs().max(1.0))?;
            Some(CompareRow {
                freq_hz: ra.freq_hz,
                snr_a: ra.snr_db,
                snr_b: rb.snr_db,
                snr_delta: ra.snr_db.zip(rb.snr_db).map(|(x, y)| y - x),
                wall_a: ra.wall_s,
                wall_b: rb.wall_s,
                wall_delta: rb.wall_s - ra.wall_s,
            })
        })
        .collect()
}

pub fn write_compare(path: impl AsRef<Path>, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
