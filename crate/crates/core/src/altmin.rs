//! Alternating minimization over the factors of `X = L R^H` under a relaxed,
//! geometrically tightened residual bound.
//!
//! Each outer step solves the `R`-subproblem with `L` fixed, then the
//! `L`-subproblem with the new `R`, both by primal-dual splitting and both
//! warm-started from the previous iterates and dual variable.

use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{balance, gaussian_matrix, product_distance, product_norm, rng, CMatrix, C64};
use crate::solver::{solve_factor_observed, vec_norm, DualState, FactorPair, PdConfig, SubproblemReport};
use crate::transforms::MeasurementOp;

/// How `η_k` shrinks between outer iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EtaMode {
    /// `η_{k+1} = max(α η_k, η)`.
    #[default]
    Geometric,
    /// `η_{k+1} = max(α^k η_k, η)`, read literally; its first step is a no-op.
    AsPrinted,
}

impl FromStr for EtaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(EtaMode::Geometric),
            "as-printed" => Ok(EtaMode::AsPrinted),
            other => Err(Error::Config(format!("unknown eta_mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for EtaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EtaMode::Geometric => "geometric",
            EtaMode::AsPrinted => "as-printed",
        })
    }
}

/// Target residual bound, absolute or relative to `‖b‖_F`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaTarget {
    Absolute(f64),
    Fraction(f64),
}

impl EtaTarget {
    pub fn resolve(&self, b_norm: f64) -> f64 {
        match *self {
            EtaTarget::Absolute(v) => v,
            EtaTarget::Fraction(f) => f * b_norm,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OuterConfig {
    pub rank: usize,
    pub eta: EtaTarget,
    pub alpha: f64,
    pub eta_mode: EtaMode,
    /// Outer iteration cap `K₀`.
    pub outer_iters: usize,
    /// Early exit on relative change of `L R^H` once feasible at the target.
    pub outer_tol: f64,
    pub inner: PdConfig,
    pub seed: u64,
    /// Replace `(L, R)` by the balanced factorization of `L R^H` after each
    /// outer iteration.
    pub balance: bool,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            eta: EtaTarget::Fraction(0.03),
            alpha: 0.1,
            eta_mode: EtaMode::Geometric,
            outer_iters: 15,
            outer_tol: 1e-4,
            inner: PdConfig::default(),
            seed: 0,
            balance: true,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.outer_iters == 0 {
            return Err(Error::InvalidParameter("outer iteration cap must be >= 1".into()));
        }
        let eta_ok = match self.eta {
            EtaTarget::Absolute(v) | EtaTarget::Fraction(v) => v >= 0.0 && v.is_finite(),
        };
        if !eta_ok {
            return Err(Error::InvalidParameter("η must be finite and nonnegative".into()));
        }
        self.inner.validate()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Next bound in the relaxation schedule; never below `target`.
pub fn eta_schedule(k: usize, eta_prev: f64, alpha: f64, target: f64, mode: EtaMode) -> Result<f64> {
    check_alpha(alpha)?;
    let factor = match mode {
        EtaMode::Geometric => alpha,
        EtaMode::AsPrinted => alpha.powi(k.min(i32::MAX as usize) as i32),
    };
    Ok((factor * eta_prev).max(target))
}

/// Linear rank ramp between two `(frequency Hz, rank)` anchors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSchedule {
    pub f_lo: f64,
    pub r_lo: usize,
    pub f_hi: f64,
    pub r_hi: usize,
}

impl RankSchedule {
    pub fn new(f_lo: f64, r_lo: usize, f_hi: f64, r_hi: usize) -> Result<Self> {
        if r_lo == 0 || r_hi == 0 || !(f_lo < f_hi) {
            return Err(Error::InvalidParameter(format!(
                "rank schedule needs ranks >= 1 and f_lo < f_hi, got ({f_lo}, {r_lo})-({f_hi}, {r_hi})"
            )));
        }
        Ok(Self { f_lo, r_lo, f_hi, r_hi })
    }

    /// Rounded linear interpolation, clamped to the anchors' frequency range
    /// and to `[1, max_rank]`.
    pub fn rank_for_frequency(&self, f: f64, max_rank: usize) -> usize {
        let t = ((f - self.f_lo) / (self.f_hi - self.f_lo)).clamp(0.0, 1.0);
        let r = self.r_lo as f64 + (self.r_hi as f64 - self.r_lo as f64) * t;
        (r.round() as usize).clamp(1, max_rank.max(1))
    }
}

impl FromStr for RankSchedule {
    type Err = Error;

    /// `f_lo:r_lo,f_hi:r_hi`, e.g. `3:30,70:100`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("rank_schedule {s:?} is not of the form f_lo:r_lo,f_hi:r_hi"));
        let mut anchors = s.split(',').map(|a| {
            let (f, r) = a.trim().split_once(':').ok_or_else(bad)?;
            let f: f64 = f.trim().parse().map_err(|_| bad())?;
            let r: usize = r.trim().parse().map_err(|_| bad())?;
            Ok::<_, Error>((f, r))
        });
        let (f_lo, r_lo) = anchors.next().ok_or_else(bad)??;
        let (f_hi, r_hi) = anchors.next().ok_or_else(bad)??;
        if anchors.next().is_some() {
            return Err(bad());
        }
        RankSchedule::new(f_lo, r_lo, f_hi, r_hi)
    }
}

/// Complex Gaussian factors scaled by `1/√r`.
pub fn init_factors(p: usize, q: usize, r: usize, seed: u64) -> Result<FactorPair> {
    if r == 0 || r > p.min(q) {
        return Err(Error::InvalidParameter(format!(
            "rank {r} outside [1, {}]",
            p.min(q)
        )));
    }
    let mut g = rng(seed);
    let s = C64::new(1.0 / (r as f64).sqrt(), 0.0);
    let left = gaussian_matrix(p, r, &mut g) * s;
    let right = gaussian_matrix(q, r, &mut g) * s;
    FactorPair::new(left, right)
}

/// Diagnostics of one outer iteration.
#[derive(Clone, Debug)]
pub struct OuterStep {
    pub eta: f64,
    pub right: SubproblemReport,
    pub left: SubproblemReport,
    /// `‖X_k − X_{k−1}‖_F / ‖X_k‖_F`.
    pub change: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug)]
pub struct AltMinReport {
    pub eta_target: f64,
    pub b_norm: f64,
    /// Final `‖A(L R^H) − b‖_F`.
    pub residual: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub feasible: bool,
    pub converged: bool,
    pub objective: f64,
    pub wall_s: f64,
    pub steps: Vec<OuterStep>,
}

impl AltMinReport {
    pub fn rel_residual(&self) -> f64 {
        if self.b_norm > 0.0 {
            self.residual / self.b_norm
        } else {
            self.residual
        }
    }

    pub fn eta_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.eta).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SliceSolution {
    pub factors: FactorPair,
    /// `S^H(L R^H)` in the acquisition layout.
    pub completed: CMatrix,
    pub report: AltMinReport,
}

/// Residual feasibility with the slack used throughout for reporting.
pub fn is_feasible(residual: f64, eta_target: f64, b_norm: f64, feas_tol: f64) -> bool {
    residual <= (1.01 * eta_target).max(eta_target + feas_tol * b_norm)
}

/// Complete one slice from observations `b` (acquisition layout, supported on Ω).
pub fn interpolate_slice(op: &MeasurementOp, b: &CMatrix, cfg: &OuterConfig) -> Result<SliceSolution> {
    cfg.validate()?;
    if !op.supported_on_mask(b) {
        return Err(Error::DataOffMask);
    }
    let bv = op.gather(b)?;
    interpolate_observed(op, &bv, cfg)
}

/// [`interpolate_slice`] with `b` gathered onto Ω.
pub fn interpolate_observed(op: &MeasurementOp, b: &[C64], cfg: &OuterConfig) -> Result<SliceSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let (p, q) = op.factor_shape();
    let b_norm = vec_norm(b);
    let eta_target = cfg.eta.resolve(b_norm);
    let mut pair = init_factors(p, q, cfg.rank, cfg.seed)?;

    if b_norm <= eta_target {
        let zero = FactorPair {
            left: CMatrix::zeros(p, cfg.rank),
            right: CMatrix::zeros(q, cfg.rank),
        };
        return Ok(SliceSolution {
            completed: op.to_acquisition(&zero.product())?,
            report: AltMinReport {
                eta_target,
                b_norm,
                residual: b_norm,
                outer_iters: 0,
                inner_iters: 0,
                feasible: true,
                converged: true,
                objective: 0.0,
                wall_s: start.elapsed().as_secs_f64(),
                steps: Vec::new(),
            },
            factors: zero,
        });
    }

    let op_t = op.conj_transposed();
    let mut dual = DualState::zeros(b.len());
    let mut eta = b_norm;
    let mut steps = Vec::with_capacity(cfg.outer_iters);
    let mut inner_iters = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    for k in 0..cfg.outer_iters {
        eta = eta_schedule(k, eta, cfg.alpha, eta_target, cfg.eta_mode)?;
        if eta >= b_norm {
            // zero factors would be optimal; keep the current iterate
            steps.push(OuterStep {
                eta,
                right: skipped_report(eta),
                left: skipped_report(eta),
                change: f64::INFINITY,
                skipped: true,
            });
            continue;
        }
        let wrap = |e: Error| Error::Outer {
            outer: k,
            source: Box::new(e),
        };
        let (right, d_r, rep_r) =
            solve_factor_observed(&op_t, b, &pair.left, eta, &cfg.inner, Some((&pair.right, &dual)))
                .map_err(wrap)?;
        let (left, d_l, rep_l) =
            solve_factor_observed(op, b, &right, eta, &cfg.inner, Some((&pair.left, &d_r))).map_err(wrap)?;
        inner_iters += rep_r.iterations + rep_l.iterations;

        let norm = product_norm(&left, &right);
        let change = if norm > 0.0 {
            product_distance(&left, &right, &pair.left, &pair.right) / norm
        } else {
            0.0
        };
        residual = rep_l.residual;
        pair = if cfg.balance {
            let (left, right) = balance(&left, &right);
            FactorPair { left, right }
        } else {
            FactorPair { left, right }
        };
        dual = d_l;
        steps.push(OuterStep {
            eta,
            right: rep_r,
            left: rep_l,
            change,
            skipped: false,
        });
        let at_target = eta <= eta_target;
        let settled = steps.last().is_some_and(|s| s.right.converged && s.left.converged);
        if at_target && settled && is_feasible(residual, eta_target, b_norm, cfg.inner.feas_tol) && change < cfg.outer_tol {
            converged = true;
            break;
        }
    }

    if !residual.is_finite() {
        residual = vec_norm(
            &op.apply_factor(&pair.left, &pair.right)
                .iter()
                .zip(b)
                .map(|(a, c)| a - c)
                .collect::<Vec<_>>(),
        );
    }
    let completed = op.to_acquisition(&pair.product())?;
    Ok(SliceSolution {
        report: AltMinReport {
            eta_target,
            b_norm,
            residual,
            outer_iters: steps.len(),
            inner_iters,
            feasible: is_feasible(residual, eta_target, b_norm, cfg.inner.feas_tol),
            converged,
            objective: pair.objective(),
            wall_s: start.elapsed().as_secs_f64(),
            steps,
        },
        factors: pair,
        completed,
    })
}

fn skipped_report(eta: f64) -> SubproblemReport {
    SubproblemReport {
        iterations: 0,
        converged: true,
        gamma: 0.0,
        eta,
        residual: f64::NAN,
        objective: f64::NAN,
        gap_trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_schedule() {
        let mut eta = 10.0;
        let mut seq = Vec::new();
        for k in 0..3 {
            eta = eta_schedule(k, eta, 0.1, 0.3, EtaMode::Geometric).unwrap();
            seq.push(eta);
        }
        assert_eq!(seq, vec![1.0, 0.3, 0.3]);
        assert_eq!(eta_schedule(5, 0.3, 0.5, 0.3, EtaMode::Geometric).unwrap(), 0.3);
        assert_eq!(eta_schedule(5, 0.3, 0.5, 0.3, EtaMode::AsPrinted).unwrap(), 0.3);
    }

    #[test]
    fn as_printed_schedule_first_step_is_noop() {
        let e1 = eta_schedule(0, 10.0, 0.1, 0.0, EtaMode::AsPrinted).unwrap();
        assert_eq!(e1, 10.0);
        let e2 = eta_schedule(1, e1, 0.1, 0.0, EtaMode::AsPrinted).unwrap();
        assert!((e2 - 1.0).abs() < 1e-15);
        let e3 = eta_schedule(2, e2, 0.1, 0.0, EtaMode::AsPrinted).unwrap();
        assert!((e3 - 0.01).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_alpha() {
        assert!(eta_schedule(0, 1.0, 1.0, 0.0, EtaMode::Geometric).is_err());
        assert!(eta_schedule(0, 1.0, 0.0, 0.0, EtaMode::Geometric).is_err());
    }

    #[test]
    fn rank_schedule() {
        let s: RankSchedule = "3:30,70:100".parse().unwrap();
        assert_eq!(s.rank_for_frequency(3.0, 1000), 30);
        assert_eq!(s.rank_for_frequency(70.0, 1000), 100);
        assert_eq!(s.rank_for_frequency(36.5, 1000), 65);
        assert_eq!(s.rank_for_frequency(1.0, 1000), 30);
        assert_eq!(s.rank_for_frequency(90.0, 1000), 100);
        assert_eq!(s.rank_for_frequency(70.0, 40), 40);
        assert!("3:30".parse::<RankSchedule>().is_err());
        assert!(RankSchedule::new(5.0, 1, 5.0, 2).is_err());
        assert!(RankSchedule::new(1.0, 0, 5.0, 2).is_err());
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let a = init_factors(200, 60, 50, 1).unwrap();
        let b = init_factors(200, 60, 50, 1).unwrap();
        let c = init_factors(200, 60, 50, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let m = a.left.iter().map(|v| v.norm_sqr()).sum::<f64>() / (200.0 * 50.0);
        assert!((m - 1.0 / 50.0).abs() <= 0.05 / 50.0, "{m}");
        assert!(init_factors(5, 4, 5, 0).is_err());
        assert!(init_factors(5, 4, 0, 0).is_err());
    }
}
