//! Level-set comparator. The value function
//!
//! ```text
//! v(τ) = min { ‖A(L R^H) − b‖_F : ‖L‖_F² + ‖R‖_F² ≤ 2τ }
//! ```
//!
//! is evaluated by projected gradient, and `v(τ) = η` is solved for `τ` by a
//! secant iteration safeguarded with bisection.

use std::time::Instant;

use crate::altmin::init_factors;
use crate::error::{Error, Result};
use crate::linalg::{frob_sq, CMatrix, C64};
use crate::solver::{vec_norm, FactorPair};
use crate::transforms::MeasurementOp;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetConfig {
    /// First upper bracket for `τ`. `None` uses `‖b‖_F`.
    pub tau0: Option<f64>,
    /// Stop once `|v(τ) − η| ≤ root_tol · ‖b‖_F`.
    pub root_tol: f64,
    pub max_root_iters: usize,
    /// Doublings of the upper bracket before giving up.
    pub max_expansions: usize,
    pub inner_iters: usize,
    /// Relative decrease of the residual below which an inner solve stops.
    pub inner_tol: f64,
    /// Initial projected-gradient step; adapted by backtracking.
    pub step0: f64,
    pub seed: u64,
}

impl Default for LevelSetConfig {
    fn default() -> Self {
        Self {
            tau0: None,
            root_tol: 1e-4,
            max_root_iters: 40,
            max_expansions: 40,
            inner_iters: 2000,
            inner_tol: 1e-9,
            step0: 1.0,
            seed: 0,
        }
    }
}

impl LevelSetConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau0 {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("τ₀ must be positive, got {t}")));
            }
        }
        if !(self.root_tol > 0.0) || !(self.inner_tol > 0.0) || !(self.step0 > 0.0) {
            return Err(Error::InvalidParameter("level-set tolerances and step must be positive".into()));
        }
        if self.max_root_iters == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidParameter("level-set iteration caps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Euclidean projection onto `‖L‖² + ‖R‖² ≤ 2τ`.
pub fn project_ball(left: &CMatrix, right: &CMatrix, tau: f64) -> Result<(CMatrix, CMatrix)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("τ must be positive, got {tau}")));
    }
    let norm = (frob_sq(left) + frob_sq(right)).sqrt();
    let radius = (2.0 * tau).sqrt();
    if norm <= radius {
        return Ok((left.clone(), right.clone()));
    }
    let s = C64::new(radius / norm, 0.0);
    Ok((left * s, right * s))
}

#[derive(Clone, Copy, Debug)]
pub struct ValueReport {
    pub value: f64,
    pub iterations: usize,
}

fn residual(op: &MeasurementOp, left: &CMatrix, right: &CMatrix, b: &[C64]) -> Vec<C64> {
    op.apply_factor(left, right).iter().zip(b).map(|(a, c)| a - c).collect()
}

/// `v(τ)` and its minimizer estimate, starting from `warm` (projected first).
/// `b` holds the observed values in operator order.
pub fn value_function(
    op: &MeasurementOp,
    b: &[C64],
    tau: f64,
    warm: &FactorPair,
    cfg: &LevelSetConfig,
) -> Result<(FactorPair, ValueReport)> {
    let op_t = op.conj_transposed();
    let (mut l, mut r) = project_ball(&warm.left, &warm.right, tau)?;
    let mut res = residual(op, &l, &r, b);
    let mut f = 0.5 * res.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut step = cfg.step0;
    let mut iterations = 0;
    for _ in 0..cfg.inner_iters {
        iterations += 1;
        let gl = op.adjoint_factor(&res, &r);
        let gr = op_t.adjoint_factor(&res, &l);
        let accepted = loop {
            let s = C64::new(step, 0.0);
            let (tl, tr) = project_ball(&(&l - &gl * s), &(&r - &gr * s), tau)?;
            let dl = &tl - &l;
            let dr = &tr - &r;
            let t_res = residual(op, &tl, &tr, b);
            let t_f = 0.5 * t_res.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let lin = crate::linalg::inner(&gl, &dl) + crate::linalg::inner(&gr, &dr);
            let quad = (frob_sq(&dl) + frob_sq(&dr)) / (2.0 * step);
            if t_f <= f + lin + quad || step < 1e-20 {
                break (tl, tr, t_res, t_f);
            }
            step *= 0.5;
        };
        let (tl, tr, t_res, t_f) = accepted;
        if !t_f.is_finite() {
            return Err(Error::NonFinite("level-set iterate"));
        }
        let decrease = f - t_f;
        l = tl;
        r = tr;
        res = t_res;
        let f_old = f;
        f = t_f;
        step *= 2.0;
        if decrease <= cfg.inner_tol * f_old {
            break;
        }
    }
    Ok((
        FactorPair { left: l, right: r },
        ValueReport {
            value: (2.0 * f).sqrt(),
            iterations,
        },
    ))
}

#[derive(Clone, Debug)]
pub struct LevelSetReport {
    pub eta_target: f64,
    pub b_norm: f64,
    pub tau: f64,
    pub residual: f64,
    pub root_iters: usize,
    pub inner_iters: usize,
    pub converged: bool,
    pub wall_s: f64,
    /// Every `(τ, v(τ))` evaluated, in order.
    pub trace: Vec<(f64, f64)>,
    /// `(lower, upper)` bracket after each secant step.
    pub brackets: Vec<(f64, f64)>,
}

impl LevelSetReport {
    pub fn rel_residual(&self) -> f64 {
        if self.b_norm > 0.0 {
            self.residual / self.b_norm
        } else {
            self.residual
        }
    }
}

#[derive(Clone, Debug)]
pub struct LevelSetSolution {
    pub factors: FactorPair,
    /// `S^H(L R^H)` in the acquisition layout.
    pub completed: CMatrix,
    pub report: LevelSetReport,
}

/// Same as [`solve_levelset_observed`] with `b` in the acquisition layout.
pub fn solve_levelset(
    op: &MeasurementOp,
    b: &CMatrix,
    eta: f64,
    rank: usize,
    cfg: &LevelSetConfig,
) -> Result<LevelSetSolution> {
    if !op.supported_on_mask(b) {
        return Err(Error::DataOffMask);
    }
    solve_levelset_observed(op, &op.gather(b)?, eta, rank, cfg)
}

/// Find `τ` with `v(τ) = η` and return the factors at that level.
pub fn solve_levelset_observed(
    op: &MeasurementOp,
    b: &[C64],
    eta: f64,
    rank: usize,
    cfg: &LevelSetConfig,
) -> Result<LevelSetSolution> {
    cfg.validate()?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("η must be nonnegative, got {eta}")));
    }
    let start = Instant::now();
    let (p, q) = op.factor_shape();
    let b_norm = vec_norm(b);
    let mut pair = init_factors(p, q, rank, cfg.seed)?;
    let mut report = LevelSetReport {
        eta_target: eta,
        b_norm,
        tau: 0.0,
        residual: b_norm,
        root_iters: 0,
        inner_iters: 0,
        converged: true,
        wall_s: 0.0,
        trace: vec![(0.0, b_norm)],
        brackets: Vec::new(),
    };
    if b_norm <= eta {
        let zero = FactorPair {
            left: CMatrix::zeros(p, rank),
            right: CMatrix::zeros(q, rank),
        };
        report.wall_s = start.elapsed().as_secs_f64();
        return Ok(LevelSetSolution {
            completed: op.to_acquisition(&zero.product())?,
            factors: zero,
            report,
        });
    }
    let tol = cfg.root_tol * b_norm;
    let eval = |tau: f64, from: &FactorPair, report: &mut LevelSetReport| -> Result<(FactorPair, f64)> {
        let (pair, v) = value_function(op, b, tau, from, cfg)?;
        report.inner_iters += v.iterations;
        report.trace.push((tau, v.value));
        Ok((pair, v.value))
    };

    // v(0) = ‖b‖ exactly; expand upward until v(τ) ≤ η
    let (mut lo, mut v_lo) = (0.0, b_norm);
    let mut lo_pair = pair.clone();
    let mut hi = cfg.tau0.unwrap_or(b_norm);
    let mut attempts = 0;
    let (mut hi_pair, v_hi) = loop {
        let (cand, v) = eval(hi, &pair, &mut report)?;
        if (v - eta).abs() <= tol {
            return finish(op, cand, hi, v, report, start, true);
        }
        if v < eta {
            break (cand, v);
        }
        lo = hi;
        v_lo = v;
        lo_pair = cand.clone();
        pair = cand;
        attempts += 1;
        if attempts > cfg.max_expansions {
            return Err(Error::NotBracketed {
                attempts,
                tau: hi,
                value: v,
                eta,
            });
        }
        hi *= 2.0;
    };

    let mut best = if (v_lo - eta).abs() < (v_hi - eta).abs() {
        (lo, v_lo, lo_pair.clone())
    } else {
        (hi, v_hi, hi_pair.clone())
    };
    let (mut t_prev, mut v_prev) = (lo, v_lo);
    let (mut t_cur, mut v_cur) = (hi, v_hi);
    for _ in 0..cfg.max_root_iters {
        report.root_iters += 1;
        let width = hi - lo;
        let secant = if (v_cur - v_prev).abs() > 0.0 {
            t_cur - (v_cur - eta) * (t_cur - t_prev) / (v_cur - v_prev)
        } else {
            f64::NAN
        };
        let inside = secant.is_finite() && secant > lo + 1e-3 * width && secant < hi - 1e-3 * width;
        let tau = if inside { secant } else { 0.5 * (lo + hi) };
        // warm start from the nearer bracket end
        let from = if tau - lo < hi - tau { &lo_pair } else { &hi_pair };
        let (cand, v) = eval(tau, from, &mut report)?;
        if (v - eta).abs() < (best.1 - eta).abs() {
            best = (tau, v, cand.clone());
        }
        if (v - eta).abs() <= tol {
            return finish(op, cand, tau, v, report, start, true);
        }
        if v > eta {
            lo = tau;
            lo_pair = cand;
        } else {
            hi = tau;
            hi_pair = cand;
        }
        report.brackets.push((lo, hi));
        t_prev = t_cur;
        v_prev = v_cur;
        t_cur = tau;
        v_cur = v;
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let (tau, v, pair) = best;
    finish(op, pair, tau, v, report, start, false)
}

fn finish(
    op: &MeasurementOp,
    pair: FactorPair,
    tau: f64,
    value: f64,
    mut report: LevelSetReport,
    start: Instant,
    converged: bool,
) -> Result<LevelSetSolution> {
    report.tau = tau;
    report.residual = value;
    report.converged = converged;
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(LevelSetSolution {
        completed: op.to_acquisition(&pair.product())?,
        factors: pair,
        report,
    })
}
