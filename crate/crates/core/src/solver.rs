//! Primal-dual splitting for one factor subproblem
//!
//! ```text
//! minimize ½‖V‖_F²  subject to  ‖A(V F^H) − b‖_F ≤ η
//! ```
//!
//! with `F` fixed. Writing `K V = A(V F^H)`, the iteration is
//!
//! ```text
//! V⁺  = (V − γ K^* y) / (1 + γ)
//! y⁺  = y + γ K(2V⁺ − V) − γ b
//! y⁺⁺ = max(1 − ηγ/‖y⁺‖, 0) · y⁺
//! ```
//!
//! with `γ = c/‖F‖_op`. Since `‖A‖ ≤ 1`, `γ²‖K‖² ≤ c² < 1` and the scheme
//! converges. Only products with `A`, `A^*` and the thin factors are used.
//! The `R`-subproblem uses the same routine through
//! [`MeasurementOp::conj_transposed`].

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, frob, frob_sq, op_norm_with, CMatrix, PowerIteration, C64};
use crate::transforms::MeasurementOp;

/// Low-rank factors of `X = L R^H`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub left: CMatrix,
    pub right: CMatrix,
}

impl FactorPair {
    pub fn new(left: CMatrix, right: CMatrix) -> Result<Self> {
        let r = left.ncols();
        if r != right.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{r} columns in R"),
                got: format!("{}", right.ncols()),
            });
        }
        if r == 0 || r > left.nrows().min(right.nrows()) {
            return Err(Error::InvalidParameter(format!(
                "rank {r} outside [1, {}]",
                left.nrows().min(right.nrows())
            )));
        }
        ensure_finite(&left, "left factor")?;
        ensure_finite(&right, "right factor")?;
        Ok(Self { left, right })
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    /// `½(‖L‖_F² + ‖R‖_F²)`, an upper bound on `‖L R^H‖_*`.
    pub fn objective(&self) -> f64 {
        0.5 * (frob_sq(&self.left) + frob_sq(&self.right))
    }

    pub fn product(&self) -> CMatrix {
        &self.left * self.right.adjoint()
    }
}

/// Dual variable of the data-fit constraint, stored on Ω in operator order.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub y: Vec<C64>,
    /// `A(V F^H) − b` at the returned primal iterate, on Ω.
    pub residual: Vec<C64>,
}

impl DualState {
    pub fn zeros(n: usize) -> Self {
        Self {
            y: vec![C64::new(0.0, 0.0); n],
            residual: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.y)
    }

    pub fn residual_norm(&self) -> f64 {
        vec_norm(&self.residual)
    }
}

#[derive(Clone, Debug)]
pub struct PdConfig {
    /// Iteration cap `K₁`.
    pub max_iters: usize,
    /// Step-size safety factor `c` in `γ = c/‖F‖_op`.
    pub step_factor: f64,
    /// Relative primal change tolerance.
    pub tol: f64,
    /// Feasibility gap tolerance, relative to `‖b‖_F`.
    pub feas_tol: f64,
    pub power: PowerIteration,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step_factor: 0.99,
            tol: 1e-5,
            feas_tol: 1e-4,
            power: PowerIteration::default(),
        }
    }
}

impl PdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_factor > 0.0 && self.step_factor < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step factor must lie in (0, 1), got {}",
                self.step_factor
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("inner iteration cap must be >= 1".into()));
        }
        if !(self.tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one factor subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemReport {
    pub iterations: usize,
    pub converged: bool,
    pub gamma: f64,
    pub eta: f64,
    /// `‖A(V F^H) − b‖_F` at the returned iterate.
    pub residual: f64,
    /// `½‖V‖_F²` at the returned iterate.
    pub objective: f64,
    /// `max(residual − η, 0)` after every iteration.
    pub gap_trace: Vec<f64>,
}

/// `‖F‖_op` by power iteration on the `r × r` Gram matrix.
pub fn op_norm(fixed: &CMatrix) -> Result<f64> {
    op_norm_with(fixed, &PowerIteration::default())
}

pub(crate) fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Proximal map of `γ η ‖·‖₂`: block soft-thresholding toward the origin.
pub fn prox_dual(u: &[C64], gamma: f64, eta: f64) -> Vec<C64> {
    let n = vec_norm(u);
    if n == 0.0 {
        return vec![C64::new(0.0, 0.0); u.len()];
    }
    let s = (1.0 - eta * gamma / n).max(0.0);
    u.iter().map(|x| x * s).collect()
}

/// `V⁺ = (V − γ A^*(y) F) / (1 + γ)`.
pub fn primal_update(
    op: &MeasurementOp,
    v: &CMatrix,
    y: &[C64],
    gamma: f64,
    fixed: &CMatrix,
) -> Result<CMatrix> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("step {gamma} must be positive")));
    }
    ensure_finite(v, "primal iterate")?;
    if !y.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        return Err(Error::NonFinite("dual iterate"));
    }
    check_shapes(op, v, fixed)?;
    Ok(primal_step(op, v, y, gamma, fixed))
}

fn primal_step(op: &MeasurementOp, v: &CMatrix, y: &[C64], gamma: f64, fixed: &CMatrix) -> CMatrix {
    let g = op.adjoint_factor(y, fixed);
    (v - g * C64::new(gamma, 0.0)) / C64::new(1.0 + gamma, 0.0)
}

/// `y⁺ = y + γ A((2V⁺ − V) F^H) − γ b`, then block shrinkage by `γη`.
#[allow(clippy::too_many_arguments)]
pub fn dual_update(
    op: &MeasurementOp,
    y: &[C64],
    v_new: &CMatrix,
    v_old: &CMatrix,
    gamma: f64,
    eta: f64,
    b: &[C64],
    fixed: &CMatrix,
) -> Result<Vec<C64>> {
    if !(gamma > 0.0) || !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("need γ > 0 and η ≥ 0, got {gamma}, {eta}")));
    }
    ensure_finite(v_new, "primal iterate")?;
    ensure_finite(v_old, "primal iterate")?;
    check_shapes(op, v_new, fixed)?;
    let kn = op.apply_factor(v_new, fixed);
    let ko = op.apply_factor(v_old, fixed);
    Ok(dual_step(y, &kn, &ko, gamma, eta, b))
}

fn dual_step(y: &[C64], k_new: &[C64], k_old: &[C64], gamma: f64, eta: f64, b: &[C64]) -> Vec<C64> {
    let u: Vec<C64> = y
        .iter()
        .zip(k_new.iter().zip(k_old))
        .zip(b)
        .map(|((yi, (kn, ko)), bi)| yi + (kn * 2.0 - ko - bi) * gamma)
        .collect();
    prox_dual(&u, gamma, eta)
}

fn check_shapes(op: &MeasurementOp, v: &CMatrix, fixed: &CMatrix) -> Result<()> {
    let (p, q) = op.factor_shape();
    if v.nrows() != p || fixed.nrows() != q || v.ncols() != fixed.ncols() {
        return Err(Error::ShapeMismatch {
            expected: format!("{p}xr and {q}xr factors"),
            got: format!(
                "{}x{} and {}x{}",
                v.nrows(),
                v.ncols(),
                fixed.nrows(),
                fixed.ncols()
            ),
        });
    }
    Ok(())
}

/// Solve for `V` in `min ½‖V‖² s.t. ‖A(V F^H) − b‖ ≤ η`, where `b` is an
/// acquisition-layout matrix supported on Ω.
pub fn solve_factor(
    op: &MeasurementOp,
    b: &CMatrix,
    fixed: &CMatrix,
    eta: f64,
    cfg: &PdConfig,
    warm: Option<(&CMatrix, &DualState)>,
) -> Result<(CMatrix, DualState, SubproblemReport)> {
    ensure_finite(b, "observed data")?;
    if !op.supported_on_mask(b) {
        return Err(Error::DataOffMask);
    }
    let bv = op.gather(b)?;
    solve_factor_observed(op, &bv, fixed, eta, cfg, warm)
}

/// [`solve_factor`] with `b` already gathered onto Ω.
pub fn solve_factor_observed(
    op: &MeasurementOp,
    b: &[C64],
    fixed: &CMatrix,
    eta: f64,
    cfg: &PdConfig,
    warm: Option<(&CMatrix, &DualState)>,
) -> Result<(CMatrix, DualState, SubproblemReport)> {
    cfg.validate()?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("η must be nonnegative, got {eta}")));
    }
    if b.len() != op.observed_count() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} observed values", op.observed_count()),
            got: format!("{}", b.len()),
        });
    }
    let (p, _) = op.factor_shape();
    let r = fixed.ncols();
    let op_norm = op_norm_with(fixed, &cfg.power)?;
    let gamma = cfg.step_factor / op_norm;
    let b_norm = vec_norm(b);

    // Zero is feasible, hence optimal.
    if b_norm <= eta {
        let zero = CMatrix::zeros(p, r);
        let residual: Vec<C64> = b.iter().map(|x| -x).collect();
        let report = SubproblemReport {
            iterations: 0,
            converged: true,
            gamma,
            eta,
            residual: b_norm,
            objective: 0.0,
            gap_trace: Vec::new(),
        };
        let dual = DualState {
            y: vec![C64::new(0.0, 0.0); b.len()],
            residual,
        };
        return Ok((zero, dual, report));
    }

    let (mut v, mut y) = match warm {
        Some((v0, d0)) => {
            check_shapes(op, v0, fixed)?;
            if d0.y.len() != b.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} dual entries", b.len()),
                    got: format!("{}", d0.y.len()),
                });
            }
            (v0.clone(), d0.y.clone())
        }
        None => {
            check_shapes(op, &CMatrix::zeros(p, r), fixed)?;
            (CMatrix::zeros(p, r), vec![C64::new(0.0, 0.0); b.len()])
        }
    };
    ensure_finite(&v, "warm-start primal")?;

    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut kv = op.apply_factor(&v, fixed);
    let mut gap_trace = Vec::with_capacity(cfg.max_iters.min(1 << 16));
    let mut converged = false;
    let mut iterations = 0;
    let mut residual_norm = f64::INFINITY;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let v_new = primal_step(op, &v, &y, gamma, fixed);
        let kv_new = op.apply_factor(&v_new, fixed);
        y = dual_step(&y, &kv_new, &kv, gamma, eta, b);

        let change = frob(&(&v_new - &v));
        let size = frob(&v_new);
        residual_norm = kv_new
            .iter()
            .zip(b)
            .map(|(k, bi)| (k - bi).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let gap = (residual_norm - eta).max(0.0);
        gap_trace.push(gap);
        v = v_new;
        kv = kv_new;
        if !residual_norm.is_finite() || !size.is_finite() {
            return Err(Error::NonFinite("primal-dual iterate"));
        }
        // with η < ‖b‖ the constraint is active at the optimum, so an
        // iterate strictly inside the ball is not done yet
        let slack = (eta - residual_norm).max(0.0);
        if change <= cfg.tol * size.max(f64::MIN_POSITIVE) && gap.max(slack) <= cfg.feas_tol * scale {
            converged = true;
            break;
        }
    }
    let residual: Vec<C64> = kv.iter().zip(b).map(|(k, bi)| k - bi).collect();
    let report = SubproblemReport {
        iterations,
        converged,
        gamma,
        eta,
        residual: residual_norm,
        objective: 0.5 * frob_sq(&v),
        gap_trace,
    };
    Ok((v, DualState { y, residual }, report))
}
