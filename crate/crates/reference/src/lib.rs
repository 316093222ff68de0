//! Dense, slow, accurate solvers for small instances. Test comparators only.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use lrfill::linalg::{frob, CMatrix, C64};
use lrfill::MeasurementOp;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Core(#[from] lrfill::Error),
    #[error("no convergence after {iterations} iterations (last relative change {change:.3e})")]
    NotConverged { iterations: usize, change: f64 },
    #[error("constraint set is empty: best residual {best:.6e} exceeds η = {eta:.6e}")]
    Infeasible { best: f64, eta: f64 },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ReferenceError>;

/// Sum of singular values.
pub fn nuclear_norm(x: &CMatrix) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.clone().svd(false, false).singular_values.iter().sum()
}

#[derive(Clone, Copy, Debug)]
pub struct NnConfig {
    pub max_iters: usize,
    /// Relative tolerance on the splitting residuals and on the objective
    /// change between iterations.
    pub tol: f64,
    pub rho: f64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol: 1e-8,
            rho: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NnSolution {
    /// Minimizer in the factor-domain matricization of the operator.
    pub x: CMatrix,
    /// Same minimizer folded back to the acquisition layout.
    pub completed: CMatrix,
    pub nuclear_norm: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Singular value thresholding: `U max(Σ − t, 0) V^H`, with the nuclear norm
/// of the result.
fn svt(x: &CMatrix, t: f64) -> (CMatrix, f64) {
    let svd = x.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = CMatrix::zeros(x.nrows(), x.ncols());
    let mut nn = 0.0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let s = s - t;
        if s <= 0.0 {
            continue;
        }
        nn += s;
        out += u.column(k) * v_t.row(k) * C64::new(s, 0.0);
    }
    (out, nn)
}

/// `argmin ‖X‖_*  s.t.  ‖A(X) − b‖_F ≤ η` by ADMM on the splitting `X = Z`,
/// with `Z` carrying the data constraint. The penalty is adapted by residual
/// balancing. `b` is in the acquisition layout and supported on Ω.
pub fn solve_nn_reference(op: &MeasurementOp, b: &CMatrix, eta: f64, cfg: &NnConfig) -> Result<NnSolution> {
    if !(eta >= 0.0) {
        return Err(ReferenceError::Invalid(format!("η must be nonnegative, got {eta}")));
    }
    let (p, q) = op.factor_shape();
    let bf = op.measure_adjoint(b)?;
    let on_mask = op.measure_adjoint(&op.scatter(&vec![C64::new(1.0, 0.0); op.observed_count()]))?;
    let observed: Vec<bool> = on_mask.iter().map(|v| v.re != 0.0).collect();

    let project = |w: &CMatrix| -> CMatrix {
        let mut d2 = 0.0;
        for ((wi, bi), &o) in w.iter().zip(bf.iter()).zip(&observed) {
            if o {
                d2 += (wi - bi).norm_sqr();
            }
        }
        let d = d2.sqrt();
        let s = if d > eta { eta / d } else { 1.0 };
        let mut z = w.clone();
        for ((zi, bi), &o) in z.iter_mut().zip(bf.iter()).zip(&observed) {
            if o {
                *zi = bi + (*zi - bi) * s;
            }
        }
        z
    };

    let mut rho = cfg.rho;
    let mut z = project(&CMatrix::zeros(p, q));
    let mut u = CMatrix::zeros(p, q);
    let mut last = f64::INFINITY;
    let mut change = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let (x, nn) = svt(&(&z - &u), 1.0 / rho);
        let z_old = z;
        z = project(&(&x + &u));
        let r = &x - &z;
        u += &r;
        let primal = frob(&r);
        let dual = rho * frob(&(&z - &z_old));
        let scale = frob(&x).max(frob(&z)).max(f64::MIN_POSITIVE);
        change = (nn - last).abs() / nn.max(f64::MIN_POSITIVE);
        last = nn;
        if primal <= cfg.tol * scale && dual <= cfg.tol * scale && change <= cfg.tol {
            let nuclear = nuclear_norm(&z);
            let residual = frob(&(op.measure(&z)? - b));
            return Ok(NnSolution {
                completed: op.to_acquisition(&z)?,
                x: z,
                nuclear_norm: nuclear,
                residual,
                iterations: it,
            });
        }
        // residual balancing; u is scaled by 1/ρ
        if primal > 10.0 * dual {
            rho *= 2.0;
            u /= C64::new(2.0, 0.0);
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u *= C64::new(2.0, 0.0);
        }
    }
    Err(ReferenceError::NotConverged {
        iterations: cfg.max_iters,
        change,
    })
}

/// Dense real matrix of the real-linear map `V ↦ A(V F^H)` on Ω, acting on
/// `[Re vec V; Im vec V]` and producing `[Re y; Im y]`.
pub fn dense_lifted(op: &MeasurementOp, fixed: &CMatrix) -> DMatrix<f64> {
    let (p, _) = op.factor_shape();
    let r = fixed.ncols();
    let n = op.observed_count();
    let mut k = DMatrix::zeros(2 * n, 2 * p * r);
    for (c, unit) in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)].into_iter().enumerate() {
        for idx in 0..p * r {
            let mut v = CMatrix::zeros(p, r);
            v[idx] = unit;
            let col = c * p * r + idx;
            for (i, y) in op.apply_factor(&v, fixed).iter().enumerate() {
                k[(i, col)] = y.re;
                k[(n + i, col)] = y.im;
            }
        }
    }
    k
}

fn to_real(v: impl Iterator<Item = C64> + Clone) -> DVector<f64> {
    let re: Vec<f64> = v.clone().map(|z| z.re).chain(v.map(|z| z.im)).collect();
    DVector::from_vec(re)
}

#[derive(Clone, Copy, Debug)]
pub struct FactorRefConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Gradient step on `½‖L‖²`, in `(0, 1]`.
    pub step: f64,
}

impl Default for FactorRefConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-8,
            step: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FactorRefSolution {
    pub v: CMatrix,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Euclidean projection onto `{V : ‖K V − b‖ ≤ η}` for a dense real `K`, by
/// bisection on the multiplier of `min ½‖V − Z‖² + ½μ(‖KV − b‖² − η²)`.
pub struct BallProjector {
    s: DVector<f64>,
    v: DMatrix<f64>,
    beta: DVector<f64>,
    perp_sq: f64,
    eta: f64,
}

impl BallProjector {
    pub fn new(k: DMatrix<f64>, b: &DVector<f64>, eta: f64) -> Result<Self> {
        let svd = k.svd(true, true);
        let u = svd.u.unwrap();
        let v = svd.v_t.unwrap().transpose();
        let beta = u.transpose() * b;
        let perp_sq = (b.norm_squared() - beta.norm_squared()).max(0.0);
        if perp_sq.sqrt() > eta {
            return Err(ReferenceError::Infeasible {
                best: perp_sq.sqrt(),
                eta,
            });
        }
        Ok(Self {
            s: svd.singular_values,
            v,
            beta,
            perp_sq,
            eta,
        })
    }

    fn residual_sq(&self, c: &DVector<f64>, mu: f64) -> f64 {
        self.perp_sq
            + c.iter()
                .zip(self.s.iter())
                .map(|(ci, si)| (ci / (1.0 + mu * si * si)).powi(2))
                .sum::<f64>()
    }

    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let w = self.v.transpose() * z;
        // K z − b restricted to range(U) is Σ(s w − β) u_i
        let c = self.s.component_mul(&w) - &self.beta;
        let target = self.eta * self.eta;
        if self.residual_sq(&c, 0.0) <= target {
            return z.clone();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.residual_sq(&c, hi) > target {
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.residual_sq(&c, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let mu = hi;
        // V^H x = (w + μ s β)/(1 + μ s²); components outside range(V) keep z
        let coeff = DVector::from_iterator(
            w.len(),
            w.iter()
                .zip(self.s.iter().zip(self.beta.iter()))
                .map(|(wi, (si, bi))| (wi + mu * si * bi) / (1.0 + mu * si * si) - wi),
        );
        z + &self.v * coeff
    }
}

/// `argmin ½‖V‖²  s.t.  ‖A(V F^H) − b‖ ≤ η` by projected gradient, with the
/// exact projection of [`BallProjector`]. `b` holds the values on Ω in
/// operator order.
pub fn solve_factor_reference(
    op: &MeasurementOp,
    b: &[C64],
    fixed: &CMatrix,
    eta: f64,
    cfg: &FactorRefConfig,
) -> Result<FactorRefSolution> {
    if !(cfg.step > 0.0 && cfg.step <= 1.0) {
        return Err(ReferenceError::Invalid(format!("step must lie in (0, 1], got {}", cfg.step)));
    }
    let (p, _) = op.factor_shape();
    let r = fixed.ncols();
    let k = dense_lifted(op, fixed);
    let bv = to_real(b.iter().copied());
    let proj = BallProjector::new(k.clone(), &bv, eta)?;
    let mut x = DVector::zeros(2 * p * r);
    for it in 1..=cfg.max_iters {
        let next = proj.project(&(&x * (1.0 - cfg.step)));
        let change = (&next - &x).norm();
        let size = next.norm();
        x = next;
        if change <= cfg.tol * size.max(f64::MIN_POSITIVE) {
            let v = CMatrix::from_fn(p, r, |i, j| C64::new(x[i + j * p], x[p * r + i + j * p]));
            let residual = (&k * &x - &bv).norm();
            return Ok(FactorRefSolution {
                objective: 0.5 * x.norm_squared(),
                v,
                residual,
                iterations: it,
            });
        }
    }
    Err(ReferenceError::NotConverged {
        iterations: cfg.max_iters,
        change: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lrfill::altmin::{interpolate_slice, EtaTarget, OuterConfig};
    use lrfill::linalg::{gaussian_matrix, rng};
    use lrfill::sampling::uniform_entry_mask;
    use lrfill::solver::{solve_factor, PdConfig};
    use lrfill::synth::{plant_slice, PlantSpec, Profile};
    use lrfill::{Mode, SamplingMask};
    use proptest::prelude::*;

    fn plain_op(p: usize, q: usize, keep: f64, seed: u64) -> MeasurementOp {
        MeasurementOp::new(uniform_entry_mask(p, q, keep, seed).unwrap(), Mode::SrcPair)
    }

    #[test]
    fn nuclear_norm_examples() {
        let id = CMatrix::identity(6, 6);
        assert!((nuclear_norm(&id) - 6.0).abs() < 1e-12);
        let mut r = rng(1);
        let u = gaussian_matrix(7, 1, &mut r);
        let v = gaussian_matrix(5, 1, &mut r);
        let x = &u * v.adjoint();
        assert!((nuclear_norm(&x) - frob(&u) * frob(&v)).abs() < 1e-10);
        let y = gaussian_matrix(8, 6, &mut r);
        assert!(nuclear_norm(&y) >= frob(&y));
        assert_eq!(nuclear_norm(&CMatrix::zeros(0, 3)), 0.0);
    }

    #[test]
    fn full_mask_zero_eta_returns_data() {
        let mut r = rng(2);
        let op = plain_op(6, 5, 1.0, 0);
        let b = gaussian_matrix(6, 5, &mut r);
        let s = solve_nn_reference(&op, &b, 0.0, &NnConfig::default()).unwrap();
        assert!(frob(&(&s.completed - &b)) <= 1e-6 * frob(&b));
    }

    #[test]
    fn exact_completion_of_planted_rank_two() {
        let plant = plant_slice(&PlantSpec {
            p: 20,
            q: 20,
            rank: 2,
            profile: Profile::Flat,
            noise: 0.0,
            seed: 4,
        })
        .unwrap();
        let op = plain_op(20, 20, 0.6, 5);
        let b = plant.observe(&op).unwrap();
        let s = solve_nn_reference(&op, &b, 0.0, &NnConfig::default()).unwrap();
        assert!(frob(&(&s.completed - &plant.truth)) <= 1e-4 * frob(&plant.truth));
        assert!((s.nuclear_norm - 2.0).abs() < 1e-4);
    }

    #[test]
    fn rank_one_entry_fixed_by_minor() {
        // One entry of a positive rank-1 4x4 matrix is missing; the vanishing
        // 2x2 minor x_00 x_11 = x_01 x_10 pins it.
        let u = [1.0, 2.0, 0.5, 1.5];
        let v = [0.8, 1.2, 2.0, 0.4];
        let x = CMatrix::from_fn(4, 4, |i, j| C64::new(u[i] * v[j], 0.0));
        let mut observed = vec![true; 16];
        observed[0] = false;
        let op = MeasurementOp::new(SamplingMask::plain(4, 4, observed, None).unwrap(), Mode::SrcPair);
        let b = op.measure(&x).unwrap();
        let s = solve_nn_reference(&op, &b, 0.0, &NnConfig::default()).unwrap();
        let from_minor = x[(0, 1)] * x[(1, 0)] / x[(1, 1)];
        assert!((s.completed[(0, 0)] - from_minor).norm() < 1e-5, "{}", s.completed[(0, 0)]);
    }

    #[test]
    fn factor_reference_matches_pd() {
        let mut r = rng(3);
        let op = plain_op(20, 15, 1.0, 0);
        let fixed = gaussian_matrix(15, 3, &mut r);
        let b = op.measure(&(gaussian_matrix(20, 3, &mut r) * fixed.adjoint())).unwrap();
        let eta = 0.1 * frob(&b);
        let cfg = PdConfig {
            max_iters: 20_000,
            tol: 1e-10,
            feas_tol: 1e-9,
            ..PdConfig::default()
        };
        let (v, _, rep) = solve_factor(&op, &b, &fixed, eta, &cfg, None).unwrap();
        let reference = solve_factor_reference(&op, &op.gather(&b).unwrap(), &fixed, eta, &FactorRefConfig::default()).unwrap();
        // the projection of zero is already optimal; the second pass confirms it
        assert!(reference.iterations <= 2);
        assert!((reference.residual - eta).abs() <= 1e-9 * eta);
        assert!((0.5 * frob(&v).powi(2) - reference.objective).abs() <= 1e-6 * reference.objective);
        assert!(rep.residual <= eta * (1.0 + 1e-8));
        assert!(frob(&(&v - &reference.v)) <= 1e-4 * frob(&reference.v));
    }

    #[test]
    fn infeasible_subproblem_detected() {
        let mut r = rng(6);
        let op = plain_op(6, 6, 1.0, 0);
        let fixed = gaussian_matrix(6, 1, &mut r);
        let b = gaussian_matrix(6, 6, &mut r);
        let err = solve_factor_reference(&op, &op.gather(&b).unwrap(), &fixed, 1e-3, &FactorRefConfig::default());
        assert!(matches!(err, Err(ReferenceError::Infeasible { .. })));
    }

    #[test]
    fn factored_objective_dominates_nuclear_norm() {
        let plant = plant_slice(&PlantSpec {
            p: 20,
            q: 16,
            rank: 3,
            profile: Profile::Geometric(0.5),
            noise: 0.02,
            seed: 8,
        })
        .unwrap();
        let op = plain_op(20, 16, 0.7, 9);
        let b = plant.observe(&op).unwrap();
        let eta = 0.05 * frob(&b);
        let oracle = solve_nn_reference(&op, &b, eta, &NnConfig::default()).unwrap();
        let cfg = OuterConfig {
            rank: 4,
            eta: EtaTarget::Absolute(eta),
            outer_iters: 30,
            ..OuterConfig::default()
        };
        let sol = interpolate_slice(&op, &b, &cfg).unwrap();
        // any feasible factorization costs at least the convex optimum
        assert!(sol.report.residual <= 1.01 * eta);
        assert!(sol.factors.objective() >= oracle.nuclear_norm * (1.0 - 1e-3));
        assert!(oracle.residual <= eta * (1.0 + 1e-6));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn ball_projection_lands_inside_and_is_idempotent(seed in any::<u64>(), n in 2usize..8, m in 1usize..8, frac in 0.05f64..2.0) {
            let mut r = rng(seed);
            let k = DMatrix::from_fn(n, m, |_, _| lrfill::linalg::complex_normal(&mut r).re);
            let b = DVector::from_fn(n, |_, _| lrfill::linalg::complex_normal(&mut r).re);
            // make the set nonempty: target a point in range(K)
            let b = &k * DVector::from_fn(m, |_, _| lrfill::linalg::complex_normal(&mut r).re) + b * 0.01;
            let eta = frac * b.norm();
            if let Ok(proj) = BallProjector::new(k.clone(), &b, eta) {
                let z = DVector::from_fn(m, |_, _| lrfill::linalg::complex_normal(&mut r).re * 5.0);
                let x = proj.project(&z);
                prop_assert!((&k * &x - &b).norm() <= eta * (1.0 + 1e-9) + 1e-12);
                let again = proj.project(&x);
                prop_assert!((&again - &x).norm() <= 1e-9 * (1.0 + x.norm()));
            }
        }
    }
}
