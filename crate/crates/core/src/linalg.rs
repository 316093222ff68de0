//! Small dense complex helpers shared by the solvers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Real part of the Frobenius inner product `Re tr(A^H B)`.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frob(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frob_sq(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

pub fn ensure_finite(a: &CMatrix, what: &'static str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Deterministic RNG used everywhere a seed is accepted.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex standard normal: real and imaginary parts each N(0, 1/2).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill order is part of the determinism contract
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    CMatrix::from_vec(rows, cols, data)
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iters: 20_000,
            seed: 0x5eed,
        }
    }
}

/// Largest eigenvalue of a Hermitian positive semidefinite operator given as a
/// closure, by power iteration from a seeded random start.
pub fn power_iteration<F>(dim: usize, cfg: &PowerIteration, mut apply: F) -> f64
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = rng(cfg.seed);
    let mut x: Vec<C64> = (0..dim).map(|_| complex_normal(&mut rng)).collect();
    normalize(&mut x);
    let mut lambda = 0.0;
    for _ in 0..cfg.max_iters {
        let y = apply(&x);
        // Rayleigh quotient with unit x
        let next = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>();
        let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        x = y;
        x.iter_mut().for_each(|v| *v /= ny);
        let done = (next - lambda).abs() <= cfg.tol * next.abs();
        lambda = next;
        if done {
            break;
        }
    }
    lambda
}

fn normalize(x: &mut [C64]) {
    let n = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Spectral norm `‖M‖_op` via power iteration on the small Gram `M^H M`.
pub fn op_norm_with(m: &CMatrix, cfg: &PowerIteration) -> Result<f64> {
    ensure_finite(m, "operator-norm input")?;
    if m.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return Err(Error::ZeroOperator);
    }
    let gram = m.adjoint() * m;
    let k = gram.nrows();
    let lambda = power_iteration(k, cfg, |x| {
        let v = nalgebra::DVector::from_column_slice(x);
        (&gram * v).as_slice().to_vec()
    });
    Ok(lambda.max(0.0).sqrt())
}

/// `‖A B^H − C D^H‖_F` without forming either product.
pub fn product_distance(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> f64 {
    let aa = a.adjoint() * a;
    let bb = b.adjoint() * b;
    let cc = c.adjoint() * c;
    let dd = d.adjoint() * d;
    let ac = a.adjoint() * c;
    let db = d.adjoint() * b;
    let t1 = trace_product(&aa, &bb);
    let t2 = trace_product(&cc, &dd);
    let t3 = trace_product(&ac, &db);
    (t1 + t2 - 2.0 * t3).max(0.0).sqrt()
}

/// `Re tr(X Y^T)`-style contraction: `Re Σ_ij X_ij Y_ji`.
fn trace_product(x: &CMatrix, y: &CMatrix) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            acc += x[(i, j)] * y[(j, i)];
        }
    }
    acc.re
}

/// `‖A B^H‖_F` without forming the product.
pub fn product_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    let aa = a.adjoint() * a;
    let bb = b.adjoint() * b;
    trace_product(&aa, &bb).max(0.0).sqrt()
}

/// Balanced factors `(U Σ^{1/2}, V Σ^{1/2})` of `A B^H`, via thin QR of each
/// factor and an SVD of the small core. Leaves the product unchanged and
/// minimizes `½(‖A‖² + ‖B‖²)` over factorizations of the same width.
pub fn balance(a: &CMatrix, b: &CMatrix) -> (CMatrix, CMatrix) {
    let r = a.ncols();
    if r > a.nrows() || r > b.nrows() {
        return (a.clone(), b.clone());
    }
    let qa = a.clone().qr();
    let qb = b.clone().qr();
    let core = qa.r() * qb.r().adjoint();
    let svd = core.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return (a.clone(), b.clone());
    };
    let root = CMatrix::from_diagonal(&svd.singular_values.map(|s| C64::new(s.sqrt(), 0.0)));
    (qa.q() * u * &root, qb.q() * v_t.adjoint() * root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_keeps_product_and_equalizes() {
        let mut r = rng(9);
        let a = gaussian_matrix(8, 3, &mut r) * C64::new(5.0, 0.0);
        let b = gaussian_matrix(6, 3, &mut r) * C64::new(0.1, 0.0);
        let (a2, b2) = balance(&a, &b);
        let before = &a * b.adjoint();
        assert!(frob(&(&a2 * b2.adjoint() - &before)) <= 1e-12 * frob(&before));
        let g = a2.adjoint() * &a2 - b2.adjoint() * &b2;
        assert!(frob(&g) <= 1e-12 * frob(&before));
        let nuclear: f64 = before.svd(false, false).singular_values.iter().sum();
        assert!((0.5 * (frob_sq(&a2) + frob_sq(&b2)) - nuclear).abs() <= 1e-12 * nuclear);
    }

    #[test]
    fn product_distance_matches_dense() {
        let mut r = rng(3);
        let a = gaussian_matrix(7, 3, &mut r);
        let b = gaussian_matrix(5, 3, &mut r);
        let c = gaussian_matrix(7, 2, &mut r);
        let d = gaussian_matrix(5, 2, &mut r);
        let dense = frob(&(&a * b.adjoint() - &c * d.adjoint()));
        assert!((product_distance(&a, &b, &c, &d) - dense).abs() < 1e-10 * dense);
        let pn = frob(&(&a * b.adjoint()));
        assert!((product_norm(&a, &b) - pn).abs() < 1e-10 * pn);
    }

    #[test]
    fn complex_normal_moment() {
        let mut r = rng(11);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| complex_normal(&mut r).norm_sqr()).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.01, "{m}");
    }
}
