//! Discrete and continuous Lyapunov solvers.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Default relative residual for the discrete solver.
pub const DISCRETE_TOL: f64 = 1e-13;
const MAX_FIXED_POINT_ITERS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiscreteMethod {
    /// `Θ_{j+1} = D Θ_j Dᵀ + Q` from `Θ_0 = Q`.
    #[default]
    FixedPoint,
    /// Squares `D` every step, so it needs only `O(log)` iterations of the
    /// fixed-point count.
    Doubling,
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() <= 1e-14 * scale
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(d: &DMatrix<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    if is_symmetric(d) {
        d.symmetric_eigenvalues().amax()
    } else {
        d.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn check_square_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov operands have shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Solves `Θ = D Θ Dᵀ + Q` with the default fixed-point method.
pub fn solve_discrete_lyapunov(d: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    solve_discrete_lyapunov_with(d, q, tol, DiscreteMethod::FixedPoint)
}

/// Solves `Θ = D Θ Dᵀ + Q`, stopping once `||D Θ Dᵀ + Q - Θ||_F <= tol ||Q||_F`.
pub fn solve_discrete_lyapunov_with(
    d: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    method: DiscreteMethod,
) -> Result<DMatrix<f64>> {
    check_square_pair(d, q)?;
    let rho = spectral_radius(d);
    if !(rho < 1.0) {
        return Err(Error::UnstableD(rho));
    }
    let q_norm = q.norm();
    if q_norm == 0.0 {
        return Ok(q.clone());
    }
    let target = tol * q_norm;
    let dt = d.transpose();
    let mut theta = q.clone();
    let residual = |theta: &DMatrix<f64>| (d * theta * &dt + q - theta).norm();
    match method {
        DiscreteMethod::FixedPoint => {
            let mut tmp = DMatrix::zeros(d.nrows(), d.ncols());
            for _ in 0..MAX_FIXED_POINT_ITERS {
                d.mul_to(&theta, &mut tmp);
                let mut next = &tmp * &dt;
                next += q;
                let change = (&next - &theta).norm();
                theta = next;
                if change <= target {
                    return Ok(symmetrize(theta));
                }
            }
        }
        DiscreteMethod::Doubling => {
            let mut dk = d.clone();
            for _ in 0..200 {
                let term = &dk * &theta * dk.transpose();
                theta += &term;
                dk = &dk * &dk;
                if term.norm() <= target * 1e-3 || residual(&theta) <= target {
                    return Ok(symmetrize(theta));
                }
            }
        }
    }
    Err(Error::NoConvergence { iters: MAX_FIXED_POINT_ITERS, residual: residual(&theta) })
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Solves `H Φ + Φ H = R` for symmetric positive definite `H` in the
/// eigenbasis of `H`: `Φ'_ij = R'_ij / (λ_i + λ_j)`.
pub fn solve_continuous_lyapunov(h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square_pair(h, r)?;
    if !is_symmetric(h) {
        return Err(Error::NotPositiveDefinite("H is not symmetric".into()));
    }
    let eig = symmetrize(h.clone()).symmetric_eigen();
    let lambda_min = eig.eigenvalues.min();
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue of H is {lambda_min}"
        )));
    }
    let u = &eig.eigenvectors;
    let mut rp = u.transpose() * r * u;
    let n = h.nrows();
    for i in 0..n {
        for j in 0..n {
            rp[(i, j)] /= eig.eigenvalues[i] + eig.eigenvalues[j];
        }
    }
    Ok(symmetrize(u * rp * u.transpose()))
}
