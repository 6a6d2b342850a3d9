//! Moments of the pairwise statistic `δ² = ||w_l - w_k||²` and Chernoff
//! bounds on the clustering error probabilities, under the steady-state
//! model `w_l - w_k ~ N(d⋆, μ Δ)`.

use nalgebra::DMatrix;

use crate::{Error, Result};

fn quad_form(x: &[f64], a: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += x[i] * a[(i, j)] * x[j];
        }
    }
    s
}

fn check_dims(d_star: &[f64], delta: &DMatrix<f64>) -> Result<()> {
    if delta.nrows() != d_star.len() || delta.ncols() != d_star.len() {
        return Err(Error::DimensionMismatch(format!(
            "d⋆ has {} entries but Δ is {:?}",
            d_star.len(),
            delta.shape()
        )));
    }
    Ok(())
}

/// Mean `||d⋆||² + μ Tr(Δ)` and variance `4μ d⋆ᵀΔd⋆ + 2μ² Tr(Δ²)`.
pub fn delta_stat_moments(d_star: &[f64], delta: &DMatrix<f64>, mu: f64) -> Result<(f64, f64)> {
    check_dims(d_star, delta)?;
    if !(mu > 0.0) {
        return Err(Error::DomainError(format!("step size {mu} must be positive")));
    }
    let d_sq: f64 = d_star.iter().map(|x| x * x).sum();
    let mean = d_sq + mu * delta.trace();
    let var = 4.0 * mu * quad_form(d_star, delta) + 2.0 * mu * mu * (delta * delta).trace();
    Ok((mean, var))
}

/// Spectral norm of a symmetric matrix.
fn sym_norm(a: &DMatrix<f64>) -> f64 {
    a.symmetric_eigenvalues().amax()
}

/// Bound on `P[δ² > θ]` for a same-cluster pair (`d⋆ = 0`):
/// `(θ' e / (μ M))^{M/2} exp(-θ' / (2μ))` with `θ' = θ / ||Δ||`.
/// The value may exceed 1 near the validity edge `μ < θ'/M`.
pub fn type1_bound(theta: f64, delta: &DMatrix<f64>, mu: f64, dim: usize) -> Result<f64> {
    if !(theta > 0.0) || !(mu > 0.0) || dim == 0 {
        return Err(Error::DomainError(format!(
            "type-I bound needs θ > 0, μ > 0 and M ≥ 1 (θ = {theta}, μ = {mu}, M = {dim})"
        )));
    }
    let norm = sym_norm(delta);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let theta_p = theta / norm;
    let m = dim as f64;
    let limit = theta_p / m;
    if mu >= limit {
        return Err(Error::StepSizeTooLarge { mu, limit });
    }
    let log_bound = 0.5 * m * (theta_p * std::f64::consts::E / (mu * m)).ln() - theta_p / (2.0 * mu);
    Ok(log_bound.exp())
}

/// Bound on `P[δ² < θ]` for a pair from different clusters:
/// `½ exp(-(||d⋆||² - θ)² / (8 μ ||d⋆||²_Λ))`, where `||d⋆||²_Λ = Σ λ_h² x̄_h²`
/// with `Δ = U Λ Uᵀ` and `x̄ = Λ^{-1/2} Uᵀ d⋆`.
pub fn type2_bound(theta: f64, d_star: &[f64], delta: &DMatrix<f64>, mu: f64) -> Result<f64> {
    check_dims(d_star, delta)?;
    if !(mu > 0.0) {
        return Err(Error::DomainError(format!("step size {mu} must be positive")));
    }
    let d_sq: f64 = d_star.iter().map(|x| x * x).sum();
    if !(theta > 0.0 && theta <= d_sq) {
        return Err(Error::ThresholdOutOfRange { theta, upper: d_sq });
    }
    if theta == d_sq {
        return Ok(0.5);
    }
    let eig = ((delta + delta.transpose()) * 0.5).symmetric_eigen();
    let lambda_max = eig.eigenvalues.amax();
    let d_norm = d_sq.sqrt();
    let mut weighted = 0.0;
    for h in 0..d_star.len() {
        let y: f64 = (0..d_star.len()).map(|i| eig.eigenvectors[(i, h)] * d_star[i]).sum();
        let lambda = eig.eigenvalues[h];
        if lambda <= 1e-12 * lambda_max || lambda_max == 0.0 {
            if y.abs() > 1e-12 * d_norm {
                return Err(Error::DegenerateDelta);
            }
            continue;
        }
        let x_bar = y / lambda.sqrt();
        weighted += lambda * lambda * x_bar * x_bar;
    }
    let gap = d_sq - theta;
    Ok(0.5 * (-(gap * gap) / (8.0 * mu * weighted)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn moment_examples() {
        let (mean, var) = delta_stat_moments(&[0.0, 0.0], &DMatrix::identity(2, 2), 0.01).unwrap();
        assert_relative_eq!(mean, 0.02, max_relative = 1e-14);
        assert_relative_eq!(var, 4e-4, max_relative = 1e-14);

        let (mean, var) = delta_stat_moments(&[1.0, 2.0], &DMatrix::zeros(2, 2), 0.3).unwrap();
        assert_eq!((mean, var), (5.0, 0.0));

        let (mean, var) = delta_stat_moments(&[1.0, 0.0], &dmatrix![2.0, 0.0; 0.0, 3.0], 0.1).unwrap();
        assert_relative_eq!(mean, 1.5, max_relative = 1e-14);
        assert_relative_eq!(var, 1.06, max_relative = 1e-14);
    }

    #[test]
    fn moments_match_noncentral_parameterization() {
        let (m, sigma_sq, mu) = (4usize, 0.7, 0.02);
        let d_star = [0.3, -0.1, 0.5, 0.2];
        let delta = DMatrix::identity(m, m) * sigma_sq;
        let (mean, var) = delta_stat_moments(&d_star, &delta, mu).unwrap();
        let s = mu * sigma_sq;
        let lambda = d_star.iter().map(|x| x * x).sum::<f64>() / s;
        assert_relative_eq!(mean, s * (m as f64 + lambda), max_relative = 1e-13);
        assert_relative_eq!(var, s * s * 2.0 * (m as f64 + 2.0 * lambda), max_relative = 1e-13);
    }

    #[test]
    fn type1_example() {
        let b = type1_bound(0.1, &dmatrix![1.0], 0.01, 1).unwrap();
        let expected = (0.1 * std::f64::consts::E / 0.01).sqrt() * (-5.0f64).exp();
        assert_relative_eq!(b, expected, max_relative = 1e-13);
        assert_relative_eq!(b, 0.035131, max_relative = 1e-4);
    }

    #[test]
    fn type1_validity_region() {
        let err = type1_bound(0.1, &dmatrix![1.0], 0.1, 1).unwrap_err();
        assert!(matches!(err, Error::StepSizeTooLarge { .. }));
        assert_eq!(type1_bound(0.1, &DMatrix::zeros(2, 2), 0.5, 2).unwrap(), 0.0);
    }

    #[test]
    fn type1_decreases_with_mu() {
        let delta = dmatrix![1.5, 0.2; 0.2, 0.8];
        let mut mu = 0.05;
        let mut prev = type1_bound(0.5, &delta, mu, 2).unwrap();
        for _ in 0..6 {
            mu *= 0.5;
            let next = type1_bound(0.5, &delta, mu, 2).unwrap();
            assert!(next > 0.0 && next < prev);
            prev = next;
        }
    }

    #[test]
    fn type2_examples() {
        let delta = DMatrix::identity(2, 2);
        let d = [1.0, 0.0];
        assert_eq!(type2_bound(1.0, &d, &delta, 0.01).unwrap(), 0.5);
        let b = type2_bound(0.5, &d, &delta, 0.01).unwrap();
        assert_relative_eq!(b, 0.5 * (-3.125f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(b, 0.021969, max_relative = 1e-4);
    }

    #[test]
    fn type2_errors() {
        let delta = DMatrix::identity(2, 2);
        assert!(matches!(
            type2_bound(2.0, &[1.0, 0.0], &delta, 0.01),
            Err(Error::ThresholdOutOfRange { .. })
        ));
        assert!(matches!(
            type2_bound(0.1, &[0.0, 0.0], &delta, 0.01),
            Err(Error::ThresholdOutOfRange { .. })
        ));
        let singular = dmatrix![1.0, 0.0; 0.0, 0.0];
        assert_eq!(type2_bound(0.5, &[0.0, 1.0], &singular, 0.01), Err(Error::DegenerateDelta));
        assert!(type2_bound(0.5, &[1.0, 0.0], &singular, 0.01).is_ok());
    }
}
