//! Noncentral chi-square density and the scaled density of `δ²` when
//! `Δ = σ² I`.

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

const ASYMPTOTIC_FROM: f64 = 20.0;

/// `ln I_ν(z)` for `ν ≥ -1/2`, `z ≥ 0`.
///
/// Power series below the switch point, Hankel asymptotic expansion above
/// it. The asymptotic branch is only taken when `z` also dominates `ν²`,
/// since the expansion's first terms scale like `ν²/z`.
pub fn ln_bessel_i(nu: f64, z: f64) -> f64 {
    debug_assert!(nu >= -0.5 && z >= 0.0);
    if z == 0.0 {
        return if nu == 0.0 {
            0.0
        } else if nu > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    if z >= ASYMPTOTIC_FROM && z >= 2.0 * nu * nu {
        ln_bessel_i_asymptotic(nu, z)
    } else {
        ln_bessel_i_series(nu, z)
    }
}

fn ln_bessel_i_series(nu: f64, z: f64) -> f64 {
    // I_ν(z) = (z/2)^ν / Γ(ν+1) Σ_k r_k with r_0 = 1 and
    // r_{k+1} = r_k (z²/4) / ((k+1)(k+ν+1)); r and the sum share a
    // running scale so large z cannot overflow.
    const RESCALE: f64 = 1e250;
    let q = 0.25 * z * z;
    let mut r = 1.0;
    let mut sum = 1.0;
    let mut ln_scale = 0.0;
    let mut k = 0.0;
    loop {
        r *= q / ((k + 1.0) * (k + nu + 1.0));
        sum += r;
        k += 1.0;
        if sum > RESCALE {
            sum /= RESCALE;
            r /= RESCALE;
            ln_scale += RESCALE.ln();
        }
        if r < 1e-17 * sum && k > 0.5 * z {
            break;
        }
    }
    nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) + sum.ln() + ln_scale
}

fn ln_bessel_i_asymptotic(nu: f64, z: f64) -> f64 {
    let mu4 = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu4 - odd * odd) / (k as f64 * 8.0 * z);
        if term.abs() >= prev || term == 0.0 {
            break;
        }
        sum += term;
        prev = term.abs();
        if prev < 1e-17 * sum.abs() {
            break;
        }
    }
    z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + sum.ln()
}

/// Central chi-square density with `d` degrees of freedom.
pub fn central_chi2_pdf(x: f64, d: f64) -> Result<f64> {
    check(x, d, 0.0)?;
    let half = 0.5 * d;
    if x == 0.0 {
        return Ok(if d < 2.0 {
            f64::INFINITY
        } else if d == 2.0 {
            0.5
        } else {
            0.0
        });
    }
    Ok(((half - 1.0) * x.ln() - 0.5 * x - half * std::f64::consts::LN_2 - ln_gamma(half)).exp())
}

fn check(x: f64, d: f64, lambda: f64) -> Result<()> {
    if !(x >= 0.0) || !(d >= 1.0) || !(lambda >= 0.0) || !x.is_finite() || !lambda.is_finite() {
        return Err(Error::DomainError(format!(
            "chi-square density needs x ≥ 0, d ≥ 1, λ ≥ 0 (x = {x}, d = {d}, λ = {lambda})"
        )));
    }
    Ok(())
}

/// `½ (x/λ)^{(d-2)/4} e^{-(x+λ)/2} I_{(d-2)/2}(√(λx))`, falling back to the
/// central density when `λ = 0`.
pub fn noncentral_chi2_pdf(x: f64, d: f64, lambda: f64) -> Result<f64> {
    check(x, d, lambda)?;
    if lambda == 0.0 {
        return central_chi2_pdf(x, d);
    }
    if x == 0.0 {
        return Ok(if d < 2.0 {
            f64::INFINITY
        } else if d == 2.0 {
            0.5 * (-0.5 * lambda).exp()
        } else {
            0.0
        });
    }
    let nu = 0.5 * (d - 2.0);
    let ln_f = -std::f64::consts::LN_2 + 0.5 * nu * (x.ln() - lambda.ln()) - 0.5 * (x + lambda)
        + ln_bessel_i(nu, (lambda * x).sqrt());
    Ok(ln_f.exp())
}

/// Density of `δ²` at `z` when `Δ = σ² I`:
/// `(1/(μσ²)) f_χ²(z/(μσ²); M, ||d⋆||²/(μσ²))`.
pub fn delta_sq_pdf_special_case(
    z: f64,
    dim: usize,
    d_star_norm_sq: f64,
    sigma_sq: f64,
    mu: f64,
) -> Result<f64> {
    if !(sigma_sq > 0.0) || !(mu > 0.0) || !(z >= 0.0) || !(d_star_norm_sq >= 0.0) {
        return Err(Error::DomainError(format!(
            "δ² density needs z ≥ 0, σ² > 0, μ > 0, ||d⋆||² ≥ 0 (z = {z}, σ² = {sigma_sq}, μ = {mu})"
        )));
    }
    let s = mu * sigma_sq;
    Ok(noncentral_chi2_pdf(z / s, dim as f64, d_star_norm_sq / s)? / s)
}
