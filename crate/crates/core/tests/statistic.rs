use diffnet_core::analysis::{delta_stat_moments, type1_bound, type2_bound};
use diffnet_core::rng::{stream, StreamKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const DRAWS: usize = 1_000_000;

/// Draws of `||x||²` for `x ~ N(d⋆, μΔ)`.
fn draws(d_star: &[f64], delta: &DMatrix<f64>, mu: f64, seed: u64) -> Vec<f64> {
    let m = d_star.len();
    let l = (delta * mu).cholesky().unwrap().l();
    let d = DVector::from_column_slice(d_star);
    let mut rng = stream(seed, StreamKind::Minimizers, 0, 0);
    (0..DRAWS)
        .map(|_| {
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&d + &l * z).norm_squared()
        })
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn moments_match_monte_carlo() {
    let cases = [
        (vec![0.0, 0.0], DMatrix::identity(2, 2), 0.01),
        (vec![1.0, 0.0], DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), 0.1),
        (
            vec![0.5, -1.0, 0.25],
            DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.2, 0.1, -0.2, 0.7]),
            0.02,
        ),
    ];
    let (m0, v0) = delta_stat_moments(&cases[0].0, &cases[0].1, cases[0].2).unwrap();
    assert!((m0 - 0.02).abs() < 1e-15 && (v0 - 4e-4).abs() < 1e-15);
    let (m1, v1) = delta_stat_moments(&cases[1].0, &cases[1].1, cases[1].2).unwrap();
    assert!((m1 - 1.5).abs() < 1e-12 && (v1 - 1.06).abs() < 1e-12);
    for (i, (d, delta, mu)) in cases.iter().enumerate() {
        let (mean, var) = delta_stat_moments(d, delta, *mu).unwrap();
        let (mc_mean, mc_var) = mean_var(&draws(d, delta, *mu, i as u64));
        assert!(rel(mc_mean, mean) < 0.02, "case {i}: mean {mc_mean} vs {mean}");
        assert!(rel(mc_var, var) < 0.02, "case {i}: variance {mc_var} vs {var}");
    }
}

#[test]
fn type1_bound_dominates_monte_carlo() {
    let cases = [
        (DMatrix::identity(2, 2), 0.1, 0.01),
        (DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])), 0.2, 0.01),
        (DMatrix::identity(3, 3) * 0.5, 0.1, 0.004),
    ];
    for (i, (delta, theta, mu)) in cases.iter().enumerate() {
        let m = delta.nrows();
        let bound = type1_bound(*theta, delta, *mu, m).unwrap();
        let x = draws(&vec![0.0; m], delta, *mu, 100 + i as u64);
        let p = x.iter().filter(|&&v| v > *theta).count() as f64 / DRAWS as f64;
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!(p <= bound + 3.0 * se, "case {i}: rate {p} above bound {bound}");
    }
}

#[test]
fn type2_bound_dominates_monte_carlo() {
    let cases = [
        (vec![1.0, 0.0], DMatrix::identity(2, 2), 0.5, 0.01),
        (vec![1.0, 0.0], DMatrix::identity(2, 2), 0.5, 0.05),
        (vec![0.6, 0.8], DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8]), 0.6, 0.03),
    ];
    let b0 = type2_bound(0.5, &cases[0].0, &cases[0].1, 0.01).unwrap();
    assert!((b0 - 0.5 * (-3.125f64).exp()).abs() < 1e-12);
    for (i, (d, delta, theta, mu)) in cases.iter().enumerate() {
        let bound = type2_bound(*theta, d, delta, *mu).unwrap();
        let x = draws(d, delta, *mu, 200 + i as u64);
        let p = x.iter().filter(|&&v| v < *theta).count() as f64 / DRAWS as f64;
        assert!(p <= bound * 1.05, "case {i}: rate {p} above bound {bound}");
    }
}
