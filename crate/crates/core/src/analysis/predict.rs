//! Assembles every closed-form prediction for one configuration.

use nalgebra::DMatrix;
use serde::Serialize;

use super::covariance::{build_pi, delta_between_groups, normalized_msd, LowDimModel};
use super::errprob::{delta_stat_moments, type1_bound, type2_bound};
use super::lyapunov::{solve_continuous_lyapunov, solve_discrete_lyapunov, DISCRETE_TOL};
use crate::combination::{static_group_weights, CombinationMatrix};
use crate::models::{build_group_model, AgentCostModel};
use crate::network::{dist_sq, NetworkModel};
use crate::{Error, Result};

/// Row-major matrix with its shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(a: &DMatrix<f64>) -> Self {
        MatrixJson {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.transpose().iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaEntry {
    pub m: usize,
    pub n: usize,
    pub matrix: MatrixJson,
}

/// Moments and bounds of the test statistic for one group pair, threshold
/// and step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundRow {
    pub m: usize,
    pub n: usize,
    pub same_cluster: bool,
    /// Whether some agent of `m` is adjacent to some agent of `n`.
    pub adjacent: bool,
    pub d_star_norm_sq: f64,
    pub theta: f64,
    pub mu: f64,
    pub mean: f64,
    pub variance: f64,
    /// Bound on `P[δ² > θ]`, same-cluster pairs only.
    pub type1_bound: Option<f64>,
    /// Bound on `P[δ² < θ]`, different-cluster pairs only.
    pub type2_bound: Option<f64>,
    /// Why a bound is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondRecursionPrediction {
    /// Normalized MSD per cluster with each cluster acting as one group.
    pub normalized_msd_per_cluster: Vec<f64>,
    pub normalized_msd_total: f64,
    pub predicted_msd: f64,
    pub predicted_msd_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub n_agents: usize,
    pub n_groups: usize,
    pub n_clusters: usize,
    pub dim: usize,
    pub mu_max: f64,
    pub group_sizes: Vec<usize>,
    /// Discrete Lyapunov solution (centroid error covariance).
    pub theta: MatrixJson,
    /// Continuous Lyapunov solution (normalized centroid covariance).
    pub phi: MatrixJson,
    /// Normalized network error covariance; omitted when not requested.
    pub pi: Option<MatrixJson>,
    pub delta: Vec<DeltaEntry>,
    pub normalized_msd_per_group: Vec<f64>,
    pub normalized_msd_total: f64,
    /// `Tr(Π)`, the same quantity computed from `Φ`.
    pub normalized_msd_from_phi: f64,
    /// `Σ_m N_m Tr(Θ_mm) / μ_max`, which approaches the normalized MSD as
    /// `μ_max → 0`.
    pub normalized_msd_from_theta: f64,
    pub theta_phi_rel_gap: f64,
    /// `μ_max` times the normalized MSD.
    pub predicted_msd: f64,
    pub predicted_msd_db: f64,
    pub predicted_msd_per_agent: f64,
    pub second_recursion: Option<SecondRecursionPrediction>,
    pub error_bounds: Vec<ErrorBoundRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictOptions {
    /// Thresholds for the error-bound table.
    pub thetas: Vec<f64>,
    /// Step sizes `μ_max` for the error-bound table (step-size ratios are
    /// held fixed, so `Δ` is unchanged). Empty means the configured `μ_max`.
    pub mu_grid: Vec<f64>,
    pub include_pi: bool,
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn predict<C: AgentCostModel>(
    model: &NetworkModel,
    costs: &[C],
    a: &CombinationMatrix,
    mu: &[f64],
    opts: &PredictOptions,
) -> Result<TheoryReport> {
    let groups = build_group_model(model, costs, a, mu)?;
    let low = LowDimModel::build(&groups, costs)?;
    let dim = low.dim;
    let theta = solve_discrete_lyapunov(&low.d, &low.q_dt, DISCRETE_TOL)?;
    let phi = solve_continuous_lyapunov(&low.h_bar, &low.r_bar)?;
    let msd = normalized_msd(&groups, costs)?;

    let n_groups = low.n_groups();
    let block_trace = |x: &DMatrix<f64>, m: usize| x.view((m * dim, m * dim), (dim, dim)).trace();
    let from_phi: f64 = (0..n_groups)
        .map(|m| low.group_sizes[m] as f64 * block_trace(&phi, m))
        .sum();
    let from_theta: f64 = (0..n_groups)
        .map(|m| low.group_sizes[m] as f64 * block_trace(&theta, m))
        .sum::<f64>()
        / low.mu_max;
    let gap = if from_phi > 0.0 {
        (from_theta - from_phi).abs() / from_phi
    } else {
        0.0
    };

    let mut delta = Vec::new();
    let mut deltas = vec![vec![DMatrix::zeros(dim, dim); n_groups]; n_groups];
    for m in 0..n_groups {
        for n in (m + 1)..n_groups {
            let dmn = delta_between_groups(&phi, m, n, dim);
            delta.push(DeltaEntry { m, n, matrix: (&dmn).into() });
            deltas[m][n] = dmn.clone();
            deltas[n][m] = dmn;
        }
    }

    let mut adjacent = vec![vec![false; n_groups]; n_groups];
    for (k, l) in model.edges() {
        let (m, n) = (model.group_of(k), model.group_of(l));
        adjacent[m][n] = true;
        adjacent[n][m] = true;
    }
    let mu_grid = if opts.mu_grid.is_empty() { vec![low.mu_max] } else { opts.mu_grid.clone() };
    let mut error_bounds = Vec::new();
    for m in 0..n_groups {
        for n in (m + 1)..n_groups {
            let (qm, qn) = (model.cluster_of_group(m), model.cluster_of_group(n));
            let d_star: Vec<f64> = model
                .cluster_minimizer(qm)
                .iter()
                .zip(model.cluster_minimizer(qn))
                .map(|(a, b)| a - b)
                .collect();
            let d_sq = dist_sq(model.cluster_minimizer(qm), model.cluster_minimizer(qn));
            for &th in &opts.thetas {
                for &mu_b in &mu_grid {
                    let (mean, variance) = delta_stat_moments(&d_star, &deltas[m][n], mu_b)?;
                    let mut row = ErrorBoundRow {
                        m,
                        n,
                        same_cluster: qm == qn,
                        adjacent: adjacent[m][n],
                        d_star_norm_sq: d_sq,
                        theta: th,
                        mu: mu_b,
                        mean,
                        variance,
                        type1_bound: None,
                        type2_bound: None,
                        note: None,
                    };
                    let bound = if qm == qn {
                        type1_bound(th, &deltas[m][n], mu_b, dim).map(|b| row.type1_bound = Some(b))
                    } else if th >= d_sq {
                        // The table only reports the bound on its open domain.
                        Err(Error::ThresholdOutOfRange { theta: th, upper: d_sq })
                    } else {
                        type2_bound(th, &d_star, &deltas[m][n], mu_b)
                            .map(|b| row.type2_bound = Some(b))
                    };
                    match bound {
                        Ok(()) => {}
                        Err(
                            e @ (Error::StepSizeTooLarge { .. }
                            | Error::ThresholdOutOfRange { .. }
                            | Error::DegenerateDelta
                            | Error::DomainError(_)),
                        ) => row.note = Some(e.to_string()),
                        Err(e) => return Err(e),
                    }
                    error_bounds.push(row);
                }
            }
        }
    }

    let second_recursion = if model.n_groups() != model.n_clusters() {
        let merged = model.with_groups_as_clusters();
        let a2 = static_group_weights(&merged);
        let groups2 = build_group_model(&merged, costs, &a2, mu)?;
        let msd2 = normalized_msd(&groups2, costs)?;
        Some(SecondRecursionPrediction {
            predicted_msd: low.mu_max * msd2.total,
            predicted_msd_db: to_db(low.mu_max * msd2.total),
            normalized_msd_per_cluster: msd2.per_group,
            normalized_msd_total: msd2.total,
        })
    } else {
        None
    };

    let predicted = low.mu_max * msd.total;
    Ok(TheoryReport {
        n_agents: model.n_agents(),
        n_groups,
        n_clusters: model.n_clusters(),
        dim,
        mu_max: low.mu_max,
        group_sizes: low.group_sizes.clone(),
        theta: (&theta).into(),
        pi: opts
            .include_pi
            .then(|| (&build_pi(&phi, &low.group_sizes, dim)).into()),
        phi: (&phi).into(),
        delta,
        normalized_msd_per_group: msd.per_group,
        normalized_msd_total: msd.total,
        normalized_msd_from_phi: from_phi,
        normalized_msd_from_theta: from_theta,
        theta_phi_rel_gap: gap,
        predicted_msd: predicted,
        predicted_msd_db: to_db(predicted),
        predicted_msd_per_agent: predicted / model.n_agents() as f64,
        second_recursion,
        error_bounds,
    })
}
