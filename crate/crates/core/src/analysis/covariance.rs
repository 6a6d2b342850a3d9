//! Centroid error model: stacked `D`, `H̄`, driving noise, the block
//! covariance `Π`, pairwise `Δ_{m,n}` and the normalized MSD.

use nalgebra::DMatrix;

use crate::models::{AgentCostModel, GroupModel};
use crate::{Error, Result};

/// Stacked centroid quantities over `G` groups of dimension `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowDimModel {
    pub dim: usize,
    pub group_sizes: Vec<usize>,
    pub mu_max: f64,
    /// `diag{D_m}`, `GM x GM`.
    pub d: DMatrix<f64>,
    /// `diag{H̄_m}`, `GM x GM`.
    pub h_bar: DMatrix<f64>,
    /// `Pᵀ M R_s M P`.
    pub q_dt: DMatrix<f64>,
    /// `μ_max^{-2} Q_dt`.
    pub r_bar: DMatrix<f64>,
}

impl LowDimModel {
    /// `R_s` is block diagonal with the agents' `R_k`, so the driving term
    /// of group `m` is `Σ_{k ∈ G_m} p_k² μ_k² R_k`.
    pub fn build<C: AgentCostModel>(groups: &[GroupModel], costs: &[C]) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidSizes("no groups".into()))?;
        let dim = first.h_bar.nrows();
        let g = groups.len();
        let mu_max = first.mu_max;
        let mut d = DMatrix::zeros(g * dim, g * dim);
        let mut h_bar = DMatrix::zeros(g * dim, g * dim);
        let mut q_dt = DMatrix::zeros(g * dim, g * dim);
        for (m, group) in groups.iter().enumerate() {
            let at = m * dim;
            d.view_mut((at, at), (dim, dim)).copy_from(&group.d_matrix);
            h_bar.view_mut((at, at), (dim, dim)).copy_from(&group.h_bar);
            let mut block = DMatrix::zeros(dim, dim);
            for (i, k) in group.members.clone().enumerate() {
                let w = group.perron[i] * group.mu[i];
                block += costs[k].noise_cov_at_min() * (w * w);
            }
            q_dt.view_mut((at, at), (dim, dim)).copy_from(&block);
        }
        let r_bar = &q_dt / (mu_max * mu_max);
        Ok(LowDimModel {
            dim,
            group_sizes: groups.iter().map(|g| g.members.len()).collect(),
            mu_max,
            d,
            h_bar,
            q_dt,
            r_bar,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }
}

/// Normalized MSD per group and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct MsdPrediction {
    pub per_group: Vec<f64>,
    pub total: f64,
}

/// `Σ_m N_m / (2 μ_max) Tr[(Σ p_k μ_k H_k)^{-1} (Σ p_k² μ_k² R_k)]`.
/// Multiply by `μ_max` for the predicted steady-state network MSD.
pub fn normalized_msd<C: AgentCostModel>(groups: &[GroupModel], costs: &[C]) -> Result<MsdPrediction> {
    let mut per_group = Vec::with_capacity(groups.len());
    for (m, group) in groups.iter().enumerate() {
        let dim = group.h_bar.nrows();
        let mut h = DMatrix::zeros(dim, dim);
        let mut r = DMatrix::zeros(dim, dim);
        for (i, k) in group.members.clone().enumerate() {
            let pm = group.perron[i] * group.mu[i];
            h += costs[k].hessian_at_min() * pm;
            r += costs[k].noise_cov_at_min() * (pm * pm);
        }
        let x = h.lu().solve(&r).ok_or(Error::SingularAggregateHessian(m))?;
        per_group.push(group.members.len() as f64 / (2.0 * group.mu_max) * x.trace());
    }
    let total = per_group.iter().sum();
    Ok(MsdPrediction { per_group, total })
}

/// `NM x NM` matrix whose `(k, l)` block is `Φ_{m,n}` for `k ∈ G_m`,
/// `l ∈ G_n`.
pub fn build_pi(phi: &DMatrix<f64>, group_sizes: &[usize], dim: usize) -> DMatrix<f64> {
    let n: usize = group_sizes.iter().sum();
    let mut group_of = Vec::with_capacity(n);
    for (m, &s) in group_sizes.iter().enumerate() {
        group_of.extend(std::iter::repeat_n(m, s));
    }
    let mut pi = DMatrix::zeros(n * dim, n * dim);
    for k in 0..n {
        for l in 0..n {
            let block = phi.view((group_of[k] * dim, group_of[l] * dim), (dim, dim));
            pi.view_mut((k * dim, l * dim), (dim, dim)).copy_from(&block);
        }
    }
    pi
}

/// `Φ_{m,m} + Φ_{n,n} - Φ_{m,n} - Φ_{n,m}`.
pub fn delta_between_groups(phi: &DMatrix<f64>, m: usize, n: usize, dim: usize) -> DMatrix<f64> {
    if m == n {
        return DMatrix::zeros(dim, dim);
    }
    let b = |i: usize, j: usize| phi.view((i * dim, j * dim), (dim, dim)).into_owned();
    b(m, m) + b(n, n) - b(m, n) - b(n, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combination::metropolis_weights;
    use crate::models::{build_group_model, LmsAgent};
    use crate::network::NetworkModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chain(n: usize) -> NetworkModel {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        NetworkModel::new(n, &edges, vec![0; n], vec![0; n], vec![vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn single_agent_msd() {
        let model = chain(1);
        let costs = vec![LmsAgent::new_unchecked(1.0, 0.1, vec![0.0, 0.0])];
        let a = metropolis_weights(&[vec![0]]).unwrap();
        for mu in [0.001, 0.01, 0.1] {
            let groups = build_group_model(&model, &costs, &a, &[mu]).unwrap();
            let msd = normalized_msd(&groups, &costs).unwrap();
            assert_abs_diff_eq!(msd.total, 0.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn noise_free_msd_is_zero() {
        let model = chain(3);
        let costs = vec![LmsAgent::new_unchecked(1.0, 0.0, vec![0.0, 0.0]); 3];
        let sets: Vec<_> = (0..3).map(|k| model.neighbors(k).to_vec()).collect();
        let a = metropolis_weights(&sets).unwrap();
        let groups = build_group_model(&model, &costs, &a, &[0.01; 3]).unwrap();
        assert_eq!(normalized_msd(&groups, &costs).unwrap().total, 0.0);
    }

    #[test]
    fn identical_agents_share_the_single_agent_msd() {
        let n = 5;
        let model = chain(n);
        let costs = vec![LmsAgent::new_unchecked(1.0, 0.1, vec![0.0, 0.0]); n];
        let sets: Vec<_> = (0..n).map(|k| model.neighbors(k).to_vec()).collect();
        let a = metropolis_weights(&sets).unwrap();
        let groups = build_group_model(&model, &costs, &a, &[0.01; 5]).unwrap();
        let msd = normalized_msd(&groups, &costs).unwrap();
        // total over n agents equals one agent alone; per agent it is 1/n of that
        assert_abs_diff_eq!(msd.total, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(msd.total / n as f64, 0.2 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn pi_replication_patterns() {
        let phi = DMatrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64 + 1.0);
        assert_eq!(build_pi(&phi, &[1], 2), phi);
        let pi = build_pi(&phi, &[2], 2);
        for (bi, bj) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(pi.view((bi, bj), (2, 2)), phi.view((0, 0), (2, 2)));
        }
        // G = 2, sizes (2, 1), scalar blocks
        let phi = DMatrix::from_row_slice(2, 2, &[11.0, 12.0, 21.0, 22.0]);
        let pi = build_pi(&phi, &[2, 1], 1);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[11.0, 11.0, 12.0, 11.0, 11.0, 12.0, 21.0, 21.0, 22.0],
        );
        assert_eq!(pi, expected);
    }

    #[test]
    fn delta_examples() {
        let phi = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 });
        assert_eq!(delta_between_groups(&phi, 1, 1, 2), DMatrix::zeros(2, 2));
        let delta = delta_between_groups(&phi, 0, 1, 2);
        assert_eq!(delta, DMatrix::from_diagonal(&nalgebra::dvector![4.0, 6.0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn delta_is_psd(entries in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let b = DMatrix::from_vec(6, 6, entries);
            let phi = &b * b.transpose();
            for (m, n) in [(0, 1), (0, 2), (1, 2)] {
                let delta = delta_between_groups(&phi, m, n, 2);
                prop_assert!(delta.symmetric_eigenvalues().min() >= -1e-12);
            }
        }
    }
}
