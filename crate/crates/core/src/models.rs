//! Agent cost functions and their stochastic-gradient oracles.
//!
//! Gradients keep the factor 2 of the squared-error cost `E(d - u w)^2`, so
//! the LMS Hessian is `2 σ_u² I` and the gradient-noise covariance at the
//! minimizer is `4 σ_u² σ_v² I`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::combination::{group_perron_vectors, CombinationMatrix};
use crate::network::NetworkModel;
use crate::rng::StreamRng;
use crate::{Error, Result};

/// A strongly-convex-in-aggregate agent cost with an unbiased gradient
/// sampler.
pub trait AgentCostModel {
    fn dim(&self) -> usize;
    fn minimizer(&self) -> &[f64];
    fn hessian_at_min(&self) -> DMatrix<f64>;
    fn noise_cov_at_min(&self) -> DMatrix<f64>;
    /// Exact gradient `∇J(w)`.
    fn gradient(&self, w: &[f64], out: &mut [f64]);
    /// One stochastic gradient sample at `w`.
    fn sample_gradient(&self, w: &[f64], rng: &mut StreamRng, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmsAgentSpec {
    pub sigma_u_sq: f64,
    pub sigma_v_sq: f64,
    pub minimizer: Vec<f64>,
}

/// Linear-regression agent: `d = u w° + v` with `u ~ N(0, σ_u² I)` and
/// `v ~ N(0, σ_v²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmsAgent {
    sigma_u: f64,
    sigma_v: f64,
    sigma_u_sq: f64,
    sigma_v_sq: f64,
    minimizer: Vec<f64>,
}

impl LmsAgent {
    pub fn sigma_u_sq(&self) -> f64 {
        self.sigma_u_sq
    }

    pub fn sigma_v_sq(&self) -> f64 {
        self.sigma_v_sq
    }
}

pub fn lms_cost_model(spec: &LmsAgentSpec) -> Result<LmsAgent> {
    let ok = |x: f64| x.is_finite() && x > 0.0;
    if !ok(spec.sigma_u_sq) || !ok(spec.sigma_v_sq) {
        return Err(Error::NonPositiveVariance {
            sigma_u_sq: spec.sigma_u_sq,
            sigma_v_sq: spec.sigma_v_sq,
        });
    }
    Ok(LmsAgent::new_unchecked(spec.sigma_u_sq, spec.sigma_v_sq, spec.minimizer.clone()))
}

impl LmsAgent {
    /// Skips the positivity check, so `σ_v² = 0` (noise-free data) is allowed.
    pub fn new_unchecked(sigma_u_sq: f64, sigma_v_sq: f64, minimizer: Vec<f64>) -> Self {
        LmsAgent {
            sigma_u: sigma_u_sq.sqrt(),
            sigma_v: sigma_v_sq.sqrt(),
            sigma_u_sq,
            sigma_v_sq,
            minimizer,
        }
    }
}

impl AgentCostModel for LmsAgent {
    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    fn hessian_at_min(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) * (2.0 * self.sigma_u_sq)
    }

    fn noise_cov_at_min(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) * (4.0 * self.sigma_u_sq * self.sigma_v_sq)
    }

    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        for ((o, x), x0) in out.iter_mut().zip(w).zip(&self.minimizer) {
            *o = 2.0 * self.sigma_u_sq * (x - x0);
        }
    }

    fn sample_gradient(&self, w: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        // u w - d = u (w - w°) - v
        let mut e = 0.0;
        for ((o, x), x0) in out.iter_mut().zip(w).zip(&self.minimizer) {
            let z: f64 = rng.sample(StandardNormal);
            *o = self.sigma_u * z;
            e += *o * (x - x0);
        }
        let z: f64 = rng.sample(StandardNormal);
        e -= self.sigma_v * z;
        for o in out.iter_mut() {
            *o *= 2.0 * e;
        }
    }
}

/// Centroid-level quantities of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    pub members: std::ops::Range<usize>,
    pub perron: Vec<f64>,
    pub mu: Vec<f64>,
    /// Largest step size over the whole network.
    pub mu_max: f64,
    /// `Σ_k p_k μ_k / μ_max H_k`.
    pub h_bar: DMatrix<f64>,
    /// `I - μ_max H̄`.
    pub d_matrix: DMatrix<f64>,
}

pub fn build_group_model<C: AgentCostModel>(
    model: &NetworkModel,
    costs: &[C],
    a: &CombinationMatrix,
    mu: &[f64],
) -> Result<Vec<GroupModel>> {
    let n = model.n_agents();
    if costs.len() != n || mu.len() != n || a.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} costs, step sizes and matrix columns"
        )));
    }
    if let Some(&bad) = mu.iter().find(|&&m| !(m.is_finite() && m > 0.0)) {
        return Err(Error::DomainError(format!("step size {bad} must be positive")));
    }
    for k in 0..n {
        for &(l, v) in a.column(k) {
            if v != 0.0 && model.group_of(l) != model.group_of(k) {
                return Err(Error::InvalidTopology(format!(
                    "combination weight a[{l},{k}] crosses groups"
                )));
            }
        }
    }
    let mu_max = mu.iter().copied().fold(0.0, f64::max);
    let perron = group_perron_vectors(a, model)?;
    let dim = model.dim();
    let mut out = Vec::with_capacity(model.n_groups());
    for m in 0..model.n_groups() {
        let members = model.group_members(m);
        let p = &perron.per_group[m];
        let mut h_bar = DMatrix::zeros(dim, dim);
        for (i, k) in members.clone().enumerate() {
            h_bar += costs[k].hessian_at_min() * (p[i] * mu[k] / mu_max);
        }
        h_bar = (&h_bar + h_bar.transpose()) * 0.5;
        if h_bar.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(format!("aggregate Hessian of group {m}")));
        }
        let d_matrix = DMatrix::identity(dim, dim) - &h_bar * mu_max;
        out.push(GroupModel {
            perron: p.iter().copied().collect(),
            mu: mu[members.clone()].to_vec(),
            members,
            mu_max,
            h_bar,
            d_matrix,
        });
    }
    Ok(out)
}
