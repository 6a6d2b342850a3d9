//! The clustering-and-learning algorithm: a static-group ATC recursion, an
//! ATC recursion over adaptively learned neighborhoods, and the pairwise
//! hypothesis test that learns those neighborhoods.

use serde::Serialize;

use crate::combination::{metropolis_column, CombinationMatrix};
use crate::models::AgentCostModel;
use crate::network::NetworkModel;
use crate::rng::{self, StreamKind, StreamRng};
use crate::{Error, Result};

/// Symmetric, strictly positive thresholds `θ_{k,l}`.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMatrix {
    Uniform(f64),
    /// Row-major `N x N`.
    Dense { n: usize, values: Vec<f64> },
}

impl ThresholdMatrix {
    pub fn uniform(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::DomainError(format!("threshold {theta} must be positive")));
        }
        Ok(ThresholdMatrix::Uniform(theta))
    }

    pub fn dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch(format!("expected {} thresholds", n * n)));
        }
        for k in 0..n {
            for l in 0..n {
                let t = values[k * n + l];
                if k != l && !(t.is_finite() && t > 0.0) {
                    return Err(Error::DomainError(format!("threshold θ[{k},{l}] = {t}")));
                }
                if t != values[l * n + k] {
                    return Err(Error::DomainError(format!("threshold θ[{k},{l}] not symmetric")));
                }
            }
        }
        Ok(ThresholdMatrix::Dense { n, values })
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        match self {
            ThresholdMatrix::Uniform(t) => *t,
            ThresholdMatrix::Dense { n, values } => values[k * n + l],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    /// Same cluster: neighbor accepted.
    H0,
    /// Different clusters: neighbor rejected.
    H1,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub iteration: usize,
    pub k: usize,
    pub l: usize,
    pub delta_sq: f64,
    pub theta: f64,
    pub decision: Hypothesis,
    pub same_cluster: bool,
}

/// Iterates, learned neighborhoods and per-agent random streams of one
/// trial.
#[derive(Debug, Clone)]
pub struct SimulationState {
    dim: usize,
    /// Row-major `N x M` iterates of the first recursion.
    pub w: Vec<f64>,
    /// Row-major `N x M` iterates of the second recursion.
    pub w_prime: Vec<f64>,
    /// `N_{k,i}^+`, sorted.
    pub dyn_neighbors: Vec<Vec<usize>>,
    /// Index of the last completed iteration, `-1` right after
    /// initialization.
    pub iteration: i64,
    rng1: Vec<StreamRng>,
    rng2: Vec<StreamRng>,
    psi: Vec<f64>,
    column: Vec<(usize, f64)>,
}

impl SimulationState {
    /// Zero iterates and `N_{k,-1}^+ = N_k ∩ G_m`.
    pub fn new(model: &NetworkModel, seed: u64, trial: u64) -> Self {
        let n = model.n_agents();
        let dim = model.dim();
        SimulationState {
            dim,
            w: vec![0.0; n * dim],
            w_prime: vec![0.0; n * dim],
            dyn_neighbors: (0..n).map(|k| model.group_neighbors(k)).collect(),
            iteration: -1,
            rng1: (0..n)
                .map(|k| rng::stream(seed, StreamKind::FirstRecursion, trial, k as u64))
                .collect(),
            rng2: (0..n)
                .map(|k| rng::stream(seed, StreamKind::SecondRecursion, trial, k as u64))
                .collect(),
            psi: vec![0.0; n * dim],
            column: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_agents(&self) -> usize {
        self.dyn_neighbors.len()
    }

    pub fn w_of(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    pub fn w_prime_of(&self, k: usize) -> &[f64] {
        &self.w_prime[k * self.dim..(k + 1) * self.dim]
    }

    /// Undirected edges `(k, l)`, `k < l`, currently in the learned
    /// neighborhoods.
    pub fn active_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, set) in self.dyn_neighbors.iter().enumerate() {
            out.extend(set.iter().filter(|&&l| l > k).map(|&l| (k, l)));
        }
        out
    }
}

fn adapt<C: AgentCostModel>(
    w: &[f64],
    psi: &mut [f64],
    costs: &[C],
    mu: &[f64],
    rngs: &mut [StreamRng],
    dim: usize,
) {
    for (k, cost) in costs.iter().enumerate() {
        let r = k * dim..(k + 1) * dim;
        let out = &mut psi[r.clone()];
        cost.sample_gradient(&w[r.clone()], &mut rngs[k], out);
        for (o, x) in out.iter_mut().zip(&w[r]) {
            *o = x - mu[k] * *o;
        }
    }
}

fn check_finite(w: &[f64], dim: usize, iteration: i64, recursion: u8) -> Result<()> {
    match w.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::DivergenceDetected { iteration, agent: i / dim, recursion }),
    }
}

/// Step (1): `ψ_k = w_k - μ_k ĝ_k(w_k)`, then `w_k = Σ_{l ∈ N_k ∩ G_m} a_lk ψ_l`.
pub fn atc_group_step<C: AgentCostModel>(
    state: &mut SimulationState,
    costs: &[C],
    a_static: &CombinationMatrix,
    mu: &[f64],
) -> Result<()> {
    let dim = state.dim;
    adapt(&state.w, &mut state.psi, costs, mu, &mut state.rng1, dim);
    for k in 0..costs.len() {
        let wk = &mut state.w[k * dim..(k + 1) * dim];
        wk.fill(0.0);
        for &(l, a) in a_static.column(k) {
            for (x, p) in wk.iter_mut().zip(&state.psi[l * dim..(l + 1) * dim]) {
                *x += a * p;
            }
        }
    }
    check_finite(&state.w, dim, state.iteration + 1, 1)
}

/// Step (2): same update on `w'` with a fresh gradient sample, combining over
/// the learned sets `N_{k,i-1}^+` with Metropolis weights built from them.
pub fn atc_dynamic_step<C: AgentCostModel>(
    state: &mut SimulationState,
    costs: &[C],
    mu: &[f64],
) -> Result<()> {
    let dim = state.dim;
    adapt(&state.w_prime, &mut state.psi, costs, mu, &mut state.rng2, dim);
    for k in 0..costs.len() {
        metropolis_column(k, &state.dyn_neighbors, &mut state.column);
        let wk = &mut state.w_prime[k * dim..(k + 1) * dim];
        wk.fill(0.0);
        for &(l, a) in &state.column {
            for (x, p) in wk.iter_mut().zip(&state.psi[l * dim..(l + 1) * dim]) {
                *x += a * p;
            }
        }
    }
    check_finite(&state.w_prime, dim, state.iteration + 1, 2)
}

/// Per-iteration error counts of the hypothesis test over adjacent
/// cross-group pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TestCounts {
    /// Same-cluster pairs rejected (Type-I errors).
    pub false_alarms: u32,
    /// Different-cluster pairs accepted (Type-II errors).
    pub misses: u32,
}

/// Step (3) on the first-recursion iterates `w` (row-major `N x M`):
/// `N_{k,i}^+ = {l ∈ N_k : ||w_l - w_k||² < θ_kl} ∪ (N_k ∩ G_m)`.
///
/// Only neighbors outside the agent's group are tested; each unordered pair
/// is evaluated once and applied to both endpoints. When `records` is given,
/// one record per tested pair (with `k < l`) is appended.
pub fn clustering_test(
    w: &[f64],
    model: &NetworkModel,
    theta: &ThresholdMatrix,
    iteration: usize,
    sets: &mut [Vec<usize>],
    mut records: Option<&mut Vec<DecisionRecord>>,
) -> TestCounts {
    let dim = model.dim();
    let mut counts = TestCounts::default();
    for set in sets.iter_mut() {
        set.clear();
    }
    for k in 0..model.n_agents() {
        let wk = &w[k * dim..(k + 1) * dim];
        let gk = model.group_of(k);
        for &l in model.neighbors(k) {
            if model.group_of(l) == gk {
                sets[k].push(l);
                continue;
            }
            if l < k {
                // decided while visiting l; copy the outcome
                if sets[l].contains(&k) {
                    sets[k].push(l);
                }
                continue;
            }
            let wl = &w[l * dim..(l + 1) * dim];
            let delta_sq: f64 = wk.iter().zip(wl).map(|(a, b)| (a - b) * (a - b)).sum();
            let t = theta.get(k, l);
            let accept = delta_sq < t;
            let same_cluster = model.cluster_of(k) == model.cluster_of(l);
            if accept {
                sets[k].push(l);
                counts.misses += u32::from(!same_cluster);
            } else {
                counts.false_alarms += u32::from(same_cluster);
            }
            if let Some(rec) = records.as_deref_mut() {
                rec.push(DecisionRecord {
                    iteration,
                    k,
                    l,
                    delta_sq,
                    theta: t,
                    decision: if accept { Hypothesis::H0 } else { Hypothesis::H1 },
                    same_cluster,
                });
            }
        }
    }
    debug_assert!(sets.iter().enumerate().all(|(k, s)| {
        s.windows(2).all(|p| p[0] < p[1])
            && s.iter().all(|&l| sets[l].binary_search(&k).is_ok())
            && model.group_neighbors(k).iter().all(|l| s.contains(l))
    }));
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Per-agent step sizes.
    pub mu: Vec<f64>,
    pub theta: ThresholdMatrix,
    pub n_iters: usize,
    pub seed: u64,
    pub trial: u64,
    pub record_decisions: bool,
}

/// Learning curves and test outcomes of one trial. Curves have `n_iters + 1`
/// entries: index 0 is the initial state (iteration -1) and index `i + 1`
/// the state after iteration `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `Σ_k ||w_k° - w_{k,i}||²`.
    pub msd_rec1: Vec<f64>,
    pub msd_rec2: Vec<f64>,
    /// Per-cluster sums, indexed `[q][i]`.
    pub msd_rec1_cluster: Vec<Vec<f64>>,
    pub msd_rec2_cluster: Vec<Vec<f64>>,
    /// Per-iteration test errors, `n_iters` entries.
    pub counts: Vec<TestCounts>,
    /// Adjacent cross-group pairs in the same cluster (tested under H0).
    pub n_same_cluster_pairs: usize,
    /// Adjacent pairs in different clusters (tested under H1).
    pub n_cross_cluster_pairs: usize,
    pub decisions: Vec<DecisionRecord>,
    pub final_active_edges: Vec<(usize, usize)>,
}

fn record_msd(
    model: &NetworkModel,
    w: &[f64],
    total: &mut Vec<f64>,
    per_cluster: &mut [Vec<f64>],
) {
    let dim = model.dim();
    let mut sum = 0.0;
    for (q, curve) in per_cluster.iter_mut().enumerate() {
        let wq = model.cluster_minimizer(q);
        let mut s = 0.0;
        for k in model.cluster_members(q) {
            for (x, x0) in w[k * dim..(k + 1) * dim].iter().zip(wq) {
                s += (x0 - x) * (x0 - x);
            }
        }
        curve.push(s);
        sum += s;
    }
    total.push(sum);
}

pub fn run_algorithm<C: AgentCostModel>(
    model: &NetworkModel,
    costs: &[C],
    a_static: &CombinationMatrix,
    config: &RunConfig,
) -> Result<Trajectory> {
    run_algorithm_observed(model, costs, a_static, config, |_| {})
}

/// Like [`run_algorithm`], calling `observer` after every iteration.
pub fn run_algorithm_observed<C: AgentCostModel>(
    model: &NetworkModel,
    costs: &[C],
    a_static: &CombinationMatrix,
    config: &RunConfig,
    mut observer: impl FnMut(&SimulationState),
) -> Result<Trajectory> {
    let n = model.n_agents();
    if costs.len() != n || config.mu.len() != n || a_static.size() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected {n} costs, step sizes and matrix columns"
        )));
    }
    if costs.iter().any(|c| c.dim() != model.dim()) {
        return Err(Error::DimensionMismatch("cost dimension differs from model".into()));
    }
    let q = model.n_clusters();
    let mut traj = Trajectory {
        msd_rec1: Vec::with_capacity(config.n_iters + 1),
        msd_rec2: Vec::with_capacity(config.n_iters + 1),
        msd_rec1_cluster: vec![Vec::with_capacity(config.n_iters + 1); q],
        msd_rec2_cluster: vec![Vec::with_capacity(config.n_iters + 1); q],
        counts: Vec::with_capacity(config.n_iters),
        n_same_cluster_pairs: 0,
        n_cross_cluster_pairs: 0,
        decisions: Vec::new(),
        final_active_edges: Vec::new(),
    };
    for (k, l) in model.edges() {
        if model.group_of(k) != model.group_of(l) {
            if model.cluster_of(k) == model.cluster_of(l) {
                traj.n_same_cluster_pairs += 1;
            } else {
                traj.n_cross_cluster_pairs += 1;
            }
        }
    }

    let mut state = SimulationState::new(model, config.seed, config.trial);
    record_msd(model, &state.w, &mut traj.msd_rec1, &mut traj.msd_rec1_cluster);
    record_msd(model, &state.w_prime, &mut traj.msd_rec2, &mut traj.msd_rec2_cluster);
    let mut next_sets = state.dyn_neighbors.clone();
    for i in 0..config.n_iters {
        atc_group_step(&mut state, costs, a_static, &config.mu)?;
        atc_dynamic_step(&mut state, costs, &config.mu)?;
        let records = config.record_decisions.then_some(&mut traj.decisions);
        let counts = clustering_test(&state.w, model, &config.theta, i, &mut next_sets, records);
        std::mem::swap(&mut state.dyn_neighbors, &mut next_sets);
        state.iteration = i as i64;
        traj.counts.push(counts);
        record_msd(model, &state.w, &mut traj.msd_rec1, &mut traj.msd_rec1_cluster);
        record_msd(model, &state.w_prime, &mut traj.msd_rec2, &mut traj.msd_rec2_cluster);
        observer(&state);
    }
    traj.final_active_edges = state.active_edges();
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combination::static_group_weights;
    use crate::models::LmsAgent;
    use crate::network::{generate_topology, TopologySpec};

    fn two_cluster_model() -> NetworkModel {
        let mut spec = TopologySpec::one_group_per_cluster(vec![4, 4], 0.7, 0.3, 9);
        spec.group_sizes = vec![vec![2, 2], vec![3, 1]];
        spec.minimizers = Some(vec![vec![0.5, 0.5], vec![-0.5, 0.5]]);
        generate_topology(&spec).unwrap()
    }

    fn lms_costs(model: &NetworkModel, sigma_v_sq: f64) -> Vec<LmsAgent> {
        (0..model.n_agents())
            .map(|k| LmsAgent::new_unchecked(1.0, sigma_v_sq, model.agent_minimizer(k).to_vec()))
            .collect()
    }

    fn config(model: &NetworkModel, n_iters: usize) -> RunConfig {
        RunConfig {
            mu: vec![0.01; model.n_agents()],
            theta: ThresholdMatrix::uniform(0.5).unwrap(),
            n_iters,
            seed: 3,
            trial: 0,
            record_decisions: true,
        }
    }

    #[test]
    fn threshold_validation() {
        assert!(ThresholdMatrix::uniform(0.0).is_err());
        assert!(ThresholdMatrix::dense(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(ThresholdMatrix::dense(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn zero_iterations_report_initial_msd() {
        let model = two_cluster_model();
        let costs = lms_costs(&model, 0.1);
        let a = static_group_weights(&model);
        let traj = run_algorithm(&model, &costs, &a, &config(&model, 0)).unwrap();
        let expected: f64 = (0..model.n_agents())
            .map(|k| model.agent_minimizer(k).iter().map(|x| x * x).sum::<f64>())
            .sum();
        assert_eq!(traj.msd_rec1, vec![expected]);
        assert_eq!(traj.msd_rec2, vec![expected]);
        assert!(traj.counts.is_empty());
    }

    #[test]
    fn fixed_point_without_noise() {
        let model = two_cluster_model();
        let costs = lms_costs(&model, 0.0);
        let a = static_group_weights(&model);
        let mut state = SimulationState::new(&model, 1, 0);
        for k in 0..model.n_agents() {
            state.w[2 * k..2 * k + 2].copy_from_slice(model.agent_minimizer(k));
        }
        let before = state.w.clone();
        atc_group_step(&mut state, &costs, &a, &[0.05; 8]).unwrap();
        for (x, y) in state.w.iter().zip(&before) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn combine_preserves_common_vector() {
        // zero step size: adapt is the identity, so combine sees ψ = w
        let model = two_cluster_model();
        let costs = lms_costs(&model, 0.1);
        let a = static_group_weights(&model);
        let mut state = SimulationState::new(&model, 1, 0);
        for k in 0..model.n_agents() {
            state.w[2 * k..2 * k + 2].copy_from_slice(&[0.25, -1.5]);
            state.w_prime[2 * k..2 * k + 2].copy_from_slice(&[0.25, -1.5]);
        }
        state.dyn_neighbors = (0..8).map(|k| model.neighbors(k).to_vec()).collect();
        atc_group_step(&mut state, &costs, &a, &[0.0; 8]).unwrap();
        atc_dynamic_step(&mut state, &costs, &[0.0; 8]).unwrap();
        for x in state.w.chunks(2).chain(state.w_prime.chunks(2)) {
            assert!((x[0] - 0.25).abs() < 1e-15 && (x[1] + 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_reduces_to_lms() {
        let model = NetworkModel::new(1, &[], vec![0], vec![0], vec![vec![1.0, 2.0]]).unwrap();
        let costs = lms_costs(&model, 0.1);
        let a = static_group_weights(&model);
        let mut state = SimulationState::new(&model, 5, 0);
        state.w.copy_from_slice(&[0.3, 0.4]);
        let mut rng = rng::stream(5, StreamKind::FirstRecursion, 0, 0);
        let mut g = [0.0; 2];
        costs[0].sample_gradient(&[0.3, 0.4], &mut rng, &mut g);
        atc_group_step(&mut state, &costs, &a, &[0.1]).unwrap();
        assert_eq!(state.w, vec![0.3 - 0.1 * g[0], 0.4 - 0.1 * g[1]]);
    }

    #[test]
    fn decision_examples() {
        let model = NetworkModel::new(
            2,
            &[(0, 1)],
            vec![0, 1],
            vec![0, 1],
            vec![vec![0.0, 0.0], vec![3.0, 4.0]],
        )
        .unwrap();
        let mut sets = vec![Vec::new(); 2];
        let mut rec = Vec::new();
        let theta = ThresholdMatrix::uniform(1.0).unwrap();
        clustering_test(&[0.0, 0.0, 3.0, 4.0], &model, &theta, 0, &mut sets, Some(&mut rec));
        assert_eq!(rec[0].delta_sq, 25.0);
        assert_eq!(rec[0].decision, Hypothesis::H1);
        assert_eq!(sets, vec![vec![0], vec![1]]);

        rec.clear();
        clustering_test(&[1.0, 1.0, 1.0, 1.0], &model, &theta, 1, &mut sets, Some(&mut rec));
        assert_eq!(rec[0].decision, Hypothesis::H0);
        assert_eq!(sets, vec![vec![0, 1], vec![0, 1]]);

        // equality is a rejection
        let theta = ThresholdMatrix::uniform(25.0).unwrap();
        let c = clustering_test(&[0.0, 0.0, 3.0, 4.0], &model, &theta, 2, &mut sets, None);
        assert_eq!(sets, vec![vec![0], vec![1]]);
        assert_eq!(c, TestCounts::default());
    }

    #[test]
    fn group_members_always_kept() {
        let model = two_cluster_model();
        let mut sets = vec![Vec::new(); 8];
        let w: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let theta = ThresholdMatrix::uniform(1e-9).unwrap();
        clustering_test(&w, &model, &theta, 0, &mut sets, None);
        for k in 0..8 {
            assert_eq!(sets[k], model.group_neighbors(k));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let model = two_cluster_model();
        let costs = lms_costs(&model, 0.1);
        let a = static_group_weights(&model);
        let cfg = config(&model, 200);
        let t1 = run_algorithm(&model, &costs, &a, &cfg).unwrap();
        let t2 = run_algorithm(&model, &costs, &a, &cfg).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.msd_rec1.len(), 201);
        assert_eq!(t1.counts.len(), 200);
    }

    #[test]
    fn divergence_is_reported() {
        let model = two_cluster_model();
        let costs = lms_costs(&model, 0.1);
        let a = static_group_weights(&model);
        let mut cfg = config(&model, 5000);
        cfg.mu = vec![5.0; 8];
        let err = run_algorithm(&model, &costs, &a, &cfg).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }), "{err:?}");
    }
}
