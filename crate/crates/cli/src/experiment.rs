//! Monte Carlo trials and their in-order aggregation.
//!
//! Every trial draws from its own RNG streams, and per-trial results are
//! folded in trial order, so aggregates do not depend on the worker count.

use diffnet_core::diffusion::{run_algorithm, DecisionRecord, RunConfig, ThresholdMatrix, Trajectory};
use diffnet_core::network::{connected_components, matches_clusters};
use rayon::prelude::*;

use crate::config::Scenario;
use crate::error::{CliError, CliResult};

/// Worker count from `DIFFNET_THREADS`, defaulting to rayon's choice.
pub fn thread_count() -> usize {
    std::env::var("DIFFNET_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Length of the steady-state window: the final 10% of iterations.
pub fn steady_state_len(n_iters: usize) -> usize {
    n_iters.div_ceil(10).max(1).min(n_iters)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub mu: Vec<f64>,
    pub theta: f64,
    pub n_iters: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Keep the decision log of the first successful trial.
    pub record_decisions: bool,
}

/// Trial-averaged curves and test statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n_iters: usize,
    pub n_trials: usize,
    /// Trials that diverged, with the error message.
    pub diverged: Vec<(u64, String)>,
    /// Mean curves, `n_iters + 1` entries starting at iteration -1.
    pub msd_rec1: Vec<f64>,
    pub msd_rec2: Vec<f64>,
    pub msd_rec1_cluster: Vec<Vec<f64>>,
    pub msd_rec2_cluster: Vec<Vec<f64>>,
    /// Mean number of test errors per iteration, `n_iters` entries.
    pub false_alarms: Vec<f64>,
    pub misses: Vec<f64>,
    pub n_same_cluster_pairs: usize,
    pub n_cross_cluster_pairs: usize,
    /// First iteration of the steady-state window.
    pub ss_start: usize,
    /// Test errors summed over the steady-state window and all trials.
    pub ss_false_alarms: u64,
    pub ss_misses: u64,
    /// Trials whose final learned topology equals the cluster partition.
    pub correct_clustering: usize,
    pub first_decisions: Vec<DecisionRecord>,
    pub first_final_edges: Vec<(usize, usize)>,
}

impl Aggregate {
    pub fn completed_trials(&self) -> usize {
        self.n_trials - self.diverged.len()
    }

    fn ss_observations(&self, pairs: usize) -> u64 {
        ((self.n_iters - self.ss_start) * pairs * self.completed_trials()) as u64
    }

    /// Empirical Type-I rate over steady-state iterations, with its number
    /// of Bernoulli observations.
    pub fn type1_rate(&self) -> Option<(f64, u64)> {
        let n = self.ss_observations(self.n_same_cluster_pairs);
        (n > 0).then(|| (self.ss_false_alarms as f64 / n as f64, n))
    }

    pub fn type2_rate(&self) -> Option<(f64, u64)> {
        let n = self.ss_observations(self.n_cross_cluster_pairs);
        (n > 0).then(|| (self.ss_misses as f64 / n as f64, n))
    }

    /// Mean of a curve over the steady-state window.
    pub fn steady_state(&self, curve: &[f64]) -> f64 {
        let window = &curve[self.ss_start + 1..];
        window.iter().sum::<f64>() / window.len() as f64
    }
}

struct TrialResult {
    trial: u64,
    outcome: Result<(Trajectory, bool), diffnet_core::Error>,
}

fn run_one(scn: &Scenario, plan: &TrialPlan, theta: &ThresholdMatrix, trial: u64) -> TrialResult {
    let cfg = RunConfig {
        mu: plan.mu.clone(),
        theta: theta.clone(),
        n_iters: plan.n_iters,
        seed: plan.seed,
        trial,
        record_decisions: plan.record_decisions && trial == 0,
    };
    let outcome = run_algorithm(&scn.model, &scn.costs, &scn.a_static, &cfg).map(|t| {
        let comps = connected_components(&scn.model, &t.final_active_edges);
        let correct = matches_clusters(&scn.model, &comps);
        (t, correct)
    });
    TrialResult { trial, outcome }
}

pub fn run_trials(scn: &Scenario, plan: &TrialPlan, threads: usize) -> CliResult<Aggregate> {
    let theta = ThresholdMatrix::uniform(plan.theta)?;
    let n_iters = plan.n_iters;
    let q = scn.model.n_clusters();
    let ss_len = steady_state_len(n_iters);
    let mut agg = Aggregate {
        n_iters,
        n_trials: plan.n_trials,
        diverged: Vec::new(),
        msd_rec1: vec![0.0; n_iters + 1],
        msd_rec2: vec![0.0; n_iters + 1],
        msd_rec1_cluster: vec![vec![0.0; n_iters + 1]; q],
        msd_rec2_cluster: vec![vec![0.0; n_iters + 1]; q],
        false_alarms: vec![0.0; n_iters],
        misses: vec![0.0; n_iters],
        n_same_cluster_pairs: 0,
        n_cross_cluster_pairs: 0,
        ss_start: n_iters - ss_len,
        ss_false_alarms: 0,
        ss_misses: 0,
        correct_clustering: 0,
        first_decisions: Vec::new(),
        first_final_edges: Vec::new(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let chunk = 4 * threads.max(1);
    let mut first = true;
    let mut trial = 0u64;
    while (trial as usize) < plan.n_trials {
        let end = (trial as usize + chunk).min(plan.n_trials) as u64;
        let results: Vec<TrialResult> = pool.install(|| {
            (trial..end)
                .into_par_iter()
                .map(|t| run_one(scn, plan, &theta, t))
                .collect()
        });
        for r in results {
            match r.outcome {
                Err(e) => agg.diverged.push((r.trial, e.to_string())),
                Ok((t, correct)) => {
                    fold(&mut agg, &t, correct);
                    if first {
                        agg.first_decisions = t.decisions;
                        agg.first_final_edges = t.final_active_edges;
                        first = false;
                    }
                }
            }
        }
        trial = end;
    }
    let done = agg.completed_trials();
    if done == 0 {
        return Err(CliError::Numerical(diffnet_core::Error::DomainError(format!(
            "all {} trials diverged; first: {}",
            plan.n_trials, agg.diverged[0].1
        ))));
    }
    let scale = 1.0 / done as f64;
    let curves = [&mut agg.msd_rec1, &mut agg.msd_rec2, &mut agg.false_alarms, &mut agg.misses]
        .into_iter()
        .chain(agg.msd_rec1_cluster.iter_mut())
        .chain(agg.msd_rec2_cluster.iter_mut());
    for c in curves {
        c.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(agg)
}

fn fold(agg: &mut Aggregate, t: &Trajectory, correct: bool) {
    let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    add(&mut agg.msd_rec1, &t.msd_rec1);
    add(&mut agg.msd_rec2, &t.msd_rec2);
    for (d, s) in agg.msd_rec1_cluster.iter_mut().zip(&t.msd_rec1_cluster) {
        add(d, s);
    }
    for (d, s) in agg.msd_rec2_cluster.iter_mut().zip(&t.msd_rec2_cluster) {
        add(d, s);
    }
    for (i, c) in t.counts.iter().enumerate() {
        agg.false_alarms[i] += f64::from(c.false_alarms);
        agg.misses[i] += f64::from(c.misses);
        if i >= agg.ss_start {
            agg.ss_false_alarms += u64::from(c.false_alarms);
            agg.ss_misses += u64::from(c.misses);
        }
    }
    agg.n_same_cluster_pairs = t.n_same_cluster_pairs;
    agg.n_cross_cluster_pairs = t.n_cross_cluster_pairs;
    agg.correct_clustering += usize::from(correct);
}
