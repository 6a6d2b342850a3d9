//! Subcommand implementations. Each one is a deterministic function of its
//! configuration and writes its files in a single pass at the end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use diffnet_core::analysis::{delta_sq_pdf_special_case, predict, to_db, PredictOptions, TheoryReport};
use diffnet_core::combination::{static_group_weights, validate_combination};
use diffnet_core::diffusion::Hypothesis;
use diffnet_core::network::{generate_topology, NetworkModel, TopologyJson, TopologySpec};
use serde::Serialize;

use crate::config::{ExperimentConfig, Scenario, ThetaPolicy};
use crate::error::{CliError, CliResult};
use crate::experiment::{run_trials, Aggregate, TrialPlan};

/// Floats are written with 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>, missing: &str) -> String {
    x.map(fmt_f).unwrap_or_else(|| missing.to_string())
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn hyp(h: Hypothesis) -> &'static str {
    match h {
        Hypothesis::H0 => "H0",
        Hypothesis::H1 => "H1",
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        std::env::current_dir().unwrap_or_default().join(&cfg.output_dir)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub size: usize,
    pub msd_rec1: f64,
    pub msd_rec2: f64,
    pub msd_rec1_db: f64,
    pub msd_rec2_db: f64,
    pub msd_rec1_per_agent: f64,
    pub msd_rec2_per_agent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergedTrial {
    pub trial: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub n_agents: usize,
    pub n_clusters: usize,
    pub n_groups: usize,
    pub n_iters: usize,
    pub n_trials: usize,
    pub completed_trials: usize,
    pub diverged_trials: Vec<DivergedTrial>,
    pub seed: u64,
    pub mu_max: f64,
    pub theta: f64,
    /// Inclusive iteration range averaged for steady-state values.
    pub steady_state_first_iter: usize,
    pub steady_state_last_iter: usize,
    /// Network totals `Σ_k ||w_k° - w_k||²`, linear and in dB.
    pub msd_rec1_total: f64,
    pub msd_rec2_total: f64,
    pub msd_rec1_total_db: f64,
    pub msd_rec2_total_db: f64,
    /// Totals divided by the number of agents.
    pub msd_rec1_per_agent: f64,
    pub msd_rec2_per_agent: f64,
    pub msd_rec1_per_agent_db: f64,
    pub msd_rec2_per_agent_db: f64,
    pub clusters: Vec<ClusterSummary>,
    pub n_same_cluster_pairs: usize,
    pub n_cross_cluster_pairs: usize,
    pub type1_rate: Option<f64>,
    pub type1_observations: u64,
    pub type2_rate: Option<f64>,
    pub type2_observations: u64,
    pub correct_clustering_frequency: f64,
    /// `μ_max` times the normalized MSD of the first recursion.
    pub predicted_msd_rec1: Option<f64>,
    pub predicted_msd_rec1_db: Option<f64>,
}

fn summarize(cfg: &ExperimentConfig, scn: &Scenario, agg: &Aggregate) -> Summary {
    let n = scn.model.n_agents() as f64;
    let rec1 = agg.steady_state(&agg.msd_rec1);
    let rec2 = agg.steady_state(&agg.msd_rec2);
    let clusters = (0..scn.model.n_clusters())
        .map(|q| {
            let size = scn.model.cluster_members(q).len();
            let r1 = agg.steady_state(&agg.msd_rec1_cluster[q]);
            let r2 = agg.steady_state(&agg.msd_rec2_cluster[q]);
            ClusterSummary {
                cluster: q,
                size,
                msd_rec1: r1,
                msd_rec2: r2,
                msd_rec1_db: to_db(r1),
                msd_rec2_db: to_db(r2),
                msd_rec1_per_agent: r1 / size as f64,
                msd_rec2_per_agent: r2 / size as f64,
            }
        })
        .collect();
    let prediction = predict(&scn.model, &scn.costs, &scn.a_static, &scn.mu, &PredictOptions::default())
        .ok()
        .map(|r| r.predicted_msd);
    let t1 = agg.type1_rate();
    let t2 = agg.type2_rate();
    Summary {
        n_agents: scn.model.n_agents(),
        n_clusters: scn.model.n_clusters(),
        n_groups: scn.model.n_groups(),
        n_iters: cfg.n_iters,
        n_trials: cfg.n_trials,
        completed_trials: agg.completed_trials(),
        diverged_trials: agg
            .diverged
            .iter()
            .map(|(trial, error)| DivergedTrial { trial: *trial, error: error.clone() })
            .collect(),
        seed: cfg.seed,
        mu_max: scn.mu_max(),
        theta: scn.theta,
        steady_state_first_iter: agg.ss_start,
        steady_state_last_iter: agg.n_iters - 1,
        msd_rec1_total: rec1,
        msd_rec2_total: rec2,
        msd_rec1_total_db: to_db(rec1),
        msd_rec2_total_db: to_db(rec2),
        msd_rec1_per_agent: rec1 / n,
        msd_rec2_per_agent: rec2 / n,
        msd_rec1_per_agent_db: to_db(rec1 / n),
        msd_rec2_per_agent_db: to_db(rec2 / n),
        clusters,
        n_same_cluster_pairs: agg.n_same_cluster_pairs,
        n_cross_cluster_pairs: agg.n_cross_cluster_pairs,
        type1_rate: t1.map(|x| x.0),
        type1_observations: t1.map_or(0, |x| x.1),
        type2_rate: t2.map(|x| x.0),
        type2_observations: t2.map_or(0, |x| x.1),
        correct_clustering_frequency: agg.correct_clustering as f64 / agg.completed_trials() as f64,
        predicted_msd_rec1: prediction,
        predicted_msd_rec1_db: prediction.map(to_db),
    }
}

pub fn msd_curves_csv(agg: &Aggregate, stride: usize) -> String {
    let q = agg.msd_rec1_cluster.len();
    let mut out = String::from("iter,msd_rec1_total,msd_rec2_total");
    for c in 0..q {
        let _ = write!(out, ",msd_rec1_cluster_{c}");
    }
    for c in 0..q {
        let _ = write!(out, ",msd_rec2_cluster_{c}");
    }
    out.push_str(",n_false_alarm,n_miss\n");
    for idx in 0..=agg.n_iters {
        let iter = idx as i64 - 1;
        if idx != 0 && idx != agg.n_iters && idx % stride != 0 {
            continue;
        }
        let _ = write!(out, "{iter},{},{}", fmt_f(agg.msd_rec1[idx]), fmt_f(agg.msd_rec2[idx]));
        for c in 0..q {
            let _ = write!(out, ",{}", fmt_f(agg.msd_rec1_cluster[c][idx]));
        }
        for c in 0..q {
            let _ = write!(out, ",{}", fmt_f(agg.msd_rec2_cluster[c][idx]));
        }
        let (fa, miss) = if idx == 0 { (0.0, 0.0) } else { (agg.false_alarms[idx - 1], agg.misses[idx - 1]) };
        let _ = writeln!(out, ",{},{}", fmt_f(fa), fmt_f(miss));
    }
    out
}

fn decisions_csv(agg: &Aggregate) -> String {
    let mut out = String::from("iter,k,l,delta_sq,theta,decision,truth\n");
    for r in &agg.first_decisions {
        let truth = if r.same_cluster { Hypothesis::H0 } else { Hypothesis::H1 };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration,
            r.k,
            r.l,
            fmt_f(r.delta_sq),
            fmt_f(r.theta),
            hyp(r.decision),
            hyp(truth)
        );
    }
    out
}

fn final_topology(model: &NetworkModel, edges: &[(usize, usize)]) -> TopologyJson {
    let mut t = model.to_json();
    t.edges = edges.iter().map(|&(a, b)| [a, b]).collect();
    t
}

pub struct SimulateOutput {
    pub summary: Summary,
    pub aggregate: Aggregate,
    pub files: Vec<PathBuf>,
}

pub fn simulate(cfg: &ExperimentConfig, threads: usize) -> CliResult<SimulateOutput> {
    let scn = cfg.resolve()?;
    let plan = TrialPlan {
        mu: scn.mu.clone(),
        theta: scn.theta,
        n_iters: cfg.n_iters,
        n_trials: cfg.n_trials,
        seed: cfg.seed,
        record_decisions: cfg.outputs.decisions,
    };
    let agg = run_trials(&scn, &plan, threads)?;
    let summary = summarize(cfg, &scn, &agg);
    let dir = output_dir(cfg);
    let mut files = Vec::new();
    let mut emit = |name: &str, contents: String| -> CliResult<()> {
        let path = dir.join(name);
        write_file(&path, &contents)?;
        files.push(path);
        Ok(())
    };
    emit("msd_curves.csv", msd_curves_csv(&agg, cfg.outputs.curve_stride))?;
    if cfg.outputs.decisions {
        emit("decisions.csv", decisions_csv(&agg))?;
    }
    if cfg.outputs.final_topology {
        emit("final_topology.json", to_json(&final_topology(&scn.model, &agg.first_final_edges)))?;
    }
    emit("summary.json", to_json(&summary))?;
    Ok(SimulateOutput { summary, aggregate: agg, files })
}

pub fn analyze(cfg: &ExperimentConfig) -> CliResult<TheoryReport> {
    let scn = cfg.resolve()?;
    let opts = PredictOptions { thetas: vec![scn.theta], mu_grid: Vec::new(), include_pi: true };
    let report = predict(&scn.model, &scn.costs, &scn.a_static, &scn.mu, &opts)?;
    write_file(&output_dir(cfg).join("theory_report.json"), &to_json(&report))?;
    Ok(report)
}

/// One `(μ, θ)` cell of an error-probability sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrprobCell {
    pub mu: f64,
    pub theta: f64,
    pub type1_rate: Option<f64>,
    pub type1_observations: u64,
    /// Pair-count weighted mean of the per-pair Type-I bounds.
    pub type1_bound: Option<f64>,
    /// `None` when there is nothing to check (no pairs, or a vacuous bound).
    pub type1_within_bound: Option<bool>,
    pub type2_rate: Option<f64>,
    pub type2_observations: u64,
    pub type2_bound: Option<f64>,
    pub type2_within_bound: Option<bool>,
    pub correct_clustering_frequency: f64,
}

/// `rate ≤ bound + 3 binomial standard errors`, checked only where the bound
/// is informative (`< 1`).
pub fn within_bound(rate: Option<(f64, u64)>, bound: Option<f64>) -> Option<bool> {
    let (p, n) = rate?;
    let b = bound?;
    if b >= 1.0 {
        return None;
    }
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Some(p <= b + 3.0 * se)
}

pub struct ErrprobOutput {
    pub cells: Vec<ErrprobCell>,
    pub files: Vec<PathBuf>,
}

pub fn errprob(cfg: &ExperimentConfig, threads: usize) -> CliResult<ErrprobOutput> {
    let scn = cfg.resolve()?;
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let mu_list = if sweep.mu_list.is_empty() { vec![scn.mu_max()] } else { sweep.mu_list };
    let theta_list: Vec<ThetaPolicy> =
        if sweep.theta_list.is_empty() { vec![cfg.theta] } else { sweep.theta_list };

    // adjacent agent pairs per group pair
    let g = scn.model.n_groups();
    let mut pair_counts = vec![vec![0usize; g]; g];
    for (k, l) in scn.model.edges() {
        let (m, n) = (scn.model.group_of(k), scn.model.group_of(l));
        if m != n {
            pair_counts[m.min(n)][m.max(n)] += 1;
        }
    }

    let mut bounds = String::from(
        "mu,theta,m,n,same_cluster,adjacent,n_agent_pairs,d_star_norm_sq,mean,variance,type1_bound,type2_bound,status\n",
    );
    let mut cells = Vec::new();
    for &mu in &mu_list {
        for policy in &theta_list {
            let theta = policy.resolve(&scn.model)?;
            let mu_vec = scn.scaled_mu(mu);
            let opts = PredictOptions { thetas: vec![theta], mu_grid: Vec::new(), include_pi: false };
            let report = predict(&scn.model, &scn.costs, &scn.a_static, &mu_vec, &opts)?;
            let mut agg_bound = [(0.0, 0usize, true), (0.0, 0usize, true)];
            for row in &report.error_bounds {
                let count = pair_counts[row.m][row.n];
                let _ = writeln!(
                    bounds,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    fmt_f(mu),
                    fmt_f(theta),
                    row.m,
                    row.n,
                    row.same_cluster,
                    row.adjacent,
                    count,
                    fmt_f(row.d_star_norm_sq),
                    fmt_f(row.mean),
                    fmt_f(row.variance),
                    if row.same_cluster { fmt_opt(row.type1_bound, "invalid") } else { String::new() },
                    if row.same_cluster { String::new() } else { fmt_opt(row.type2_bound, "invalid") },
                    row.note.as_deref().map(|s| s.replace(',', ";")).unwrap_or_else(|| "ok".into()),
                );
                if count == 0 {
                    continue;
                }
                let (slot, b) = if row.same_cluster {
                    (&mut agg_bound[0], row.type1_bound)
                } else {
                    (&mut agg_bound[1], row.type2_bound)
                };
                match b {
                    Some(b) => {
                        slot.0 += b * count as f64;
                        slot.1 += count;
                    }
                    None => slot.2 = false,
                }
            }
            let agg_of = |(sum, n, valid): (f64, usize, bool)| (valid && n > 0).then(|| sum / n as f64);
            let plan = TrialPlan {
                mu: mu_vec,
                theta,
                n_iters: cfg.n_iters,
                n_trials: cfg.n_trials,
                seed: cfg.seed,
                record_decisions: false,
            };
            let agg = run_trials(&scn, &plan, threads)?;
            let (r1, r2) = (agg.type1_rate(), agg.type2_rate());
            let (b1, b2) = (agg_of(agg_bound[0]), agg_of(agg_bound[1]));
            cells.push(ErrprobCell {
                mu,
                theta,
                type1_rate: r1.map(|x| x.0),
                type1_observations: r1.map_or(0, |x| x.1),
                type1_bound: b1,
                type1_within_bound: within_bound(r1, b1),
                type2_rate: r2.map(|x| x.0),
                type2_observations: r2.map_or(0, |x| x.1),
                type2_bound: b2,
                type2_within_bound: within_bound(r2, b2),
                correct_clustering_frequency: agg.correct_clustering as f64
                    / agg.completed_trials() as f64,
            });
        }
    }

    let mut empirical = String::from(
        "mu,theta,type1_rate,type1_observations,type1_bound,type1_within_bound,type2_rate,type2_observations,type2_bound,type2_within_bound,correct_clustering_frequency\n",
    );
    let flag = |x: Option<bool>| x.map_or("na".to_string(), |b| b.to_string());
    for c in &cells {
        let _ = writeln!(
            empirical,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(c.mu),
            fmt_f(c.theta),
            fmt_opt(c.type1_rate, "na"),
            c.type1_observations,
            fmt_opt(c.type1_bound, "invalid"),
            flag(c.type1_within_bound),
            fmt_opt(c.type2_rate, "na"),
            c.type2_observations,
            fmt_opt(c.type2_bound, "invalid"),
            flag(c.type2_within_bound),
            fmt_f(c.correct_clustering_frequency),
        );
    }
    let dir = output_dir(cfg);
    let files = vec![dir.join("bounds.csv"), dir.join("empirical.csv")];
    write_file(&files[0], &bounds)?;
    write_file(&files[1], &empirical)?;
    Ok(ErrprobOutput { cells, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdfParams {
    pub dim: usize,
    pub d_star_norm_sq: f64,
    pub sigma_sq: f64,
    pub mu_list: Vec<f64>,
    pub n_points: usize,
}

impl Default for PdfParams {
    fn default() -> Self {
        PdfParams {
            dim: 10,
            d_star_norm_sq: 1.0,
            sigma_sq: 1.0,
            mu_list: vec![0.01, 0.03, 0.05],
            n_points: 4001,
        }
    }
}

/// One density curve on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfCurve {
    pub mu: f64,
    pub hypothesis: Hypothesis,
    pub z: Vec<f64>,
    pub density: Vec<f64>,
}

/// Grid `mean ± 12 sd` (clipped at 0), far wider than the 99.99% mass
/// requirement for chi-square shapes.
fn pdf_grid(mean: f64, var: f64, n_points: usize) -> Vec<f64> {
    let sd = var.sqrt();
    let lo = (mean - 12.0 * sd).max(0.0);
    let hi = mean + 12.0 * sd;
    let step = (hi - lo) / (n_points - 1) as f64;
    (0..n_points).map(|i| lo + step * i as f64).collect()
}

pub fn pdf_curves(p: &PdfParams) -> CliResult<Vec<PdfCurve>> {
    if p.dim == 0 || p.n_points < 2 || !(p.sigma_sq > 0.0) || !(p.d_star_norm_sq >= 0.0) {
        return Err(CliError::Config("pdf needs M ≥ 1, σ² > 0, ||d⋆||² ≥ 0 and ≥ 2 points".into()));
    }
    let m = p.dim as f64;
    let mut curves = Vec::new();
    for &mu in &p.mu_list {
        if !(mu > 0.0) {
            return Err(CliError::Config(format!("step size {mu} must be positive")));
        }
        let s = mu * p.sigma_sq;
        for (hypothesis, d_sq) in [(Hypothesis::H0, 0.0), (Hypothesis::H1, p.d_star_norm_sq)] {
            let mean = d_sq + s * m;
            let var = 2.0 * s * s * m + 4.0 * s * d_sq;
            let z = pdf_grid(mean, var, p.n_points);
            let density = z
                .iter()
                .map(|&z| delta_sq_pdf_special_case(z, p.dim, d_sq, p.sigma_sq, mu))
                .collect::<Result<Vec<_>, _>>()?;
            curves.push(PdfCurve { mu, hypothesis, z, density });
        }
    }
    Ok(curves)
}

pub fn pdf(p: &PdfParams, out_dir: &Path) -> CliResult<Vec<PdfCurve>> {
    let curves = pdf_curves(p)?;
    let mut out = String::from("mu,hypothesis,z,density\n");
    for c in &curves {
        for (z, f) in c.z.iter().zip(&c.density) {
            let _ = writeln!(out, "{},{},{},{}", fmt_f(c.mu), hyp(c.hypothesis), fmt_f(*z), fmt_f(*f));
        }
    }
    write_file(&out_dir.join("pdf_curves.csv"), &out)?;
    Ok(curves)
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologyCheck {
    pub valid: bool,
    pub n_agents: usize,
    pub n_clusters: usize,
    pub n_groups: usize,
    pub n_edges: usize,
    pub cluster_sizes: Vec<usize>,
    pub group_sizes: Vec<usize>,
    pub combination_pass: bool,
    pub combination_warnings: bool,
}

pub fn check_topology(model: &NetworkModel) -> TopologyCheck {
    let diag = validate_combination(&static_group_weights(model), model);
    TopologyCheck {
        valid: true,
        n_agents: model.n_agents(),
        n_clusters: model.n_clusters(),
        n_groups: model.n_groups(),
        n_edges: model.edges().len(),
        cluster_sizes: model.cluster_sizes(),
        group_sizes: model.group_sizes(),
        combination_pass: diag.pass,
        combination_warnings: diag.has_warnings(),
    }
}

pub fn topology_generate(spec: &TopologySpec, out: &Path) -> CliResult<TopologyCheck> {
    let model = generate_topology(spec)?;
    write_file(out, &to_json(&model.to_json()))?;
    Ok(check_topology(&model))
}

/// Validates a topology file; labels must already follow the indexing rule.
pub fn topology_validate(path: &Path) -> CliResult<TopologyCheck> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let t: TopologyJson = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid topology file: {e}")))?;
    let model = t.to_model()?;
    Ok(check_topology(&model))
}

pub fn summary_json(check: &TopologyCheck) -> String {
    to_json(check)
}
