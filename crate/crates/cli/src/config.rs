//! Experiment configuration (a single JSON document) and its resolution into
//! a concrete network, agent costs and step sizes.

use std::path::{Path, PathBuf};

use diffnet_core::combination::{static_group_weights, CombinationMatrix};
use diffnet_core::models::{lms_cost_model, LmsAgent, LmsAgentSpec};
use diffnet_core::network::{generate_topology, NetworkModel, TopologyJson, TopologySpec};
use diffnet_core::rng::{self, StreamKind};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySource {
    Generate(TopologySpec),
    /// Path to a topology JSON file, relative to the config file.
    File { path: PathBuf },
    Inline(TopologyJson),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentVariances {
    pub sigma_u_sq: f64,
    pub sigma_v_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSource {
    /// Variances drawn uniformly from the given closed ranges, once per
    /// configuration (shared by all trials).
    Random {
        sigma_u_sq: [f64; 2],
        sigma_v_sq: [f64; 2],
    },
    Explicit { agents: Vec<AgentVariances> },
}

impl Default for AgentSource {
    fn default() -> Self {
        AgentSource::Random {
            sigma_u_sq: [0.5, 1.5],
            sigma_v_sq: [0.05, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSize {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaPolicy {
    /// `θ = β · min_{q≠r} ||w_q - w_r||²`, `β ∈ (0, 1)`.
    Relative(f64),
    Absolute(f64),
}

impl Default for ThetaPolicy {
    fn default() -> Self {
        ThetaPolicy::Relative(0.5)
    }
}

impl ThetaPolicy {
    pub fn resolve(&self, model: &NetworkModel) -> CliResult<f64> {
        match *self {
            ThetaPolicy::Absolute(t) if t.is_finite() && t > 0.0 => Ok(t),
            ThetaPolicy::Absolute(t) => Err(CliError::Config(format!("absolute θ = {t} must be positive"))),
            ThetaPolicy::Relative(b) if b > 0.0 && b < 1.0 => {
                let sep = model.min_minimizer_separation_sq().ok_or_else(|| {
                    CliError::Config("relative θ needs at least two clusters".into())
                })?;
                if sep <= 0.0 {
                    return Err(CliError::Config("cluster minimizers coincide".into()));
                }
                Ok(b * sep)
            }
            ThetaPolicy::Relative(b) => Err(CliError::Config(format!("relative θ factor {b} not in (0, 1)"))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Write `decisions.csv` (first trial only).
    #[serde(default = "default_true")]
    pub decisions: bool,
    /// Keep every `curve_stride`-th row of `msd_curves.csv`.
    #[serde(default = "default_stride")]
    pub curve_stride: usize,
    #[serde(default = "default_true")]
    pub final_topology: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions { decisions: true, curve_stride: 1, final_topology: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub mu_list: Vec<f64>,
    #[serde(default)]
    pub theta_list: Vec<ThetaPolicy>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    #[serde(default)]
    pub agents: AgentSource,
    pub mu: StepSize,
    #[serde(default)]
    pub theta: ThetaPolicy,
    pub n_iters: usize,
    pub n_trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub outputs: OutputOptions,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Directory relative paths are resolved against; set by
    /// [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Top-level scalar overrides from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mu: Option<f64>,
    pub n_iters: Option<usize>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(mu) = o.mu {
            self.mu = StepSize::Uniform(mu);
        }
        if let Some(n) = o.n_iters {
            self.n_iters = n;
        }
        if let Some(n) = o.n_trials {
            self.n_trials = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n_iters == 0 || self.n_trials == 0 {
            return Err(CliError::Config("n_iters and n_trials must be at least 1".into()));
        }
        if self.outputs.curve_stride == 0 {
            return Err(CliError::Config("curve_stride must be at least 1".into()));
        }
        let positive = |m: &f64| m.is_finite() && *m > 0.0;
        let ok = match &self.mu {
            StepSize::Uniform(m) => positive(m),
            StepSize::PerAgent(v) => !v.is_empty() && v.iter().all(positive),
        };
        if !ok {
            return Err(CliError::Config("step sizes must be positive".into()));
        }
        if let ThetaPolicy::Relative(b) = self.theta {
            if !(b > 0.0 && b < 1.0) {
                return Err(CliError::Config(format!("relative θ factor {b} not in (0, 1)")));
            }
        }
        if let Some(sweep) = &self.sweep {
            if !sweep.mu_list.iter().all(positive) {
                return Err(CliError::Config("sweep step sizes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Builds the network, agents and step sizes.
    pub fn resolve(&self) -> CliResult<Scenario> {
        self.validate()?;
        let (model, perm) = match &self.topology {
            TopologySource::Generate(spec) => {
                let model = generate_topology(spec)?;
                let n = model.n_agents();
                (model, (0..n).collect::<Vec<_>>())
            }
            TopologySource::Inline(t) => t.to_model_relabeled()?,
            TopologySource::File { path } => {
                let full = self.base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| CliError::Io {
                    path: full.display().to_string(),
                    source,
                })?;
                let t: TopologyJson = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("invalid topology file: {e}")))?;
                t.to_model_relabeled()?
            }
        };
        let n = model.n_agents();
        let permute = |v: &[f64]| perm.iter().map(|&old| v[old]).collect::<Vec<f64>>();

        let variances: Vec<(f64, f64)> = match &self.agents {
            AgentSource::Explicit { agents } => {
                if agents.len() != n {
                    return Err(CliError::Config(format!(
                        "{} agent specs for {n} agents",
                        agents.len()
                    )));
                }
                perm.iter().map(|&old| (agents[old].sigma_u_sq, agents[old].sigma_v_sq)).collect()
            }
            AgentSource::Random { sigma_u_sq, sigma_v_sq } => {
                for r in [sigma_u_sq, sigma_v_sq] {
                    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                        return Err(CliError::Config(format!("invalid variance range {r:?}")));
                    }
                }
                let mut rng = rng::stream(self.seed, StreamKind::AgentParams, 0, 0);
                (0..n)
                    .map(|_| {
                        let u = rng.random_range(sigma_u_sq[0]..=sigma_u_sq[1]);
                        let v = rng.random_range(sigma_v_sq[0]..=sigma_v_sq[1]);
                        (u, v)
                    })
                    .collect()
            }
        };
        let specs: Vec<LmsAgentSpec> = variances
            .iter()
            .enumerate()
            .map(|(k, &(u, v))| LmsAgentSpec {
                sigma_u_sq: u,
                sigma_v_sq: v,
                minimizer: model.agent_minimizer(k).to_vec(),
            })
            .collect();
        let costs = specs.iter().map(lms_cost_model).collect::<Result<Vec<_>, _>>()?;
        let mu = match &self.mu {
            StepSize::Uniform(m) => vec![*m; n],
            StepSize::PerAgent(v) if v.len() == n => permute(v),
            StepSize::PerAgent(v) => {
                return Err(CliError::Config(format!("{} step sizes for {n} agents", v.len())))
            }
        };
        let theta = self.theta.resolve(&model)?;
        let a_static = static_group_weights(&model);
        Ok(Scenario { model, specs, costs, mu, theta, a_static })
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: NetworkModel,
    pub specs: Vec<LmsAgentSpec>,
    pub costs: Vec<LmsAgent>,
    pub mu: Vec<f64>,
    pub theta: f64,
    pub a_static: CombinationMatrix,
}

impl Scenario {
    pub fn mu_max(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }

    /// Step sizes rescaled so that the largest equals `mu_max`.
    pub fn scaled_mu(&self, mu_max: f64) -> Vec<f64> {
        let s = mu_max / self.mu_max();
        self.mu.iter().map(|m| m * s).collect()
    }
}
