//! Experiment configuration.
//!
//! Configs are TOML documents (key-value with nested sections). The full
//! schema is documented in the book's experiments chapter; every field
//! beyond the dataset and method list has a sensible default. The
//! `UNIER_SEED` environment variable overrides the seed list.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::sim::SimMode;

use super::search::SpaceSpec;
use super::HarnessError;

/// Environment variable that overrides the configured seeds.
pub const SEED_ENV_VAR: &str = "UNIER_SEED";

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_path_len() -> usize {
    10
}
fn default_eval_k() -> usize {
    10
}
fn default_jobs() -> usize {
    1
}
fn default_sim() -> SimMode {
    SimMode::Expected
}
fn default_tasks_list() -> Vec<String> {
    vec!["tga".to_string(), "gpp".to_string()]
}
fn default_mastery_threshold() -> f64 {
    0.5
}
fn default_tga_max_targets() -> usize {
    4
}
fn default_trials() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Run seeds; one full train/evaluate pass per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Path budget for every recommender.
    #[serde(default = "default_path_len")]
    pub path_len: usize,
    /// Evaluation cutoff: gain is measured on the first k path steps.
    #[serde(default = "default_eval_k")]
    pub eval_k: usize,
    #[serde(default = "default_sim")]
    pub sim: SimMode,
    /// Measure train/inference cost per row. Off by default so that report
    /// bytes are a pure function of config and seeds.
    #[serde(default)]
    pub profile: bool,
    /// Per-student evaluation parallelism inside a row.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub tasks: TasksConfig,
    #[serde(default)]
    pub perturb: Vec<PerturbConfig>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub search: SearchSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSourceKind {
    Synthetic,
    Bundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub source: DatasetSourceKind,
    /// Bundle directory (required for `source = "bundle"`).
    pub path: Option<PathBuf>,
    /// Generator settings (required for `source = "synthetic"`).
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Fit parameters on the training split.
    #[default]
    Fitted,
    /// Use known parameters: from `params_file` when given, otherwise the
    /// midpoints of the synthetic generator's ranges.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub mode: EstimatorMode,
    pub params_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasksConfig {
    #[serde(default = "default_tasks_list")]
    pub list: Vec<String>,
    /// Mastery below this counts as unmastered: it defines the global-
    /// promotion weights, the target sampling pool, and the feature map.
    #[serde(default = "default_mastery_threshold")]
    pub mastery_threshold: f64,
    /// Targets sampled per student: min(this, |unmastered|).
    #[serde(default = "default_tga_max_targets")]
    pub tga_max_targets: usize,
}

impl Default for TasksConfig {
    fn default() -> Self {
        TasksConfig {
            list: default_tasks_list(),
            mastery_threshold: default_mastery_threshold(),
            tga_max_targets: default_tga_max_targets(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Sparsity,
    Coldstart,
    Noise,
}

impl PerturbKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbKind::Sparsity => "sparsity",
            PerturbKind::Coldstart => "coldstart",
            PerturbKind::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbScope {
    /// Perturb every history before the train/evaluate split.
    #[default]
    Full,
    /// Perturb only the training split's histories; validation and test
    /// students keep their original logs.
    TrainOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub kind: PerturbKind,
    /// Keep ratio (sparsity), max history length (coldstart), or flip
    /// ratio (noise).
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scope: PerturbScope,
}

impl PerturbConfig {
    pub fn label(&self) -> String {
        match self.scope {
            PerturbScope::Full => format!("{}_{}", self.kind.as_str(), self.level),
            PerturbScope::TrainOnly => format!("{}_{}_train", self.kind.as_str(), self.level),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// End-to-end item-level: top-k by gap score.
    GreedyIler,
    /// Two-stage item-level: gap retrieval plus diverse re-ranking.
    DiverseIler,
    /// Value-based step-by-step path agent.
    Dqn,
    /// Actor-critic step-by-step path agent.
    Ac,
    /// Model-based full-path beam planner.
    Beam,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::GreedyIler => "greedy_iler",
            MethodKind::DiverseIler => "diverse_iler",
            MethodKind::Dqn => "dqn",
            MethodKind::Ac => "ac",
            MethodKind::Beam => "beam",
        }
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, MethodKind::Dqn | MethodKind::Ac)
    }
}

/// One benchmark method. Unset hyperparameters fall back to defaults; the
/// optional `space` table declares the random-search domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub name: Option<String>,
    // item-level
    pub k: Option<usize>,
    pub pool_size: Option<usize>,
    #[serde(default)]
    pub exclude_attempted: bool,
    // agents
    pub alpha: Option<f64>,
    pub alpha_critic: Option<f64>,
    pub gamma: Option<f64>,
    pub episodes: Option<usize>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    // beam
    pub beam_width: Option<usize>,
    #[serde(default)]
    pub space: BTreeMap<String, SpaceSpec>,
}

impl MethodConfig {
    pub fn of_kind(kind: MethodKind) -> Self {
        MethodConfig {
            kind,
            name: None,
            k: None,
            pool_size: None,
            exclude_attempted: false,
            alpha: None,
            alpha_critic: None,
            gamma: None,
            episodes: None,
            eps_start: None,
            eps_end: None,
            beam_width: None,
            space: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.as_str().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub wall_clock_s: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings { trials: default_trials(), wall_clock_s: None }
    }
}

impl ExperimentConfig {
    pub fn from_toml(contents: &str) -> Result<Self, HarnessError> {
        toml::from_str(contents).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let contents = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&contents)?;
        cfg.apply_env_seed_override()?;
        Ok(cfg)
    }

    /// Applies the `UNIER_SEED` override when set.
    pub fn apply_env_seed_override(&mut self) -> Result<(), HarnessError> {
        if let Ok(raw) = std::env::var(SEED_ENV_VAR) {
            let seed: u64 = raw.parse().map_err(|_| {
                HarnessError::Config(format!("{SEED_ENV_VAR} must be an integer, got '{raw}'"))
            })?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("at least one method is required".into()));
        }
        if self.tasks.list.is_empty() {
            return Err(HarnessError::Config("at least one task is required".into()));
        }
        for t in &self.tasks.list {
            if t != "tga" && t != "gpp" {
                return Err(HarnessError::Config(format!("unknown task '{t}' (tga or gpp)")));
            }
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.eval_k > self.path_len {
            return Err(HarnessError::Config(format!(
                "eval_k ({}) must not exceed path_len ({})",
                self.eval_k, self.path_len
            )));
        }
        if self.path_len == 0 {
            return Err(HarnessError::Config("path_len must be at least 1".into()));
        }
        if !(self.tasks.mastery_threshold > 0.0 && self.tasks.mastery_threshold < 1.0) {
            return Err(HarnessError::Config("mastery_threshold must lie in (0, 1)".into()));
        }
        if self.tasks.tga_max_targets == 0 {
            return Err(HarnessError::Config("tga_max_targets must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(HarnessError::Config("jobs must be at least 1".into()));
        }
        self.sim.validate().map_err(HarnessError::Sim)?;
        match self.dataset.source {
            DatasetSourceKind::Synthetic => {
                let sc = self.dataset.synthetic.as_ref().ok_or_else(|| {
                    HarnessError::Config("synthetic source needs a [dataset.synthetic] table".into())
                })?;
                sc.validate().map_err(HarnessError::Data)?;
            }
            DatasetSourceKind::Bundle => {
                if self.dataset.path.is_none() {
                    return Err(HarnessError::Config("bundle source needs dataset.path".into()));
                }
            }
        }
        let mut names: Vec<String> = self.methods.iter().map(|m| m.label()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.methods.len() {
            return Err(HarnessError::Config("method names must be unique".into()));
        }
        for p in &self.perturb {
            match p.kind {
                PerturbKind::Sparsity if !(p.level > 0.0 && p.level <= 1.0) => {
                    return Err(HarnessError::Config(format!(
                        "sparsity level {} outside (0, 1]",
                        p.level
                    )))
                }
                PerturbKind::Noise if !(0.0..=1.0).contains(&p.level) => {
                    return Err(HarnessError::Config(format!(
                        "noise level {} outside [0, 1]",
                        p.level
                    )))
                }
                PerturbKind::Coldstart if p.level < 1.0 => {
                    return Err(HarnessError::Config("coldstart level must be >= 1".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn method(&self, name: &str) -> Result<&MethodConfig, HarnessError> {
        self.methods
            .iter()
            .find(|m| m.label() == name)
            .ok_or_else(|| HarnessError::Config(format!("no method named '{name}' in config")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [0, 1]

[dataset]
source = "synthetic"

[dataset.synthetic]
n_students = 20
n_concepts = 3
n_exercises = 6
chain_depth = 3
log_length = 10
seed = 7

[[methods]]
kind = "greedy_iler"

[[methods]]
kind = "dqn"
alpha = 0.05
episodes = 200

[methods.space]
alpha = [0.01, 0.05, 0.1]
gamma = { lo = 0.85, hi = 0.98 }
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.path_len, 10);
        assert_eq!(cfg.eval_k, 10);
        assert_eq!(cfg.sim, SimMode::Expected);
        assert!(!cfg.profile);
        assert_eq!(cfg.tasks.list, vec!["tga", "gpp"]);
        assert_eq!(cfg.tasks.mastery_threshold, 0.5);
        assert_eq!(cfg.methods.len(), 2);
        assert_eq!(cfg.methods[1].alpha, Some(0.05));
        assert!(matches!(
            cfg.methods[1].space.get("alpha"),
            Some(SpaceSpec::Discrete(v)) if v.len() == 3
        ));
        assert!(matches!(
            cfg.methods[1].space.get("gamma"),
            Some(SpaceSpec::Continuous { .. })
        ));
        assert_eq!(cfg.search.trials, 20);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.methods.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.eval_k = 20;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.tasks.list = vec!["nope".into()];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.dataset.synthetic = None;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.methods[1].name = Some("greedy_iler".into());
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.perturb.push(PerturbConfig { kind: PerturbKind::Sparsity, level: 0.0, seed: 0, scope: Default::default() });
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sampled_sim_mode_parses() {
        let toml = MINIMAL.replace(
            "seeds = [0, 1]",
            "seeds = [0]\n\n[sim]\nmode = \"sampled\"\nrollouts = 50\nseed = 3",
        );
        let cfg = ExperimentConfig::from_toml(&toml).unwrap();
        assert_eq!(cfg.sim, SimMode::Sampled { rollouts: 50, seed: 3 });
    }
}
