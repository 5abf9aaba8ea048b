use std::path::Path;

use purl_core::envs::Task;
use purl_core::rewardlearn::{Method, Mode, PurlConfig};
use purl_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything one experiment needs. Serialized as a single flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    #[serde(flatten)]
    pub purl: PurlConfig,
    /// Expert trajectories used as positives in imitation mode.
    pub demo_count: usize,
    /// Trajectories annotated for the supervised reward model.
    pub annotation_count: usize,
    /// Trajectories in each held-out probe set.
    pub holdout_count: usize,
    pub expert_noise: f64,
    /// Share of expert trajectories in the annotation corpus.
    pub expert_fraction: f64,
    pub domain_gap: bool,
    pub seeds: Vec<u64>,
    pub reward_steps: usize,
    pub reward_batch: usize,
    pub reward_lr: f64,
    pub ensemble_size: usize,
    /// When set, no policy is trained: the discriminator is fit against a
    /// frozen buffer whose transitions come from successful episodes in
    /// exactly this proportion.
    pub buffer_success_fraction: Option<f64>,
    /// Transitions in the frozen buffer.
    pub buffer_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Carry,
            method: Method::NnPuGail,
            purl: PurlConfig::default(),
            demo_count: 50,
            annotation_count: 50,
            holdout_count: 20,
            expert_noise: 0.1,
            expert_fraction: 0.4,
            domain_gap: false,
            seeds: (0..5).collect(),
            reward_steps: 20_000,
            reward_batch: 64,
            reward_lr: purl_core::diffnet::REWARD_LR,
            ensemble_size: 5,
            buffer_success_fraction: None,
            buffer_size: 8_000,
        }
    }
}

impl ExperimentConfig {
    /// Default config for `method` on `task`, with the task's class prior and slack.
    pub fn for_method(task: Task, method: Method) -> Self {
        let (eta, beta) = PurlConfig::task_defaults(task, method.mode());
        Self { task, method, purl: PurlConfig { eta, beta, ..PurlConfig::default() }, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config JSON: {e}")))?;
        let known = serde_json::to_value(Self::default())?;
        if let (Some(obj), Some(known)) = (value.as_object(), known.as_object()) {
            if let Some(k) = obj.keys().find(|k| !known.contains_key(*k)) {
                return Err(Error::config(format!("unknown config field {k:?}")));
            }
        }
        let config: Self = serde_json::from_value(value).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        self.purl.validate()?;
        if !(0.0..=1.0).contains(&self.expert_noise) || !(0.0..=1.0).contains(&self.expert_fraction) {
            return Err(Error::config("expert noise and expert fraction must lie in [0, 1]"));
        }
        if self.holdout_count == 0 {
            return Err(Error::config("holdout count must be positive"));
        }
        match self.method.mode() {
            Mode::Imitation if self.demo_count == 0 => {
                return Err(Error::config(format!("{} needs demonstrations", self.method)));
            }
            Mode::SemiSupervised if self.annotation_count == 0 || self.reward_batch == 0 => {
                return Err(Error::config(format!("{} needs an annotated corpus", self.method)));
            }
            _ => {}
        }
        if self.method == Method::PrlEnsemble && self.ensemble_size < 2 {
            return Err(Error::config("an ensemble needs at least two members"));
        }
        if let Some(f) = self.buffer_success_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::config("buffer success fraction must lie in [0, 1]"));
            }
            if self.method.objective().is_none() {
                return Err(Error::config(format!("{} has no discriminator to probe", self.method)));
            }
            if self.buffer_size == 0 {
                return Err(Error::config("probe buffer must be non-empty"));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
