//! Discriminators, supervised reward models, and the policy-learning loop that
//! interleaves them with tabular Q-learning.
//!
//! Nothing here sees the environment's hidden reward. Evaluation goes through
//! the caller-supplied [`Evaluator`], and the true-reward baseline receives its
//! reward as an opaque closure.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agents::{QConfig, QSample, QTable, ReplayBuffer, DEFAULT_CAPACITY};
use crate::diffnet::{adam_step, DISCRIMINATOR_LR, REWARD_LR};
use crate::envs::{Experience, GridWorld, Observation, Task, OBS_DIM, TIME_CHANNEL};
use crate::error::{Error, Result};
use crate::purisk::{objective_step, squared_error_step, Branch, LabeledBatch, Objective};
use crate::scalar::{sigmoid, softplus};
use crate::{AdamConfig, AdamState, ClassPrior, Mlp, RiskBreakdown, SlackBeta};

const GATE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Positives are expert demonstrations, reward is `-log(1 - D)`.
    Imitation,
    /// Positives are the reward model's training states, reward is the gated prediction.
    SemiSupervised,
    /// Reward supplied from outside (the environment's own reward).
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PRL")]
    Prl,
    #[serde(rename = "PRL-ensemble")]
    PrlEnsemble,
    #[serde(rename = "PNRL")]
    Pnrl,
    #[serde(rename = "PURL")]
    Purl,
    #[serde(rename = "NNPURL")]
    NnPurl,
    #[serde(rename = "GAIL")]
    Gail,
    #[serde(rename = "GAIL-no-reg")]
    GailNoReg,
    #[serde(rename = "PUGAIL")]
    PuGail,
    #[serde(rename = "NNPUGAIL")]
    NnPuGail,
    #[serde(rename = "oracle")]
    Oracle,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Prl,
        Method::PrlEnsemble,
        Method::Pnrl,
        Method::Purl,
        Method::NnPurl,
        Method::Gail,
        Method::GailNoReg,
        Method::PuGail,
        Method::NnPuGail,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Prl => "PRL",
            Method::PrlEnsemble => "PRL-ensemble",
            Method::Pnrl => "PNRL",
            Method::Purl => "PURL",
            Method::NnPurl => "NNPURL",
            Method::Gail => "GAIL",
            Method::GailNoReg => "GAIL-no-reg",
            Method::PuGail => "PUGAIL",
            Method::NnPuGail => "NNPUGAIL",
            Method::Oracle => "oracle",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Method::Gail | Method::GailNoReg | Method::PuGail | Method::NnPuGail => Mode::Imitation,
            Method::Prl | Method::PrlEnsemble | Method::Pnrl | Method::Purl | Method::NnPurl => Mode::SemiSupervised,
            Method::Oracle => Mode::External,
        }
    }

    /// Discriminator objective, if the method trains one.
    pub fn objective(self) -> Option<Objective> {
        match self {
            Method::Pnrl | Method::Gail | Method::GailNoReg => Some(Objective::Pn),
            Method::Purl | Method::PuGail => Some(Objective::Pu),
            Method::NnPurl | Method::NnPuGail => Some(Objective::NnPu),
            Method::Prl | Method::PrlEnsemble | Method::Oracle => None,
        }
    }

    /// Whether discriminator inputs are perturbed with Gaussian noise. Every
    /// discriminator is, except the unregularized GAIL baseline.
    pub fn regularized(self) -> bool {
        self.objective().is_some() && self != Method::GailNoReg
    }

    pub fn is_pu(self) -> bool {
        matches!(self.objective(), Some(Objective::Pu | Objective::NnPu))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub objective: Objective,
    pub eta: f64,
    pub beta: f64,
    pub lr: f64,
    /// Standard deviation of Gaussian noise added to inputs during updates; 0 disables it.
    pub input_noise: f64,
    /// Whether the normalized time channel reaches the network. When off it is
    /// fed as 0, so `D` cannot separate classes by episode progress alone.
    pub time_feature: bool,
}

impl DiscriminatorConfig {
    pub fn new(objective: Objective, eta: f64, beta: f64) -> Self {
        Self { objective, eta, beta, lr: DISCRIMINATOR_LR, input_noise: 0.0, time_feature: true }
    }
}

/// Outcome of one discriminator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscUpdate {
    pub breakdown: RiskBreakdown,
    pub branch: Branch,
}

/// `D_θ` with its optimizer. The objective is fixed at construction.
#[derive(Debug, Clone)]
pub struct DiscriminatorModel {
    net: Mlp,
    adam: AdamState,
    objective: Objective,
    eta: ClassPrior,
    beta: SlackBeta,
    noise: Option<Normal<f64>>,
    time_feature: bool,
    rng: ChaCha8Rng,
}

impl DiscriminatorModel {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::with_default_hidden(OBS_DIM, &mut rng)?;
        Self::from_net(net, config, seed)
    }

    pub fn from_net(net: Mlp, config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if net.input_dim() != OBS_DIM {
            return Err(Error::config(format!("discriminator takes {OBS_DIM} features, got {}", net.input_dim())));
        }
        let noise = if config.input_noise > 0.0 {
            Some(Normal::new(0.0, config.input_noise).map_err(|e| Error::config(e.to_string()))?)
        } else if config.input_noise == 0.0 {
            None
        } else {
            return Err(Error::config("input noise must be non-negative"));
        };
        let beta = if config.objective == Objective::Pn { SlackBeta::zero() } else { SlackBeta::new(config.beta)? };
        Ok(Self {
            adam: AdamState::new(&net, AdamConfig::with_lr(config.lr))?,
            net,
            objective: config.objective,
            eta: ClassPrior::new(config.eta)?,
            beta,
            noise,
            time_feature: config.time_feature,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6e6f_6973_65),
        })
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn eta(&self) -> f64 {
        self.eta.value()
    }

    pub fn beta(&self) -> f64 {
        self.beta.value()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// The features the network actually sees.
    pub fn view(&self, s: &Observation) -> Observation {
        features(s, self.time_feature)
    }

    pub fn score(&self, s: &Observation) -> f64 {
        self.net.forward(&self.view(s)).expect("observation width matches network")
    }

    /// `D(s)`, the probability that `s` belongs to the positive (success) class.
    pub fn prob(&self, s: &Observation) -> f64 {
        sigmoid(self.score(s))
    }

    pub fn scores(&self, batch: &[Observation]) -> Vec<f64> {
        if batch.is_empty() {
            return Vec::new();
        }
        let inputs: Vec<Observation> = batch.iter().map(|s| self.view(s)).collect();
        self.net.forward_batch(&inputs).expect("observation width matches network").scores().to_vec()
    }

    /// One Adam step on the objective. `contrast` is negative data for PN and
    /// unlabeled data for PU / non-negative PU.
    pub fn update(&mut self, positives: &[Observation], contrast: &[Observation]) -> Result<DiscUpdate> {
        let (noise, time_feature, rng) = (self.noise, self.time_feature, &mut self.rng);
        let mut prepare = |batch: &[Observation]| -> Vec<Observation> {
            batch
                .iter()
                .map(|s| {
                    let v = match noise {
                        Some(n) => s.map(|x| x + n.sample(rng)),
                        None => *s,
                    };
                    features(&v, time_feature)
                })
                .collect()
        };
        let (p, c) = (prepare(positives), prepare(contrast));
        let pos = LabeledBatch::positive(&p)?;
        let con = match self.objective {
            Objective::Pn => LabeledBatch::negative(&c)?,
            _ => LabeledBatch::unlabeled(&c)?,
        };
        let step = objective_step(self.objective, pos, con, self.eta, self.beta, &self.net)?;
        if !step.breakdown.total.is_finite() {
            return Err(Error::training("non-finite discriminator risk", "risk.total", step.breakdown.total));
        }
        adam_step(&mut self.net, &step.gradient, &mut self.adam)?;
        Ok(DiscUpdate { breakdown: step.breakdown, branch: step.branch })
    }
}

/// `s` with the time channel zeroed unless `time_feature`.
pub fn features(s: &Observation, time_feature: bool) -> Observation {
    let mut v = *s;
    if !time_feature {
        v[TIME_CHANNEL] = 0.0;
    }
    v
}

/// One discriminator update; see [`DiscriminatorModel::update`].
pub fn disc_update(disc: &mut DiscriminatorModel, positives: &[Observation], contrast: &[Observation]) -> Result<DiscUpdate> {
    disc.update(positives, contrast)
}

/// `-log(1 - D(s))`, computed as `softplus(score)`.
pub fn gail_reward(disc: &DiscriminatorModel, s: &Observation) -> f64 {
    softplus(disc.score(s))
}

/// Anything that maps a state to a learned reward.
pub trait RewardPredictor {
    fn predict(&self, s: &Observation) -> f64;

    fn predict_batch(&self, batch: &[Observation]) -> Vec<f64> {
        batch.iter().map(|s| self.predict(s)).collect()
    }
}

/// `r_φ`, trained by regression on annotated states. Predictions are clamped at 0.
#[derive(Debug, Clone)]
pub struct RewardModel {
    net: Mlp,
    adam: AdamState,
    time_feature: bool,
}

impl RewardModel {
    pub fn new(lr: f64, seed: u64) -> Result<Self> {
        let net = Mlp::with_default_hidden(OBS_DIM, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Self::from_net(net, lr)
    }

    pub fn with_default_lr(seed: u64) -> Result<Self> {
        Self::new(REWARD_LR, seed)
    }

    pub fn from_net(net: Mlp, lr: f64) -> Result<Self> {
        if net.input_dim() != OBS_DIM {
            return Err(Error::config(format!("reward model takes {OBS_DIM} features, got {}", net.input_dim())));
        }
        Ok(Self { adam: AdamState::new(&net, AdamConfig::with_lr(lr))?, net, time_feature: true })
    }

    /// Hides the time channel from the network when `on` is false.
    pub fn with_time_feature(mut self, on: bool) -> Self {
        self.time_feature = on;
        self
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn view(&self, s: &Observation) -> Observation {
        features(s, self.time_feature)
    }

    /// Unclamped network output.
    pub fn raw(&self, s: &Observation) -> f64 {
        self.net.forward(&self.view(s)).expect("observation width matches network")
    }

    /// Mean squared error of the raw outputs over `corpus`.
    pub fn mse(&self, corpus: &[(Observation, f64)]) -> f64 {
        let inputs: Vec<Observation> = corpus.iter().map(|(s, _)| self.view(s)).collect();
        let tape = self.net.forward_batch(&inputs).expect("observation width matches network");
        let se: f64 = tape.scores().iter().zip(corpus).map(|(p, (_, t))| (p - t).powi(2)).sum();
        se / corpus.len().max(1) as f64
    }
}

impl RewardPredictor for RewardModel {
    fn predict(&self, s: &Observation) -> f64 {
        self.raw(s).max(0.0)
    }

    fn predict_batch(&self, batch: &[Observation]) -> Vec<f64> {
        if batch.is_empty() {
            return Vec::new();
        }
        let inputs: Vec<Observation> = batch.iter().map(|s| self.view(s)).collect();
        let tape = self.net.forward_batch(&inputs).expect("observation width matches network");
        tape.scores().iter().map(|v| v.max(0.0)).collect()
    }
}

/// Minibatch Adam regression of `model` on `corpus` for `steps` updates.
/// Returns the final mean squared error over the whole corpus.
pub fn train_reward_supervised(
    model: &mut RewardModel,
    corpus: &[(Observation, f64)],
    steps: usize,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::usage("reward corpus is empty"));
    }
    if batch == 0 {
        return Err(Error::config("reward batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..steps {
        inputs.clear();
        targets.clear();
        for _ in 0..batch {
            let (s, r) = corpus[rng.random_range(0..corpus.len())];
            inputs.push(model.view(&s));
            targets.push(r);
        }
        let (loss, grad) = squared_error_step(&model.net, &inputs, &targets)?;
        if !loss.is_finite() {
            return Err(Error::training("non-finite reward regression loss", "mse", loss));
        }
        adam_step(&mut model.net, &grad, &mut model.adam)?;
    }
    let mse = model.mse(corpus);
    if !mse.is_finite() {
        return Err(Error::training("non-finite reward regression loss", "mse", mse));
    }
    Ok(mse)
}

/// Elementwise minimum over independently initialized reward models.
#[derive(Debug, Clone)]
pub struct EnsembleReward {
    members: Vec<RewardModel>,
}

impl EnsembleReward {
    pub fn new(members: Vec<RewardModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::config("an ensemble needs at least two members"));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[RewardModel] {
        &self.members
    }

    /// Trains every member on the same corpus with its own minibatch stream.
    /// Returns the largest member training error.
    pub fn train(&mut self, corpus: &[(Observation, f64)], steps: usize, batch: usize, seed: u64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, m) in self.members.iter_mut().enumerate() {
            worst = worst.max(train_reward_supervised(m, corpus, steps, batch, seed.wrapping_add(i as u64))?);
        }
        Ok(worst)
    }
}

impl RewardPredictor for EnsembleReward {
    fn predict(&self, s: &Observation) -> f64 {
        self.members.iter().map(|m| m.predict(s)).fold(f64::INFINITY, f64::min)
    }

    fn predict_batch(&self, batch: &[Observation]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; batch.len()];
        for m in &self.members {
            for (o, v) in out.iter_mut().zip(m.predict_batch(batch)) {
                *o = o.min(v);
            }
        }
        out
    }
}

/// `[D(s) > 0.5] · r(s)`.
pub fn gated_reward(disc: &DiscriminatorModel, reward: &dyn RewardPredictor, s: &Observation) -> f64 {
    if disc.prob(s) > GATE_THRESHOLD {
        reward.predict(s)
    } else {
        0.0
    }
}

/// A reward predictor behind a discriminator gate.
pub struct GatedReward<'a> {
    pub reward: &'a dyn RewardPredictor,
    pub disc: &'a DiscriminatorModel,
}

impl RewardPredictor for GatedReward<'_> {
    fn predict(&self, s: &Observation) -> f64 {
        gated_reward(self.disc, self.reward, s)
    }

    fn predict_batch(&self, batch: &[Observation]) -> Vec<f64> {
        let r = self.reward.predict_batch(batch);
        self.disc.scores(batch).into_iter().zip(r).map(|(z, r)| if sigmoid(z) > GATE_THRESHOLD { r } else { 0.0 }).collect()
    }
}

/// Hyperparameters of the policy-learning loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PurlConfig {
    pub eta: f64,
    pub beta: f64,
    /// Class weight of the positive term in PN discriminators.
    pub pn_prior: f64,
    pub positive_batch: usize,
    pub unlabeled_batch: usize,
    pub disc_lr: f64,
    /// Environment steps.
    pub steps: usize,
    /// Discriminator updates per policy update.
    pub update_ratio: usize,
    /// Environment steps between learning iterations.
    pub train_every: usize,
    pub learning_starts: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Steps during which the gate is bypassed.
    pub gate_warmup: usize,
    pub input_noise: f64,
    pub replay_capacity: usize,
    /// Buffer states scored for the replay PoS column.
    pub replay_probe: usize,
    /// Learned-reward runs value a task-completing transition as entering an
    /// absorbing state that keeps paying the reward of the final observation.
    pub absorbing_terminal: bool,
    /// Feed the time channel to the discriminator and reward nets. Off by
    /// default: the tabular policy cannot condition on time, so a
    /// time-dependent reward is noise to it.
    pub time_feature: bool,
    /// Initial Q value for learned-reward runs. Learned rewards are
    /// non-negative, so a zero table never prefers untried actions; the
    /// true-reward baseline starts from 0, which its step cost makes optimistic.
    pub learned_q_init: f64,
    #[serde(flatten)]
    pub q: QConfig,
}

impl Default for PurlConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            beta: 0.0,
            pn_prior: 0.5,
            positive_batch: 64,
            unlabeled_batch: 64,
            disc_lr: DISCRIMINATOR_LR,
            steps: 100_000,
            update_ratio: 1,
            train_every: 1,
            learning_starts: 64,
            eval_interval: 5_000,
            eval_episodes: 20,
            gate_warmup: 0,
            input_noise: 0.1,
            replay_capacity: DEFAULT_CAPACITY,
            replay_probe: 512,
            absorbing_terminal: true,
            time_feature: false,
            learned_q_init: 50.0,
            q: QConfig::default(),
        }
    }
}

impl PurlConfig {
    /// Class prior and slack per task and method family. Imitation on the
    /// goal-reach task uses a lower prior; everything else uses 0.5.
    pub fn task_defaults(task: Task, mode: Mode) -> (f64, f64) {
        match (task, mode) {
            (Task::Reach, Mode::Imitation) => (0.25, 0.0),
            _ => (0.5, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ClassPrior::new(self.eta)?;
        ClassPrior::new(self.pn_prior)?;
        SlackBeta::new(self.beta)?;
        if self.positive_batch == 0 || self.unlabeled_batch == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        if self.update_ratio == 0 || self.train_every == 0 {
            return Err(Error::config("update ratio and training period must be positive"));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(Error::config("evaluation interval and episode count must be positive"));
        }
        if !(self.disc_lr > 0.0 && self.disc_lr.is_finite()) {
            return Err(Error::config("discriminator learning rate must be positive"));
        }
        if !(self.input_noise >= 0.0 && self.input_noise.is_finite()) {
            return Err(Error::config("input noise must be non-negative"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        if !self.learned_q_init.is_finite() {
            return Err(Error::config("initial Q value must be finite"));
        }
        self.q.validate()
    }

    pub fn discriminator(&self, method: Method) -> Option<DiscriminatorConfig> {
        let objective = method.objective()?;
        let eta = if objective == Objective::Pn { self.pn_prior } else { self.eta };
        let beta = if objective == Objective::Pu { f64::INFINITY } else { self.beta };
        Some(DiscriminatorConfig {
            objective,
            eta,
            beta,
            lr: self.disc_lr,
            input_noise: if method.regularized() { self.input_noise } else { 0.0 },
            time_feature: self.time_feature,
        })
    }
}

/// Where the policy's reward comes from.
pub enum RewardSource<'a> {
    /// Expert states used as positives.
    Imitation { demos: &'a [Observation] },
    /// A pre-trained reward model and the states it was trained on.
    SemiSupervised { reward: &'a dyn RewardPredictor, support: &'a [Observation], train_mse: f64 },
    /// A reward computed by the caller for each recorded step.
    External(&'a dyn Fn(&Experience) -> f64),
}

impl RewardSource<'_> {
    fn mode(&self) -> Mode {
        match self {
            RewardSource::Imitation { .. } => Mode::Imitation,
            RewardSource::SemiSupervised { .. } => Mode::SemiSupervised,
            RewardSource::External(_) => Mode::External,
        }
    }
}

/// Fixed state sets the discriminator is probed on at every evaluation.
#[derive(Debug, Clone, Default)]
pub struct ProbeSets {
    pub train_expert: Vec<Observation>,
    pub holdout_expert: Vec<Observation>,
    pub holdout_failure: Vec<Observation>,
}

/// Fraction with `D > 0.5` and mean `D` over one state set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub pos: f64,
    pub sig: f64,
}

impl ClassStats {
    pub fn measure(disc: &DiscriminatorModel, states: &[Observation]) -> Option<Self> {
        if states.is_empty() {
            return None;
        }
        let n = states.len() as f64;
        let probs: Vec<f64> = disc.scores(states).into_iter().map(sigmoid).collect();
        Some(Self {
            pos: probs.iter().filter(|&&p| p > GATE_THRESHOLD).count() as f64 / n,
            sig: probs.iter().sum::<f64>() / n,
        })
    }
}

/// Discriminator statistics on the probe sets and the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscStats {
    pub train_expert: Option<ClassStats>,
    pub holdout_expert: Option<ClassStats>,
    pub holdout_failure: Option<ClassStats>,
    pub replay: Option<ClassStats>,
}

impl DiscStats {
    pub fn measure(disc: &DiscriminatorModel, probes: &ProbeSets, replay: &[Observation]) -> Self {
        Self {
            train_expert: ClassStats::measure(disc, &probes.train_expert),
            holdout_expert: ClassStats::measure(disc, &probes.holdout_expert),
            holdout_failure: ClassStats::measure(disc, &probes.holdout_failure),
            replay: ClassStats::measure(disc, replay),
        }
    }
}

/// Greedy-policy evaluation, supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Evaluation {
    pub true_return: f64,
    /// Sum of the learned reward along the same episodes, if there is one.
    pub pseudo_return: Option<f64>,
    pub success_rate: f64,
}

pub trait Evaluator {
    fn evaluate(&mut self, policy: &QTable, learned_reward: Option<&dyn RewardPredictor>) -> Result<Evaluation>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub seed: u64,
    /// Absent when no policy is trained.
    pub true_return: Option<f64>,
    pub pseudo_return: Option<f64>,
    pub success_rate: Option<f64>,
    pub disc: DiscStats,
    pub reward_mse_train: Option<f64>,
    pub correction_active_rate: f64,
}

pub struct RunOutput {
    pub policy: QTable,
    pub discriminator: Option<DiscriminatorModel>,
    pub metrics: Vec<MetricsRow>,
}

/// Reward on `s_{t+1}` for the method's mode.
struct LearnedReward<'a> {
    disc: Option<&'a DiscriminatorModel>,
    reward: Option<&'a dyn RewardPredictor>,
    gate: bool,
}

impl RewardPredictor for LearnedReward<'_> {
    fn predict(&self, s: &Observation) -> f64 {
        self.predict_batch(std::slice::from_ref(s))[0]
    }

    fn predict_batch(&self, batch: &[Observation]) -> Vec<f64> {
        match (self.reward, self.disc) {
            (Some(r), Some(d)) if self.gate => GatedReward { reward: r, disc: d }.predict_batch(batch),
            (Some(r), _) => r.predict_batch(batch),
            (None, Some(d)) => d.scores(batch).into_iter().map(softplus).collect(),
            (None, None) => vec![0.0; batch.len()],
        }
    }
}

/// Runs a PU-discriminator method (PURL, nn-PURL, PUGAIL, nn-PUGAIL).
pub fn run_purl(
    method: Method,
    config: &PurlConfig,
    env: &GridWorld,
    source: RewardSource<'_>,
    probes: &ProbeSets,
    evaluator: &mut dyn Evaluator,
    seed: u64,
) -> Result<RunOutput> {
    if !method.is_pu() {
        return Err(Error::config(format!("{method} does not use a PU discriminator")));
    }
    run_method(method, config, env, source, probes, evaluator, seed)
}

/// Runs a baseline (PRL, PRL-ensemble, PNRL, GAIL, GAIL-no-reg, PUGAIL) or the true-reward ceiling.
pub fn baseline_runs(
    method: Method,
    config: &PurlConfig,
    env: &GridWorld,
    source: RewardSource<'_>,
    probes: &ProbeSets,
    evaluator: &mut dyn Evaluator,
    seed: u64,
) -> Result<RunOutput> {
    if method.objective() == Some(Objective::NnPu) || method == Method::Purl {
        return Err(Error::config(format!("{method} is not a baseline")));
    }
    run_method(method, config, env, source, probes, evaluator, seed)
}

/// The policy-learning loop: act, store, then per iteration sample a replay
/// minibatch, update the discriminator on `s_t` against a positive batch,
/// reward `s_{t+1}` and apply one Q update.
pub fn run_method(
    method: Method,
    config: &PurlConfig,
    env: &GridWorld,
    source: RewardSource<'_>,
    probes: &ProbeSets,
    evaluator: &mut dyn Evaluator,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    if source.mode() != method.mode() {
        return Err(Error::config(format!("{method} needs {:?} data, got {:?}", method.mode(), source.mode())));
    }
    let (positives, reward, train_mse, external): (&[Observation], Option<&dyn RewardPredictor>, Option<f64>, _) =
        match source {
            RewardSource::Imitation { demos } => (demos, None, None, None),
            RewardSource::SemiSupervised { reward, support, train_mse } => (support, Some(reward), Some(train_mse), None),
            RewardSource::External(f) => (&[][..], None, None, Some(f)),
        };
    let mut disc = match config.discriminator(method) {
        Some(dc) => {
            if positives.is_empty() {
                return Err(Error::config(format!("{method} needs a non-empty positive pool")));
            }
            Some(DiscriminatorModel::new(dc, seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xd15c)?)
        }
        None => None,
    };
    let gamma = config.q.gamma;
    let init = if method.mode() == Mode::External { config.q.init } else { config.learned_q_init };
    let mut policy = QTable::new(env.config().width, env.config().height, QConfig { init, ..config.q })?;
    let mut buffer: ReplayBuffer<Experience> = ReplayBuffer::new(config.replay_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0bad_cafe);
    let mut metrics = Vec::new();
    let mut state = env.reset_with(&mut rng);
    let (mut updates, mut corrections) = (0usize, 0usize);
    let absorbing = config.absorbing_terminal && method.mode() != Mode::External;

    let mut pos_batch: Vec<Observation> = Vec::with_capacity(config.positive_batch);
    let mut obs_batch: Vec<Observation> = Vec::with_capacity(config.unlabeled_batch);
    let mut next_batch: Vec<Observation> = Vec::with_capacity(config.unlabeled_batch);
    let mut samples: Vec<QSample> = Vec::with_capacity(config.unlabeled_batch);

    let mut log = |step: usize,
                   policy: &QTable,
                   disc: Option<&DiscriminatorModel>,
                   buffer: &ReplayBuffer<Experience>,
                   rate: f64|
     -> Result<MetricsRow> {
        let learned = LearnedReward { disc, reward, gate: step >= config.gate_warmup };
        let eval = evaluator.evaluate(policy, if external.is_none() { Some(&learned) } else { None })?;
        let disc_stats = match disc {
            Some(d) => {
                let replay: Vec<Observation> = if buffer.is_empty() {
                    Vec::new()
                } else {
                    buffer.sample(config.replay_probe, &mut probe_rng)?.into_iter().map(|e| e.obs).collect()
                };
                DiscStats::measure(d, probes, &replay)
            }
            None => DiscStats::default(),
        };
        Ok(MetricsRow {
            step,
            seed,
            true_return: Some(eval.true_return),
            pseudo_return: eval.pseudo_return,
            success_rate: Some(eval.success_rate),
            disc: disc_stats,
            reward_mse_train: train_mse,
            correction_active_rate: rate,
        })
    };
    // The untrained starting point anchors every learning curve.
    if config.steps > 0 {
        metrics.push(log(0, &policy, disc.as_ref(), &buffer, 0.0)?);
    }

    for step in 0..config.steps {
        let eps = config.q.epsilon.value(step, config.steps);
        let action = policy.act(state.key(), eps, &mut rng);
        buffer.push(env.step_experience(&mut state, action)?);
        if state.done {
            state = env.reset_with(&mut rng);
        }

        if buffer.len() >= config.learning_starts.max(1) && (step + 1) % config.train_every == 0 {
            let mut batch: Vec<Experience> =
                buffer.sample(config.unlabeled_batch, &mut rng)?.into_iter().copied().collect();
            if let Some(d) = disc.as_mut() {
                for k in 0..config.update_ratio {
                    if k > 0 {
                        batch = buffer.sample(config.unlabeled_batch, &mut rng)?.into_iter().copied().collect();
                    }
                    pos_batch.clear();
                    pos_batch.extend((0..config.positive_batch).map(|_| positives[rng.random_range(0..positives.len())]));
                    obs_batch.clear();
                    obs_batch.extend(batch.iter().map(|e| e.obs));
                    let u = d.update(&pos_batch, &obs_batch)?;
                    updates += 1;
                    if u.branch == Branch::Correction {
                        corrections += 1;
                    }
                }
            }
            next_batch.clear();
            next_batch.extend(batch.iter().map(|e| e.next_obs));
            let rewards: Vec<f64> = match external {
                Some(f) => batch.iter().map(f).collect(),
                None => LearnedReward { disc: disc.as_ref(), reward, gate: step >= config.gate_warmup }
                    .predict_batch(&next_batch),
            };
            samples.clear();
            for (e, r) in batch.iter().zip(rewards) {
                let terminal = absorbing && e.done && e.next_obs[TIME_CHANNEL] < 1.0;
                samples.push(QSample {
                    state: e.state,
                    action: e.action,
                    reward: if terminal { r / (1.0 - gamma) } else { r },
                    next_state: e.next_state,
                    // Horizon cut-offs bootstrap: the table cannot see time.
                    done: if absorbing { terminal } else { e.done },
                });
            }
            policy.update(&samples)?;
        }

        if (step + 1) % config.eval_interval == 0 || step + 1 == config.steps {
            let rate = if updates == 0 { 0.0 } else { corrections as f64 / updates as f64 };
            metrics.push(log(step + 1, &policy, disc.as_ref(), &buffer, rate)?);
            updates = 0;
            corrections = 0;
        }
    }
    Ok(RunOutput { policy, discriminator: disc, metrics })
}

/// Trains `disc` on fixed positive and unlabeled pools, reporting the fraction
/// of updates that took the correction branch.
pub fn fit_discriminator(
    disc: &mut DiscriminatorModel,
    positives: &[Observation],
    contrast: &[Observation],
    steps: usize,
    batch: (usize, usize),
    seed: u64,
) -> Result<f64> {
    if positives.is_empty() || contrast.is_empty() {
        return Err(Error::usage("discriminator pools must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrections = 0usize;
    for _ in 0..steps {
        let p: Vec<Observation> = (0..batch.0).map(|_| positives[rng.random_range(0..positives.len())]).collect();
        let c: Vec<Observation> = (0..batch.1).map(|_| contrast[rng.random_range(0..contrast.len())]).collect();
        if disc.update(&p, &c)?.branch == Branch::Correction {
            corrections += 1;
        }
    }
    Ok(if steps == 0 { 0.0 } else { corrections as f64 / steps as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::Layer;
    use approx::assert_relative_eq;

    /// Single affine layer reading only the x coordinate: score = w·x + b.
    fn affine_disc(w: f64, b: f64, objective: Objective) -> DiscriminatorModel {
        let mut weights = vec![0.0; OBS_DIM];
        weights[0] = w;
        let net = Mlp::from_layers(vec![Layer::from_parts(OBS_DIM, 1, weights, vec![b]).unwrap()]).unwrap();
        DiscriminatorModel::from_net(net, DiscriminatorConfig::new(objective, 0.5, 0.0), 0).unwrap()
    }

    struct Constant(f64);
    impl RewardPredictor for Constant {
        fn predict(&self, _: &Observation) -> f64 {
            self.0
        }
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    const S: Observation = [0.0; OBS_DIM];

    #[test]
    fn gail_reward_closed_forms() {
        assert_relative_eq!(gail_reward(&affine_disc(0.0, 0.0, Objective::Pn), &S), 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(gail_reward(&affine_disc(0.0, logit(0.9), Objective::Pn), &S), 10f64.ln(), epsilon = 1e-12);
        assert!(gail_reward(&affine_disc(0.0, -60.0, Objective::Pn), &S) < 1e-25);
    }

    #[test]
    fn gate_boundaries() {
        let r = Constant(0.8);
        assert_relative_eq!(gated_reward(&affine_disc(0.0, logit(0.6), Objective::NnPu), &r, &S), 0.8);
        assert_eq!(gated_reward(&affine_disc(0.0, logit(0.4), Objective::NnPu), &r, &S), 0.0);
        assert_eq!(gated_reward(&affine_disc(0.0, 0.0, Objective::NnPu), &r, &S), 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("GAILish".parse::<Method>().is_err());
    }

    #[test]
    fn pn_ignores_beta() {
        let cfg = DiscriminatorConfig { beta: 3.0, ..DiscriminatorConfig::new(Objective::Pn, 0.5, 0.0) };
        let d = DiscriminatorModel::new(cfg, 1).unwrap();
        assert_eq!(d.beta(), 0.0);
    }

    #[test]
    fn reward_clamp_and_ensemble_min() {
        let neg = Mlp::from_layers(vec![Layer::from_parts(OBS_DIM, 1, vec![0.0; OBS_DIM], vec![-0.3]).unwrap()]).unwrap();
        let pos = Mlp::from_layers(vec![Layer::from_parts(OBS_DIM, 1, vec![0.0; OBS_DIM], vec![0.7]).unwrap()]).unwrap();
        let a = RewardModel::from_net(neg, REWARD_LR).unwrap();
        let b = RewardModel::from_net(pos, REWARD_LR).unwrap();
        assert_eq!(a.predict(&S), 0.0);
        assert_eq!(a.raw(&S), -0.3);
        let e = EnsembleReward::new(vec![a.clone(), b]).unwrap();
        assert_eq!(e.predict(&S), 0.0);
        assert!(EnsembleReward::new(vec![a]).is_err());
    }

    #[test]
    fn empty_batches_are_usage_errors() {
        let mut d = DiscriminatorModel::new(DiscriminatorConfig::new(Objective::NnPu, 0.5, 0.0), 0).unwrap();
        assert!(matches!(d.update(&[], &[S]), Err(Error::Usage(_))));
        assert!(matches!(d.update(&[S], &[]), Err(Error::Usage(_))));
        let mut r = RewardModel::with_default_lr(0).unwrap();
        assert!(matches!(train_reward_supervised(&mut r, &[], 10, 4, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let env = GridWorld::new(crate::envs::GridConfig::reach()).unwrap();
        struct Never;
        impl Evaluator for Never {
            fn evaluate(&mut self, _: &QTable, _: Option<&dyn RewardPredictor>) -> Result<Evaluation> {
                unreachable!()
            }
        }
        let demos = [S];
        let r = run_method(
            Method::NnPurl,
            &PurlConfig::default(),
            &env,
            RewardSource::Imitation { demos: &demos },
            &ProbeSets::default(),
            &mut Never,
            0,
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let zero = PurlConfig { steps: 0, ..PurlConfig::default() };
        let out = run_purl(Method::NnPuGail, &zero, &env, RewardSource::Imitation { demos: &demos }, &ProbeSets::default(), &mut Never, 0)
            .unwrap();
        assert!(out.metrics.is_empty());
    }
}
