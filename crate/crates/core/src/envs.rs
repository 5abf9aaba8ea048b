//! Deterministic gridworlds with a hidden true reward.
//!
//! Two tasks share one grid: `Reach` (walk to the goal) and `Carry` (grab the
//! object on its cell, then deliver it to the goal). Observations are five
//! features `[x, y, carried, t, spurious]`, the last being a constant artifact
//! channel whose value can differ between the environment that produced the
//! demonstrations and the one the policy learns in.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OBS_DIM: usize = 5;
pub type Observation = [f64; OBS_DIM];
/// Index of the normalized time step in an [`Observation`].
pub const TIME_CHANNEL: usize = 3;
/// Index of the spurious channel in an [`Observation`].
pub const SPURIOUS_CHANNEL: usize = 4;

/// Per-step true reward for every non-terminal step.
pub const STEP_REWARD: f64 = -0.01;
/// True reward on task completion.
pub const SUCCESS_REWARD: f64 = 1.0;
/// Added to true rewards when annotating, so every annotation is `>= 0`.
pub const ANNOTATION_SHIFT: f64 = 0.01;
/// Spurious channel in the environment that generates demonstrations and annotations.
pub const SPURIOUS_DEMO: f64 = 0.0;
/// Spurious channel in the policy-learning environment when a domain gap is applied.
pub const SPURIOUS_GAP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Walk to the goal cell.
    Reach,
    /// Grab the object, then walk to the goal while carrying it.
    Carry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
    Grab,
}

impl Action {
    pub const ALL: [Action; 6] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay, Action::Grab];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub task: Task,
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub goal: Cell,
    /// Only used by [`Task::Carry`].
    pub object: Cell,
    /// Value of the artifact channel in every observation.
    pub spurious: f64,
}

impl GridConfig {
    /// 7x7 carry task, horizon 40.
    pub fn carry() -> Self {
        Self {
            task: Task::Carry,
            width: 7,
            height: 7,
            horizon: 40,
            goal: Cell::new(6, 6),
            object: Cell::new(3, 3),
            spurious: SPURIOUS_DEMO,
        }
    }

    /// 7x7 reach task, horizon 40.
    pub fn reach() -> Self {
        Self { task: Task::Reach, ..Self::carry() }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Reach => Self::reach(),
            Task::Carry => Self::carry(),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.num_cells() < 2 {
            return Err(Error::config("grid needs at least two cells so the agent never starts on the goal"));
        }
        if !self.in_bounds(self.goal) {
            return Err(Error::config("goal lies outside the grid"));
        }
        if self.task == Task::Carry {
            if !self.in_bounds(self.object) {
                return Err(Error::config("object lies outside the grid"));
            }
            if self.object == self.goal {
                return Err(Error::config("object and goal must be different cells"));
            }
        }
        if !self.spurious.is_finite() {
            return Err(Error::config("spurious channel value must be finite"));
        }
        let longest = (0..self.num_cells())
            .map(|i| Cell::new(i % self.width, i / self.width))
            .filter(|&c| c != self.goal)
            .filter_map(|c| shortest_path_len(self, StateKey { pos: c, carried: false }))
            .max()
            .unwrap_or(0);
        if self.horizon == 0 || self.horizon < longest {
            return Err(Error::config(format!(
                "horizon {} is shorter than the longest shortest path {longest}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// The discrete part of the state the tabular policy indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub pos: Cell,
    pub carried: bool,
}

impl StateKey {
    pub fn index(self, width: usize, height: usize) -> usize {
        (self.pos.y * width + self.pos.x) + if self.carried { width * height } else { 0 }
    }

    pub fn count(width: usize, height: usize) -> usize {
        2 * width * height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub pos: Cell,
    pub carried: bool,
    pub t: usize,
    pub done: bool,
}

impl GridState {
    pub fn key(&self) -> StateKey {
        StateKey { pos: self.pos, carried: self.carried }
    }
}

/// A step as the reward learners see it: no true reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub obs: Observation,
    pub action: Action,
    pub next_obs: Observation,
    pub done: bool,
    pub state: StateKey,
    pub next_state: StateKey,
}

/// Environment reward that only evaluation code and annotation may read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueReward(f64);

impl TrueReward {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub experience: Experience,
    pub true_reward: TrueReward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub success: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn experiences(&self) -> impl Iterator<Item = &Experience> {
        self.transitions.iter().map(|t| &t.experience)
    }

    /// Visited states `s_t` and the final `s_T`.
    pub fn observations(&self) -> Vec<Observation> {
        let mut out: Vec<Observation> = self.experiences().map(|e| e.obs).collect();
        if let Some(last) = self.transitions.last() {
            out.push(last.experience.next_obs);
        }
        out
    }

    /// Undiscounted sum of true rewards.
    pub fn true_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.true_reward.value()).sum()
    }

    /// Success as implied by the transitions alone.
    pub fn recompute_success(&self, config: &GridConfig) -> bool {
        match self.transitions.last() {
            Some(t) => t.experience.done && is_success_key(config, t.experience.next_state),
            None => false,
        }
    }
}

fn is_success_key(config: &GridConfig, key: StateKey) -> bool {
    key.pos == config.goal && (config.task == Task::Reach || key.carried)
}

fn apply_move(config: &GridConfig, key: StateKey, action: Action) -> StateKey {
    let StateKey { pos, mut carried } = key;
    let next = match action {
        Action::Up => Cell::new(pos.x, pos.y.saturating_sub(1)),
        Action::Down => Cell::new(pos.x, (pos.y + 1).min(config.height - 1)),
        Action::Left => Cell::new(pos.x.saturating_sub(1), pos.y),
        Action::Right => Cell::new((pos.x + 1).min(config.width - 1), pos.y),
        Action::Stay => pos,
        Action::Grab => {
            if config.task == Task::Carry && pos == config.object {
                carried = true;
            }
            pos
        }
    };
    StateKey { pos: next, carried }
}

/// A validated gridworld.
#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
}

impl GridWorld {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Agent on a uniformly drawn non-goal cell, empty-handed, `t = 0`.
    pub fn reset_with<R: Rng + ?Sized>(&self, rng: &mut R) -> GridState {
        let n = self.config.num_cells();
        let goal = self.config.goal.y * self.config.width + self.config.goal.x;
        let mut i = rng.random_range(0..n - 1);
        if i >= goal {
            i += 1;
        }
        GridState {
            pos: Cell::new(i % self.config.width, i / self.config.width),
            carried: false,
            t: 0,
            done: false,
        }
    }

    pub fn reset(&self, seed: u64) -> GridState {
        self.reset_with(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn observe(&self, state: &GridState) -> Observation {
        let c = &self.config;
        [
            state.pos.x as f64 / (c.width.max(2) - 1) as f64,
            state.pos.y as f64 / (c.height.max(2) - 1) as f64,
            if state.carried { 1.0 } else { 0.0 },
            state.t as f64 / c.horizon as f64,
            c.spurious,
        ]
    }

    pub fn is_success(&self, state: &GridState) -> bool {
        is_success_key(&self.config, state.key())
    }

    pub fn step(&self, state: &mut GridState, action: Action) -> Result<Transition> {
        if state.done || state.t >= self.config.horizon {
            return Err(Error::usage("step called on a finished episode"));
        }
        let obs = self.observe(state);
        let from = state.key();
        let to = apply_move(&self.config, from, action);
        state.pos = to.pos;
        state.carried = to.carried;
        state.t += 1;
        let success = self.is_success(state);
        state.done = success || state.t >= self.config.horizon;
        let reward = if success { SUCCESS_REWARD } else { STEP_REWARD };
        Ok(Transition {
            experience: Experience {
                obs,
                action,
                next_obs: self.observe(state),
                done: state.done,
                state: from,
                next_state: to,
            },
            true_reward: TrueReward(reward),
        })
    }

    /// [`GridWorld::step`] with the hidden reward dropped.
    pub fn step_experience(&self, state: &mut GridState, action: Action) -> Result<Experience> {
        Ok(self.step(state, action)?.experience)
    }

    /// Hidden reward of a recorded step. Only evaluation code and the
    /// true-reward baseline may call this.
    pub fn true_reward(&self, e: &Experience) -> TrueReward {
        if e.done && is_success_key(&self.config, e.next_state) {
            TrueReward(SUCCESS_REWARD)
        } else {
            TrueReward(STEP_REWARD)
        }
    }

    /// Runs one episode from a seeded start under `policy`.
    pub fn rollout<R, P>(&self, rng: &mut R, mut policy: P) -> Trajectory
    where
        R: Rng + ?Sized,
        P: FnMut(&GridState, &mut R) -> Action,
    {
        let mut state = self.reset_with(rng);
        let mut transitions = Vec::with_capacity(self.config.horizon);
        while !state.done {
            let a = policy(&state, rng);
            transitions.push(self.step(&mut state, a).expect("episode not finished"));
        }
        let success = self.is_success(&state);
        Trajectory { transitions, success }
    }

    /// Shortest-path action: fetch the object first when the task needs it.
    pub fn expert_action(&self, state: &GridState) -> Action {
        let c = &self.config;
        let target = if c.task == Task::Carry && !state.carried {
            if state.pos == c.object {
                return Action::Grab;
            }
            c.object
        } else {
            c.goal
        };
        let p = state.pos;
        if p.x < target.x {
            Action::Right
        } else if p.x > target.x {
            Action::Left
        } else if p.y < target.y {
            Action::Down
        } else if p.y > target.y {
            Action::Up
        } else {
            Action::Stay
        }
    }
}

/// Length of the shortest action sequence that completes the task from `start`.
pub fn shortest_path_len(config: &GridConfig, start: StateKey) -> Option<usize> {
    let idx = |k: StateKey| k.index(config.width, config.height);
    let mut dist = vec![usize::MAX; StateKey::count(config.width, config.height)];
    let mut queue = VecDeque::new();
    dist[idx(start)] = 0;
    queue.push_back(start);
    while let Some(k) = queue.pop_front() {
        if is_success_key(config, k) && dist[idx(k)] > 0 {
            return Some(dist[idx(k)]);
        }
        for a in Action::ALL {
            let n = apply_move(config, k, a);
            if dist[idx(n)] == usize::MAX {
                dist[idx(n)] = dist[idx(k)] + 1;
                queue.push_back(n);
            }
        }
    }
    None
}

const MAX_REROLLS_PER_TRAJECTORY: usize = 10_000;

/// `n` successful trajectories of the shortest-path expert that takes a uniformly
/// random action with probability `noise`. Failed noisy rollouts are re-rolled.
pub fn scripted_expert(config: &GridConfig, seed: u64, n: usize, noise: f64) -> Result<Vec<Trajectory>> {
    let world = GridWorld::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > MAX_REROLLS_PER_TRAJECTORY * n.max(1) {
            return Err(Error::config(format!("noise {noise} prevents the expert from ever succeeding")));
        }
        let traj = world.rollout(&mut rng, |s, r| noisy_expert_action(&world, s, r, noise));
        if traj.success {
            out.push(traj);
        }
    }
    Ok(out)
}

fn noisy_expert_action<R: Rng + ?Sized>(world: &GridWorld, state: &GridState, rng: &mut R, noise: f64) -> Action {
    if noise > 0.0 && rng.random::<f64>() < noise {
        Action::ALL[rng.random_range(0..Action::COUNT)]
    } else {
        world.expert_action(state)
    }
}

/// `n` uniformly random-policy rollouts that did not complete the task.
pub fn failure_corpus(config: &GridConfig, seed: u64, n: usize) -> Result<Vec<Trajectory>> {
    let world = GridWorld::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > MAX_REROLLS_PER_TRAJECTORY * n.max(1) {
            return Err(Error::config("random policy always succeeds; no failures to collect"));
        }
        let traj = world.rollout(&mut rng, |_, r| Action::ALL[r.random_range(0..Action::COUNT)]);
        if !traj.success {
            out.push(traj);
        }
    }
    Ok(out)
}

/// Mixture of competence levels used for reward annotation: a fraction
/// `expert_fraction` of scripted experts (noise `expert_noise`), the rest
/// partially competent rollouts whose noise is drawn uniformly from `[0.5, 1]`.
pub fn annotation_corpus(
    config: &GridConfig,
    seed: u64,
    n: usize,
    expert_fraction: f64,
    expert_noise: f64,
) -> Result<Vec<Trajectory>> {
    if !(0.0..=1.0).contains(&expert_fraction) {
        return Err(Error::config("expert fraction must lie in [0, 1]"));
    }
    let n_expert = (expert_fraction * n as f64).round() as usize;
    let mut out = scripted_expert(config, seed, n_expert, expert_noise)?;
    let world = GridWorld::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a11e);
    for _ in n_expert..n {
        let noise = rng.random_range(0.5..=1.0);
        out.push(world.rollout(&mut rng, |s, r| noisy_expert_action(&world, s, r, noise)));
    }
    Ok(out)
}

/// Demonstration- and policy-environment configs for a (possibly absent) domain gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapPair {
    pub demo: GridConfig,
    pub policy: GridConfig,
}

/// With `gap`, the spurious channel reads [`SPURIOUS_DEMO`] where demonstrations
/// and annotations are produced and [`SPURIOUS_GAP`] where the policy learns.
/// Dynamics and true reward are untouched.
pub fn domain_gap_wrap(config: &GridConfig, gap: bool) -> GapPair {
    let demo = GridConfig { spurious: SPURIOUS_DEMO, ..config.clone() };
    let policy = GridConfig { spurious: if gap { SPURIOUS_GAP } else { SPURIOUS_DEMO }, ..config.clone() };
    GapPair { demo, policy }
}

/// Reward supervision `(s_{t+1}, r_t + 0.01)` for every transition.
pub fn annotate(trajectories: &[Trajectory]) -> Vec<(Observation, f64)> {
    trajectories
        .iter()
        .flat_map(|t| t.transitions.iter())
        .map(|t| (t.experience.next_obs, t.true_reward.value() + ANNOTATION_SHIFT))
        .collect()
}

/// Discounted optimal values and greedy actions over `(position, carried)`,
/// ignoring time and the spurious channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub policy: Vec<Action>,
}

pub fn value_iteration(config: &GridConfig, gamma: f64) -> ValueTable {
    let (w, h) = (config.width, config.height);
    let n = StateKey::count(w, h);
    let keys: Vec<StateKey> = (0..n)
        .map(|i| {
            let cell = i % (w * h);
            StateKey { pos: Cell::new(cell % w, cell / w), carried: i >= w * h }
        })
        .collect();
    let q = |values: &[f64], k: StateKey, a: Action| {
        let next = apply_move(config, k, a);
        if is_success_key(config, next) {
            SUCCESS_REWARD
        } else {
            STEP_REWARD + gamma * values[next.index(w, h)]
        }
    };
    let mut values = vec![0.0; n];
    for _ in 0..10_000 {
        let mut delta: f64 = 0.0;
        for &k in &keys {
            let i = k.index(w, h);
            let best = Action::ALL.iter().map(|&a| q(&values, k, a)).fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[i]).abs());
            values[i] = best;
        }
        if delta < 1e-12 {
            break;
        }
    }
    let policy = keys
        .iter()
        .map(|&k| {
            let mut best = Action::Up;
            for a in Action::ALL {
                if q(&values, k, a) > q(&values, k, best) + 1e-12 {
                    best = a;
                }
            }
            best
        })
        .collect();
    ValueTable { values, policy }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub obs: Vec<f64>,
    pub act: u8,
    pub next_obs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_r: Option<f64>,
    pub done: bool,
}

/// One line of a trajectory corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub success: bool,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            success: t.success,
            steps: t
                .transitions
                .iter()
                .map(|tr| StepRecord {
                    obs: tr.experience.obs.to_vec(),
                    act: tr.experience.action.index() as u8,
                    next_obs: tr.experience.next_obs.to_vec(),
                    true_r: Some(tr.true_reward.value()),
                    done: tr.experience.done,
                })
                .collect(),
        }
    }

    /// Visited states, as fed to a discriminator.
    pub fn observations(&self) -> Result<Vec<Observation>> {
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        let to_obs = |v: &[f64]| -> Result<Observation> {
            v.try_into().map_err(|_| Error::Parse(format!("observation has {} entries, expected {OBS_DIM}", v.len())))
        };
        for s in &self.steps {
            out.push(to_obs(&s.obs)?);
        }
        if let Some(last) = self.steps.last() {
            out.push(to_obs(&last.next_obs)?);
        }
        Ok(out)
    }
}

/// Extends a successful demonstration's states with copies of its final
/// state, time advancing to `horizon`: the episode sits in an absorbing goal
/// state for the rest of its budget.
pub fn pad_absorbing(observations: &mut Vec<Observation>, horizon: usize) {
    let Some(&last) = observations.last() else { return };
    let done_at = (last[TIME_CHANNEL] * horizon as f64).round() as usize;
    for t in done_at + 1..=horizon {
        let mut s = last;
        s[TIME_CHANNEL] = t as f64 / horizon as f64;
        observations.push(s);
    }
}

/// Writes one JSON object per trajectory, true rewards included.
pub fn write_corpus<W: Write>(trajectories: &[Trajectory], mut writer: W) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut writer, &TrajectoryRecord::from_trajectory(t))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a corpus as demonstration / unlabeled data: every `true_r` is dropped.
pub fn read_demonstrations<R: BufRead>(reader: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: TrajectoryRecord = serde_json::from_str(&line)?;
        for s in &mut rec.steps {
            s.true_r = None;
        }
        out.push(rec);
    }
    Ok(out)
}
