//! Replay buffer and tabular Q-learning over the discrete `(position, carried)` state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, StateKey};
use crate::error::{Error, Result};

pub const DEFAULT_CAPACITY: usize = 50_000;

/// Fixed-capacity FIFO ring. Sampling is uniform with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<T>,
    next: usize,
    inserted: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self { capacity, storage: Vec::with_capacity(capacity.min(1 << 16)), next: 0, inserted: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total number of pushes, including evicted items.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, item: T) {
        if self.storage.len() < self.capacity {
            self.storage.push(item);
        } else {
            self.storage[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::usage("cannot sample from an empty replay buffer"));
        }
        Ok((0..k).map(|_| rng.random_range(0..self.storage.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&T>> {
        Ok(self.sample_indices(k, rng)?.into_iter().map(|i| &self.storage[i]).collect())
    }

    pub fn sample_seeded(&self, k: usize, seed: u64) -> Result<Vec<&T>> {
        self.sample(k, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Linear ε decay from `start` to `end` over the first `fraction` of a step budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    #[serde(rename = "eps_start")]
    pub start: f64,
    #[serde(rename = "eps_end")]
    pub end: f64,
    #[serde(rename = "eps_decay_fraction")]
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, fraction: 0.3 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize, budget: usize) -> f64 {
        let horizon = self.fraction * budget as f64;
        if horizon <= 0.0 || step as f64 >= horizon {
            return self.end;
        }
        self.start + (self.end - self.start) * (step as f64 / horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QConfig {
    pub gamma: f64,
    pub alpha: f64,
    /// Initial value of every table entry.
    #[serde(skip)]
    pub init: f64,
    #[serde(flatten)]
    pub epsilon: EpsilonSchedule,
}

impl Default for QConfig {
    fn default() -> Self {
        Self { gamma: 0.99, alpha: 0.1, init: 0.0, epsilon: EpsilonSchedule::default() }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("discount {} must lie in (0, 1)", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("step size {} must be positive", self.alpha)));
        }
        if !self.init.is_finite() {
            return Err(Error::config("initial Q value must be finite"));
        }
        let e = &self.epsilon;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(e.start) || !unit(e.end) || e.end > e.start || !(e.fraction >= 0.0 && e.fraction.is_finite()) {
            return Err(Error::config("epsilon schedule must decay within [0, 1]"));
        }
        Ok(())
    }
}

/// One Q-learning sample `(s, a, r, s', done)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSample {
    pub state: StateKey,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateKey,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    height: usize,
    values: Vec<[f64; Action::COUNT]>,
    config: QConfig,
}

impl QTable {
    pub fn new(width: usize, height: usize, config: QConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { width, height, values: vec![[config.init; Action::COUNT]; StateKey::count(width, height)], config })
    }

    pub fn config(&self) -> &QConfig {
        &self.config
    }

    pub fn q(&self, key: StateKey) -> &[f64; Action::COUNT] {
        &self.values[key.index(self.width, self.height)]
    }

    /// Sequential one-step updates, `α` applied per sample. A non-finite reward
    /// rejects the whole batch before anything changes.
    pub fn update(&mut self, batch: &[QSample]) -> Result<()> {
        if let Some(bad) = batch.iter().find(|s| !s.reward.is_finite()) {
            return Err(Error::training("non-finite reward in Q update", "reward", bad.reward));
        }
        let QConfig { gamma, alpha, .. } = self.config;
        for s in batch {
            let bootstrap = if s.done {
                0.0
            } else {
                let next = &self.values[s.next_state.index(self.width, self.height)];
                next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let target = s.reward + gamma * bootstrap;
            let q = &mut self.values[s.state.index(self.width, self.height)][s.action.index()];
            *q += alpha * (target - *q);
        }
        Ok(())
    }

    /// Greedy action, ties to the lowest action index.
    pub fn greedy(&self, key: StateKey) -> Action {
        let q = self.q(key);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate().skip(1) {
            if v > q[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn act<R: Rng + ?Sized>(&self, key: StateKey, epsilon: f64, rng: &mut R) -> Action {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            Action::ALL[rng.random_range(0..Action::COUNT)]
        } else {
            self.greedy(key)
        }
    }
}

/// Same as [`QTable::update`], processing `batch` in a seeded random order.
pub fn q_update_permuted(table: &mut QTable, batch: &[QSample], seed: u64) -> Result<()> {
    use rand::seq::SliceRandom;
    let mut order: Vec<QSample> = batch.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    table.update(&order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Cell;

    fn key(x: usize, y: usize) -> StateKey {
        StateKey { pos: Cell::new(x, y), carried: false }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..4 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(b.inserted(), 4);
    }

    #[test]
    fn single_item_sampling() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(7u8);
        assert_eq!(b.sample_seeded(5, 0).unwrap(), vec![&7; 5]);
        let empty: ReplayBuffer<u8> = ReplayBuffer::new(1).unwrap();
        assert!(matches!(empty.sample_seeded(1, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn done_update_with_unit_step() {
        let cfg = QConfig { alpha: 1.0, ..QConfig::default() };
        let mut q = QTable::new(7, 7, cfg).unwrap();
        let s = QSample { state: key(0, 0), action: Action::Right, reward: 1.0, next_state: key(1, 0), done: true };
        q.update(&[s]).unwrap();
        assert_eq!(q.q(key(0, 0))[Action::Right.index()], 1.0);
    }

    #[test]
    fn zero_reward_fixed_point() {
        let mut q = QTable::new(3, 3, QConfig::default()).unwrap();
        let batch: Vec<QSample> = (0..50)
            .map(|i| QSample {
                state: key(i % 3, (i / 3) % 3),
                action: Action::ALL[i % 6],
                reward: 0.0,
                next_state: key((i + 1) % 3, 0),
                done: i % 7 == 0,
            })
            .collect();
        q.update(&batch).unwrap();
        assert!(q.values.iter().all(|row| row.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn non_finite_reward_rejected_untouched() {
        let mut q = QTable::new(3, 3, QConfig::default()).unwrap();
        let before = q.clone();
        let good = QSample { state: key(0, 0), action: Action::Up, reward: 1.0, next_state: key(0, 0), done: false };
        let bad = QSample { reward: f64::NAN, ..good };
        assert!(matches!(q.update(&[good, bad]), Err(Error::Training { .. })));
        assert_eq!(q, before);
    }

    #[test]
    fn greedy_and_tie_break() {
        let mut q = QTable::new(3, 3, QConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(q.act(key(1, 1), 0.0, &mut rng), Action::Up);
        q.values[key(1, 1).index(3, 3)][Action::Grab.index()] = 0.5;
        assert_eq!(q.act(key(1, 1), 0.0, &mut rng), Action::Grab);
    }

    #[test]
    fn epsilon_schedule_is_monotone() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0, 1000), 1.0);
        assert!((s.value(150, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(300, 1000), 0.05);
        assert_eq!(s.value(999, 1000), 0.05);
        let v: Vec<f64> = (0..1000).map(|t| s.value(t, 1000)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(QTable::new(3, 3, QConfig { gamma: 1.0, ..QConfig::default() }).is_err());
        assert!(QTable::new(3, 3, QConfig { alpha: 0.0, ..QConfig::default() }).is_err());
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }
}
