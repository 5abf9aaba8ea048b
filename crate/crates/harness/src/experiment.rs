//! One method end to end: data generation, reward-model pre-training, the
//! policy-learning loop (or a frozen-buffer discriminator probe), evaluation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use purl_core::agents::QTable;
use purl_core::envs::{
    annotate, annotation_corpus, domain_gap_wrap, failure_corpus, pad_absorbing, scripted_expert, GapPair, GridConfig, GridState,
    GridWorld, Observation, Trajectory,
};
use purl_core::rewardlearn::{
    fit_discriminator, run_method, DiscStats, DiscriminatorModel, EnsembleReward, Evaluation, Evaluator, Method,
    MetricsRow, Mode, ProbeSets, RewardModel, RewardPredictor, RewardSource,
};
use purl_core::{Error, Mlp, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::metrics::{aggregate, write_aggregate_csv, write_metrics_csv, write_success_csv, AggregateRow};

/// Independent sub-stream seed for one data source of one run.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream.wrapping_mul(0xbf58_476d_1ce4_e5b9)) ^ stream
}

/// Greedy rollouts from a fixed set of start states in the policy environment.
pub struct GridEvaluator {
    world: GridWorld,
    starts: Vec<GridState>,
}

impl GridEvaluator {
    pub fn new(world: GridWorld, episodes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts = (0..episodes).map(|_| world.reset_with(&mut rng)).collect();
        Self { world, starts }
    }
}

impl Evaluator for GridEvaluator {
    fn evaluate(&mut self, policy: &QTable, learned: Option<&dyn RewardPredictor>) -> Result<Evaluation> {
        let (mut ret, mut pseudo, mut wins) = (0.0, 0.0, 0usize);
        for start in &self.starts {
            let mut s = *start;
            let mut visited = Vec::with_capacity(self.world.config().horizon);
            while !s.done {
                let a = policy.greedy(s.key());
                let t = self.world.step(&mut s, a)?;
                ret += t.true_reward.value();
                visited.push(t.experience.next_obs);
            }
            if let Some(r) = learned {
                pseudo += r.predict_batch(&visited).iter().sum::<f64>();
            }
            if self.world.is_success(&s) {
                wins += 1;
            }
        }
        let n = self.starts.len() as f64;
        Ok(Evaluation {
            true_return: ret / n,
            pseudo_return: learned.map(|_| pseudo / n),
            success_rate: wins as f64 / n,
        })
    }
}

fn states(trajectories: &[Trajectory]) -> Vec<Observation> {
    trajectories.iter().flat_map(|t| t.observations()).collect()
}

/// Visited states `s_t` of `trajectories`, cut off after `n`.
fn buffer_states(trajectories: &[Trajectory], n: usize) -> Vec<Observation> {
    trajectories.iter().flat_map(|t| t.experiences().map(|e| e.obs)).take(n).collect()
}

/// Supervised reward model(s) trained on an annotated corpus.
pub struct TrainedReward {
    pub predictor: Box<dyn RewardPredictor>,
    pub nets: Vec<Mlp>,
    pub support: Vec<Observation>,
    pub train_mse: f64,
}

pub fn train_reward(config: &ExperimentConfig, demo_env: &GridConfig, seed: u64) -> Result<TrainedReward> {
    let corpus = annotation_corpus(
        demo_env,
        sub_seed(seed, 4),
        config.annotation_count,
        config.expert_fraction,
        config.expert_noise,
    )?;
    let pairs = annotate(&corpus);
    let mut support: Vec<Observation> = pairs.iter().map(|(s, _)| *s).collect();
    if config.purl.absorbing_terminal {
        for t in corpus.iter().filter(|t| t.success) {
            let mut goal = vec![*t.observations().last().expect("successful trajectories are non-empty")];
            pad_absorbing(&mut goal, demo_env.horizon);
            support.extend_from_slice(&goal[1..]);
        }
    }
    let (steps, batch) = (config.reward_steps, config.reward_batch);
    if config.method == Method::PrlEnsemble {
        let members = (0..config.ensemble_size)
            .map(|i| {
                RewardModel::new(config.reward_lr, sub_seed(seed, 100 + i as u64))
                    .map(|m| m.with_time_feature(config.purl.time_feature))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ens = EnsembleReward::new(members)?;
        let train_mse = ens.train(&pairs, steps, batch, sub_seed(seed, 5))?;
        let nets = ens.members().iter().map(|m| m.net().clone()).collect();
        Ok(TrainedReward { predictor: Box::new(ens), nets, support, train_mse })
    } else {
        let mut model = RewardModel::new(config.reward_lr, sub_seed(seed, 100))?.with_time_feature(config.purl.time_feature);
        let train_mse = purl_core::rewardlearn::train_reward_supervised(&mut model, &pairs, steps, batch, sub_seed(seed, 5))?;
        let nets = vec![model.net().clone()];
        Ok(TrainedReward { predictor: Box::new(model), nets, support, train_mse })
    }
}

/// Result of one seed.
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub discriminator: Option<Mlp>,
    pub reward_nets: Vec<Mlp>,
}

fn probe_sets(config: &ExperimentConfig, gap: &GapPair, train: &[Observation], seed: u64) -> Result<ProbeSets> {
    Ok(ProbeSets {
        train_expert: train.to_vec(),
        holdout_expert: states(&scripted_expert(&gap.policy, sub_seed(seed, 2), config.holdout_count, config.expert_noise)?),
        holdout_failure: states(&failure_corpus(&gap.policy, sub_seed(seed, 3), config.holdout_count)?),
    })
}

/// Frozen buffer of `size` policy-environment transitions, a fraction
/// `fraction` of them from successful episodes.
pub fn mixed_buffer(config: &ExperimentConfig, policy_env: &GridConfig, fraction: f64, seed: u64) -> Result<Vec<Observation>> {
    let size = config.buffer_size;
    let n_success = (fraction * size as f64).round() as usize;
    let n_fail = size - n_success;
    // each episode contributes at least one transition, so this many always suffice
    let mut buffer = buffer_states(&scripted_expert(policy_env, sub_seed(seed, 6), n_success, config.expert_noise)?, n_success);
    let fails = failure_corpus(policy_env, sub_seed(seed, 7), n_fail.div_ceil(policy_env.horizon))?;
    buffer.extend(buffer_states(&fails, n_fail));
    if buffer.len() != size {
        return Err(Error::config("could not fill the probe buffer"));
    }
    Ok(buffer)
}

fn probe_run(
    config: &ExperimentConfig,
    gap: &GapPair,
    positives: &[Observation],
    probes: &ProbeSets,
    fraction: f64,
    seed: u64,
) -> Result<SeedRun> {
    let buffer = mixed_buffer(config, &gap.policy, fraction, seed)?;
    let dc = config.purl.discriminator(config.method).expect("validated: method has a discriminator");
    let mut disc = DiscriminatorModel::new(dc, sub_seed(seed, 8))?;
    let p = &config.purl;
    let mut rows = Vec::new();
    let mut done = 0;
    while done < p.steps {
        let chunk = p.eval_interval.min(p.steps - done);
        let rate = fit_discriminator(
            &mut disc,
            positives,
            &buffer,
            chunk,
            (p.positive_batch, p.unlabeled_batch),
            // one stream per chunk, clear of the fixed streams above
            sub_seed(seed, (1 << 32) + done as u64),
        )?;
        done += chunk;
        rows.push(MetricsRow {
            step: done,
            seed,
            true_return: None,
            pseudo_return: None,
            success_rate: None,
            disc: DiscStats::measure(&disc, probes, &buffer),
            reward_mse_train: None,
            correction_active_rate: rate,
        });
    }
    Ok(SeedRun { seed, rows, discriminator: Some(disc.net().clone()), reward_nets: Vec::new() })
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    config.validate()?;
    let gap = domain_gap_wrap(&GridConfig::for_task(config.task), config.domain_gap);
    let policy_world = GridWorld::new(gap.policy.clone())?;
    GridWorld::new(gap.demo.clone())?;
    let mut evaluator = GridEvaluator::new(policy_world.clone(), config.purl.eval_episodes, sub_seed(seed, 10));

    match config.method.mode() {
        Mode::Imitation => {
            let trajectories = scripted_expert(&gap.demo, sub_seed(seed, 1), config.demo_count, config.expert_noise)?;
            let demos = if config.purl.absorbing_terminal {
                trajectories
                    .iter()
                    .flat_map(|t| {
                        let mut o = t.observations();
                        pad_absorbing(&mut o, gap.demo.horizon);
                        o
                    })
                    .collect()
            } else {
                states(&trajectories)
            };
            let probes = probe_sets(config, &gap, &states(&trajectories), seed)?;
            if let Some(f) = config.buffer_success_fraction {
                // The frozen buffer holds no absorbing padding, so neither may the positives.
                return probe_run(config, &gap, &probes.train_expert, &probes, f, seed);
            }
            let out = run_method(
                config.method,
                &config.purl,
                &policy_world,
                RewardSource::Imitation { demos: &demos },
                &probes,
                &mut evaluator,
                seed,
            )?;
            Ok(SeedRun {
                seed,
                rows: out.metrics,
                discriminator: out.discriminator.map(|d| d.net().clone()),
                reward_nets: Vec::new(),
            })
        }
        Mode::SemiSupervised => {
            if let Some(f) = config.buffer_success_fraction {
                let corpus = annotation_corpus(
                    &gap.demo,
                    sub_seed(seed, 4),
                    config.annotation_count,
                    config.expert_fraction,
                    config.expert_noise,
                )?;
                let support: Vec<Observation> = annotate(&corpus).into_iter().map(|(s, _)| s).collect();
                let probes = probe_sets(config, &gap, &support, seed)?;
                return probe_run(config, &gap, &support, &probes, f, seed);
            }
            let trained = train_reward(config, &gap.demo, seed)?;
            let probes = probe_sets(config, &gap, &trained.support, seed)?;
            let out = run_method(
                config.method,
                &config.purl,
                &policy_world,
                RewardSource::SemiSupervised {
                    reward: trained.predictor.as_ref(),
                    support: &trained.support,
                    train_mse: trained.train_mse,
                },
                &probes,
                &mut evaluator,
                seed,
            )?;
            Ok(SeedRun {
                seed,
                rows: out.metrics,
                discriminator: out.discriminator.map(|d| d.net().clone()),
                reward_nets: trained.nets,
            })
        }
        Mode::External => {
            let world = policy_world.clone();
            let reward = move |e: &purl_core::envs::Experience| world.true_reward(e).value();
            let out = run_method(
                config.method,
                &config.purl,
                &policy_world,
                RewardSource::External(&reward),
                &ProbeSets::default(),
                &mut evaluator,
                seed,
            )?;
            Ok(SeedRun { seed, rows: out.metrics, discriminator: None, reward_nets: Vec::new() })
        }
    }
}

pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn final_row(&self) -> Option<&AggregateRow> {
        self.aggregate.last()
    }

    /// Final-point value of `column` per seed.
    pub fn final_per_seed(&self, column: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|r| r.rows.last().and_then(|row| crate::metrics::column(row, column)))
            .collect()
    }
}

fn write_snapshot(net: &Mlp, config: &ExperimentConfig, role: &str, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# method={} role={role} config_hash={}", config.method, config.hash())?;
    net.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs every seed. With `out`, writes `metrics_seed<k>.csv`, `success_seed<k>.csv`,
/// model snapshots, `aggregate.csv` and the resolved `config.json`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        runs.push(run_seed(config, seed)?);
    }
    let rows: Vec<Vec<MetricsRow>> = runs.iter().map(|r| r.rows.clone()).collect();
    let aggregate = aggregate(&rows)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)? + "\n")?;
        for run in &runs {
            write_metrics_csv(&run.rows, &dir.join(format!("metrics_seed{}.csv", run.seed)))?;
            write_success_csv(&run.rows, &dir.join(format!("success_seed{}.csv", run.seed)))?;
            if let Some(d) = &run.discriminator {
                write_snapshot(d, config, "discriminator", &dir.join(format!("discriminator_seed{}.csv", run.seed)))?;
            }
            for (i, net) in run.reward_nets.iter().enumerate() {
                write_snapshot(net, config, "reward", &dir.join(format!("reward{i}_seed{}.csv", run.seed)))?;
            }
        }
        write_aggregate_csv(&aggregate, &dir.join("aggregate.csv"))?;
    }
    Ok(ExperimentResult { runs, aggregate })
}
