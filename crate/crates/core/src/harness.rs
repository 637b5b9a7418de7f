//! Training, evaluation and parameter sweeps.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a master seed and the
//! position of the work item (cell, run), so results do not depend on
//! scheduling or thread count.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::environment::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::learner::{Algorithm, LearnerConfig, QTable};

pub type SimRng = ChaCha8Rng;

/// Mixes a master seed with a path of indices (splitmix64 finalizer).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub learner: LearnerConfig,
    pub episodes: usize,
    pub max_iters_per_episode: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            learner: LearnerConfig::default(),
            episodes: 5000,
            max_iters_per_episode: 5000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<Environment> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.max_iters_per_episode == 0 {
            return Err(Error::Config(
                "max_iters_per_episode must be at least 1".into(),
            ));
        }
        self.learner.validate()?;
        self.env.build()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub length: usize,
    pub cumulative_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub table: QTable,
    pub log: Vec<EpisodeLog>,
}

/// Runs the episodic TD loop. The successor action for SARSA is the one
/// actually taken next; Q-Learning bootstraps from the masked max.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutput> {
    let env = cfg.validate()?;
    let mut table = QTable::for_env(&env)?;
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let learner = &cfg.learner;
    let mut log = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let epsilon = learner.epsilon_at(episode, cfg.episodes);
        let mut state = env.reset(&mut rng);
        let mut entry = EpisodeLog {
            episode,
            length: 0,
            cumulative_reward: 0.0,
        };
        if env.is_terminal(&state)? {
            log.push(entry);
            continue;
        }
        let mut s = table.state_index(&env.observe(&state)?)?;
        let mut action =
            table.select_action(s, env.valid_actions(state.leader.vertex), epsilon, &mut rng)?;

        for k in 1..=cfg.max_iters_per_episode {
            let out = env.step(&state, action, &mut rng)?;
            entry.length = k;
            entry.cumulative_reward += out.reward;
            if out.terminal {
                table.update_terminal(s, action, out.reward, learner)?;
                break;
            }
            let next = table.state_index(&env.observe(&out.state)?)?;
            let next_valid = env.valid_actions(out.state.leader.vertex);
            action = match learner.algorithm {
                Algorithm::Sarsa => {
                    let next_action = table.select_action(next, next_valid, epsilon, &mut rng)?;
                    table.update_sarsa(s, action, out.reward, next, next_action, learner)?;
                    next_action
                }
                Algorithm::QLearning => {
                    table.update_qlearning(s, action, out.reward, next, next_valid, learner)?;
                    table.select_action(next, next_valid, epsilon, &mut rng)?
                }
            };
            state = out.state;
            s = next;
        }
        log.push(entry);
    }
    Ok(TrainOutput { table, log })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub cell: usize,
    pub run: usize,
    pub converged: bool,
    /// Steps until the terminal test passed, or the cap when it never did.
    pub iterations: usize,
    pub final_mse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean_iterations: f64,
    /// Population standard deviation.
    pub std_iterations: f64,
    pub convergence_rate: f64,
    pub runs: usize,
}

impl Summary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let n = records.len();
        if n == 0 {
            return Self {
                mean_iterations: 0.0,
                std_iterations: 0.0,
                convergence_rate: 0.0,
                runs: 0,
            };
        }
        let mean = records.iter().map(|r| r.iterations as f64).sum::<f64>() / n as f64;
        let var = records
            .iter()
            .map(|r| (r.iterations as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let converged = records.iter().filter(|r| r.converged).count();
        Self {
            mean_iterations: mean,
            std_iterations: var.sqrt(),
            convergence_rate: converged as f64 / n as f64,
            runs: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub runs: usize,
    pub max_iterations: usize,
    /// Exploration rate of the deployed policy. Defaults to the training
    /// rate; 0 gives a purely greedy leader, which can cycle forever between
    /// two vertices in states the table never visited.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: 1000,
            max_iterations: 1000,
            epsilon: LearnerConfig::default().epsilon,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs the fixed table without updates; one independent episode per run.
pub fn evaluate(table: &QTable, env_cfg: &EnvConfig, eval: &EvalConfig) -> Result<Evaluation> {
    evaluate_cell(table, env_cfg, eval, 0)
}

fn evaluate_cell(
    table: &QTable,
    env_cfg: &EnvConfig,
    eval: &EvalConfig,
    cell: usize,
) -> Result<Evaluation> {
    let env = env_cfg.build()?;
    table.check_compatible(&env)?;
    if !(0.0..=1.0).contains(&eval.epsilon) {
        return Err(Error::Config(format!(
            "epsilon_eval = {} outside [0, 1]",
            eval.epsilon
        )));
    }
    let records = (0..eval.runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(eval.seed, &[run as u64]);
            run_episode(table, &env, eval, seed).map(|(converged, iterations, final_mse)| {
                RunRecord {
                    cell,
                    run,
                    converged,
                    iterations,
                    final_mse,
                    seed,
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_records(&records);
    Ok(Evaluation { records, summary })
}

fn run_episode(
    table: &QTable,
    env: &Environment,
    eval: &EvalConfig,
    seed: u64,
) -> Result<(bool, usize, f64)> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut state = env.reset(&mut rng);
    let mut mse = env.mse_of(&state)?;
    if mse < env.config().mu {
        return Ok((true, 0, mse));
    }
    for k in 1..=eval.max_iterations {
        let s = table.state_index(&env.observe(&state)?)?;
        let action = table.select_action(
            s,
            env.valid_actions(state.leader.vertex),
            eval.epsilon,
            &mut rng,
        )?;
        let out = env.step(&state, action, &mut rng)?;
        mse = out.mse;
        if out.terminal {
            return Ok((true, k, mse));
        }
        state = out.state;
    }
    Ok((false, eval.max_iterations, mse))
}

/// Coordinates of one aggregate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub n_train: u64,
    pub n_test: u64,
    pub beta: f64,
    pub mu: f64,
    pub levels: u32,
}

/// Cartesian grid of training settings, each evaluated at one or more
/// test population sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: TrainConfig,
    pub algorithms: Vec<Algorithm>,
    pub n_train: Vec<u64>,
    /// Test sizes; empty means "same as training".
    pub n_test: Vec<u64>,
    pub betas: Vec<f64>,
    pub mus: Vec<f64>,
    pub levels: Vec<u32>,
    pub eval: EvalConfig,
}

impl SweepSpec {
    /// Training cells in enumeration order.
    pub fn train_cells(&self) -> Vec<TrainConfig> {
        let mut cells = Vec::new();
        for &algorithm in &self.algorithms {
            for &n in &self.n_train {
                for &beta in &self.betas {
                    for &mu in &self.mus {
                        for &levels in &self.levels {
                            let mut cfg = self.base.clone();
                            cfg.learner.algorithm = algorithm;
                            cfg.env.agents = n;
                            cfg.env.beta = beta;
                            cfg.env.mu = mu;
                            cfg.env.levels = levels;
                            cfg.seed = derive_seed(self.base.seed, &[cells.len() as u64]);
                            cells.push(cfg);
                        }
                    }
                }
            }
        }
        cells
    }

    fn test_sizes(&self, trained: u64) -> Vec<u64> {
        if self.n_test.is_empty() {
            vec![trained]
        } else {
            self.n_test.clone()
        }
    }

    /// Row keys in output order.
    pub fn keys(&self) -> Vec<CellKey> {
        self.train_cells()
            .iter()
            .flat_map(|cfg| {
                self.test_sizes(cfg.env.agents)
                    .into_iter()
                    .map(move |n_test| key_for(cfg, n_test))
            })
            .collect()
    }
}

fn key_for(cfg: &TrainConfig, n_test: u64) -> CellKey {
    CellKey {
        algorithm: cfg.learner.algorithm,
        n_train: cfg.env.agents,
        n_test,
        beta: cfg.env.beta,
        mu: cfg.env.mu,
        levels: cfg.env.levels,
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub cell: usize,
    pub key: CellKey,
    pub summary: Summary,
    pub records: Vec<RunRecord>,
}

/// Trains one table per training cell and evaluates it at each test size.
/// Rows for which `skip` returns true are omitted, and cells whose rows are
/// all skipped are not trained.
pub fn sweep<F>(spec: &SweepSpec, skip: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&CellKey) -> bool + Sync,
{
    let cells = spec.train_cells();
    if cells.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut jobs = Vec::new();
    let mut row = 0usize;
    for (t, cfg) in cells.iter().enumerate() {
        let tests: Vec<(usize, u64)> = spec
            .test_sizes(cfg.env.agents)
            .into_iter()
            .map(|n| {
                row += 1;
                (row - 1, n)
            })
            .filter(|&(_, n)| !skip(&key_for(cfg, n)))
            .collect();
        if !tests.is_empty() {
            jobs.push((t, cfg, tests));
        }
    }
    let rows: Vec<Vec<SweepRow>> = jobs
        .into_par_iter()
        .map(|(t, cfg, tests)| {
            let trained = train(cfg)?;
            tests
                .into_iter()
                .map(|(row, n_test)| {
                    let env = EnvConfig {
                        agents: n_test,
                        ..cfg.env.clone()
                    };
                    let eval = EvalConfig {
                        seed: derive_seed(spec.base.seed, &[t as u64, n_test, 1]),
                        ..spec.eval
                    };
                    let result = evaluate_cell(&trained.table, &env, &eval, row)?;
                    Ok(SweepRow {
                        cell: row,
                        key: key_for(cfg, n_test),
                        summary: result.summary,
                        records: result.records,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub const RUNS_HEADER: &str = "cell,run,converged,iterations,final_mse,seed";
pub const AGGREGATE_HEADER: &str =
    "algorithm,n_train,n_test,beta,mu,D,mean_iters,std_iters,conv_rate,runs";
pub const TRAINING_LOG_HEADER: &str = "episode,length,cumulative_reward";

pub fn write_run_records<W: Write>(out: &mut W, records: &[RunRecord]) -> io::Result<()> {
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cell, r.run, r.converged, r.iterations, r.final_mse, r.seed
        )?;
    }
    Ok(())
}

pub fn aggregate_line(key: &CellKey, summary: &Summary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        key.algorithm,
        key.n_train,
        key.n_test,
        key.beta,
        key.mu,
        key.levels,
        summary.mean_iterations,
        summary.std_iterations,
        summary.convergence_rate,
        summary.runs
    )
}

pub fn write_training_log<W: Write>(out: &mut W, log: &[EpisodeLog]) -> io::Result<()> {
    writeln!(out, "{TRAINING_LOG_HEADER}")?;
    for e in log {
        writeln!(out, "{},{},{}", e.episode, e.length, e.cumulative_reward)?;
    }
    Ok(())
}
