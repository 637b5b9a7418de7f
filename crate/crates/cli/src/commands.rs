use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use swarm_herding::harness::{
    self, aggregate_line, write_run_records, write_training_log, SimRng, AGGREGATE_HEADER,
    RUNS_HEADER,
};
use swarm_herding::learner::{FORMAT_VERSION, MAGIC};
use swarm_herding::{reward, EnvState, LeaderAction, QTable, TraceWriter};

use crate::config::{parse_key, CliConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, write_atomic};
use crate::render;

pub const TABLE_FILE: &str = "qtable.bin";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const RUNS_FILE: &str = "eval_runs.csv";
pub const AGGREGATE_FILE: &str = "eval_aggregate.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const FRAMES_FILE: &str = "frames.txt";

/// Human-readable companion of a Q-table file.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    created_unix: u64,
    header: Header,
    training: Training,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    vertices: usize,
    levels: u32,
    actions: usize,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Training {
    algorithm: String,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon_final: Option<f64>,
    beta: f64,
    mu: f64,
    agents: u64,
    backend: String,
    episodes: usize,
    max_iters_per_episode: usize,
    seed: u64,
}

fn header_of(table: &QTable) -> Header {
    let (rows, cols) = table.grid();
    Header {
        magic: String::from_utf8_lossy(MAGIC).into_owned(),
        version: FORMAT_VERSION,
        vertices: table.vertices(),
        levels: table.levels(),
        actions: table.action_count(),
        rows,
        cols,
    }
}

pub fn sidecar_path(table: &Path) -> PathBuf {
    table.with_extension("meta.toml")
}

fn read_table(path: &Path) -> Result<QTable, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    QTable::load(std::io::BufReader::new(file)).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Compatibility(format!("{}: {m}", path.display())),
        CliError::Compatibility(m) => CliError::Compatibility(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_sidecar(table: &Path) -> Option<Sidecar> {
    let text = fs::read_to_string(sidecar_path(table)).ok()?;
    toml::from_str(&text).ok()
}

pub fn train(cfg: &CliConfig) -> Result<(), CliError> {
    let tc = cfg.train_config()?;
    ensure_dir(&cfg.out_dir)?;
    let out = harness::train(&tc)?;

    let table_path = cfg.out_dir.join(TABLE_FILE);
    let mut bytes = Vec::new();
    out.table.save(&mut bytes)?;
    write_atomic(&table_path, &bytes)?;

    let mut log = Vec::new();
    write_training_log(&mut log, &out.log).map_err(|e| CliError::io("training log", e))?;
    write_atomic(&cfg.out_dir.join(TRAINING_LOG_FILE), &log)?;

    let sidecar = Sidecar {
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        header: header_of(&out.table),
        training: Training {
            algorithm: tc.learner.algorithm.name().into(),
            alpha: tc.learner.alpha,
            gamma: tc.learner.gamma,
            epsilon: tc.learner.epsilon,
            epsilon_final: tc.learner.epsilon_final,
            beta: tc.env.beta,
            mu: tc.env.mu,
            agents: tc.env.agents,
            backend: tc.env.backend.name().into(),
            episodes: tc.episodes,
            max_iters_per_episode: tc.max_iters_per_episode,
            seed: tc.seed,
        },
    };
    let text = toml::to_string(&sidecar).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&sidecar_path(&table_path), text.as_bytes())?;

    let converged = out
        .log
        .iter()
        .filter(|e| e.length < tc.max_iters_per_episode)
        .count();
    println!(
        "trained {} for {} episodes ({} ended at the target); wrote {}",
        tc.learner.algorithm,
        tc.episodes,
        converged,
        table_path.display()
    );
    Ok(())
}

pub fn evaluate(cfg: &CliConfig, table_path: &Path, n_test: Option<u64>) -> Result<(), CliError> {
    let mut env = cfg.env_config()?;
    let mut learner = cfg.learner_config()?;
    let eval = cfg.eval_config();
    let table = read_table(table_path)?;
    if let Some(meta) = read_sidecar(table_path) {
        learner.algorithm =
            meta.training.algorithm.parse().map_err(|_| {
                CliError::Compatibility("sidecar names an unknown algorithm".into())
            })?;
        env.agents = meta.training.agents;
    }
    let n_train = env.agents;
    if let Some(n) = n_test {
        env.agents = n;
    }
    ensure_dir(&cfg.out_dir)?;
    let result = harness::evaluate(&table, &env, &eval)?;

    let mut runs = format!("{RUNS_HEADER}\n").into_bytes();
    write_run_records(&mut runs, &result.records).map_err(|e| CliError::io("runs", e))?;
    write_atomic(&cfg.out_dir.join(RUNS_FILE), &runs)?;

    let key = harness::CellKey {
        algorithm: learner.algorithm,
        n_train,
        n_test: env.agents,
        beta: env.beta,
        mu: env.mu,
        levels: env.levels,
    };
    let aggregate = format!(
        "{AGGREGATE_HEADER}\n{}\n",
        aggregate_line(&key, &result.summary)
    );
    write_atomic(&cfg.out_dir.join(AGGREGATE_FILE), aggregate.as_bytes())?;

    let s = &result.summary;
    println!(
        "runs {}  mean iterations {}  std {}  convergence rate {}",
        s.runs, s.mean_iterations, s.std_iterations, s.convergence_rate
    );
    Ok(())
}

enum Policy {
    Random,
    Table(QTable),
}

pub fn simulate(cfg: &CliConfig, policy: &str, frames: bool) -> Result<(), CliError> {
    let env = cfg.env_config()?.build()?;
    let policy = if policy == "random" {
        Policy::Random
    } else {
        let table = read_table(Path::new(policy))?;
        table.check_compatible(&env)?;
        Policy::Table(table)
    };
    let epsilon = cfg.eval.epsilon;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(CliError::Config(format!(
            "eval.epsilon = {epsilon} outside [0, 1]"
        )));
    }
    ensure_dir(&cfg.out_dir)?;

    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let mut trace = TraceWriter::new(Vec::new(), env.graph().vertex_count())
        .map_err(|e| CliError::io("trace", e))?;
    let mut text = String::new();
    let mut state: EnvState = env.reset(&mut rng);
    let mse = env.mse_of(&state)?;
    let initial_reward = reward(&state.followers.distribution()?, env.target());
    let mut terminal = mse < cfg.env.mu;
    record(&mut trace, 0, None, &state, initial_reward, mse, terminal)?;
    if frames {
        text.push_str(&render::frame(&env, 0, None, &state, mse));
    }
    let mut k = 0;
    while !terminal && k < env.config().max_iterations {
        k += 1;
        let valid = env.valid_actions(state.leader.vertex);
        let action = match &policy {
            Policy::Random => valid[rng.random_range(0..valid.len())],
            Policy::Table(t) => {
                let s = t.state_index(&env.observe(&state)?)?;
                t.select_action(s, valid, epsilon, &mut rng)?
            }
        };
        let out = env.step(&state, action, &mut rng)?;
        terminal = out.terminal;
        state = out.state;
        record(
            &mut trace,
            k,
            Some(action),
            &state,
            out.reward,
            out.mse,
            terminal,
        )?;
        if frames {
            text.push_str(&render::frame(&env, k, Some(action), &state, out.mse));
        }
    }
    write_atomic(&cfg.out_dir.join(TRACE_FILE), &trace.into_inner())?;
    if frames {
        write_atomic(&cfg.out_dir.join(FRAMES_FILE), text.as_bytes())?;
    }
    println!(
        "{} after {k} iterations",
        if terminal {
            "reached target"
        } else {
            "stopped"
        }
    );
    Ok(())
}

fn record(
    trace: &mut TraceWriter<Vec<u8>>,
    k: usize,
    action: Option<LeaderAction>,
    state: &EnvState,
    reward: f64,
    mse: f64,
    terminal: bool,
) -> Result<(), CliError> {
    trace
        .record(k, action, state, reward, mse, terminal)
        .map_err(|e| CliError::io("trace", e))
}

pub fn sweep(cfg: &CliConfig, resume: bool) -> Result<(), CliError> {
    let spec = cfg.sweep_spec()?;
    let keys = spec.keys();
    if keys.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let path = cfg.out_dir.join(format!("{}.csv", cfg.sweep.name));
    ensure_dir(&cfg.out_dir)?;

    let mut rows: Vec<Option<String>> = vec![None; keys.len()];
    if resume && path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        let mut lines = text.lines();
        if lines.next() != Some(AGGREGATE_HEADER) {
            return Err(CliError::Config(format!(
                "{} does not start with the aggregate header",
                path.display()
            )));
        }
        for line in lines {
            let Some(key) = parse_key(line) else { continue };
            if let Some(i) = (0..keys.len()).find(|&i| rows[i].is_none() && keys[i] == key) {
                rows[i] = Some(line.to_string());
            }
        }
    }

    let per_cell = keys.len() / spec.train_cells().len();
    let cells = keys.len() / per_cell;
    let batch = rayon::current_num_threads().max(1);
    let mut done = rows.iter().filter(|r| r.is_some()).count();
    write_rows(&path, &rows)?;
    for start in (0..cells).step_by(batch) {
        let wanted: HashSet<usize> = (start * per_cell..((start + batch).min(cells)) * per_cell)
            .filter(|&i| rows[i].is_none())
            .collect();
        if wanted.is_empty() {
            continue;
        }
        let wanted_keys: Vec<_> = wanted.iter().map(|&i| keys[i]).collect();
        let results = harness::sweep(&spec, |k| !wanted_keys.contains(k))?;
        for r in results {
            if wanted.contains(&r.cell) {
                rows[r.cell] = Some(aggregate_line(&r.key, &r.summary));
                done += 1;
            }
        }
        write_rows(&path, &rows)?;
        eprintln!("swherd: {done}/{} rows", keys.len());
    }
    println!("wrote {} rows to {}", keys.len(), path.display());
    Ok(())
}

fn write_rows(path: &Path, rows: &[Option<String>]) -> Result<(), CliError> {
    let mut text = format!("{AGGREGATE_HEADER}\n");
    for line in rows.iter().flatten() {
        text.push_str(line);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn inspect(path: &Path) -> Result<(), CliError> {
    let table = read_table(path)?;
    let h = header_of(&table);
    let values = table.values();
    let actions = table.action_count();
    let visited = values
        .chunks(actions)
        .filter(|row| row.iter().any(|&q| q != 0.0))
        .count();
    let nonzero = values.iter().filter(|&&q| q != 0.0).count();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;

    let mut out = String::new();
    let _ = writeln!(out, "magic     {}", h.magic);
    let _ = writeln!(out, "version   {}", h.version);
    let _ = writeln!(
        out,
        "grid      {}x{} ({} vertices)",
        h.rows, h.cols, h.vertices
    );
    let _ = writeln!(out, "levels    {}", h.levels);
    let _ = writeln!(out, "actions   {}", h.actions);
    let _ = writeln!(out, "states    {}", table.state_count());
    let _ = writeln!(out, "visited   {visited}");
    let _ = writeln!(out, "nonzero   {nonzero} of {}", values.len());
    let _ = writeln!(out, "min       {min}");
    let _ = writeln!(out, "max       {max}");
    let _ = writeln!(out, "mean      {mean}");
    if let Some(meta) = read_sidecar(path) {
        let t = meta.training;
        let _ = writeln!(
            out,
            "trained   {} alpha={} gamma={} epsilon={} beta={} mu={} N={} episodes={} seed={}",
            t.algorithm, t.alpha, t.gamma, t.epsilon, t.beta, t.mu, t.agents, t.episodes, t.seed
        );
    }
    print!("{out}");
    Ok(())
}
