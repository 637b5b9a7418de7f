//! Layered configuration: TOML file, then `SWHERD_*` environment variables,
//! then command-line overrides. Unknown keys are rejected at every layer.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swarm_herding::harness::CellKey;
use swarm_herding::{
    Algorithm, Backend, EnvConfig, EvalConfig, LearnerConfig, SweepSpec, TrainConfig,
};
use toml::{Table, Value};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "SWHERD_";
const SECTIONS: [&str; 6] = ["graph", "env", "learner", "train", "eval", "sweep"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub graph: GraphSection,
    pub env: EnvSection,
    pub learner: LearnerSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub agents: u64,
    pub beta: f64,
    pub levels: u32,
    pub mu: f64,
    pub initial: Vec<f64>,
    pub target: Vec<f64>,
    pub max_iterations: usize,
    pub backend: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub algorithm: String,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_final: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub episodes: usize,
    pub max_iters_per_episode: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub runs: usize,
    pub max_iterations: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Output file stem.
    pub name: String,
    pub algorithms: Option<Vec<String>>,
    pub n_train: Option<Vec<u64>>,
    /// Test sizes; absent means each table is tested at its training size.
    pub n_test: Option<Vec<u64>>,
    pub betas: Option<Vec<f64>>,
    pub mus: Option<Vec<f64>>,
    pub levels: Option<Vec<u32>>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let env = train.env.clone();
        let learner = train.learner;
        let eval = EvalConfig::default();
        Self {
            seed: train.seed,
            out_dir: PathBuf::from("out"),
            graph: GraphSection {
                rows: env.rows,
                cols: env.cols,
            },
            env: EnvSection {
                agents: env.agents,
                beta: env.beta,
                levels: env.levels,
                mu: env.mu,
                initial: env.initial,
                target: env.target,
                max_iterations: env.max_iterations,
                backend: env.backend.name().into(),
            },
            learner: LearnerSection {
                algorithm: learner.algorithm.name().into(),
                alpha: learner.alpha,
                gamma: learner.gamma,
                epsilon: learner.epsilon,
                epsilon_final: learner.epsilon_final,
            },
            train: TrainSection {
                episodes: train.episodes,
                max_iters_per_episode: train.max_iters_per_episode,
            },
            eval: EvalSection {
                runs: eval.runs,
                max_iterations: eval.max_iterations,
                epsilon: eval.epsilon,
            },
            sweep: SweepSection::default(),
        }
    }
}

macro_rules! default_from_root {
    ($($section:ident: $ty:ty),*) => {
        $(impl Default for $ty {
            fn default() -> Self {
                CliConfig::default().$section
            }
        })*
    };
}
default_from_root!(graph: GraphSection, env: EnvSection, learner: LearnerSection,
    train: TrainSection, eval: EvalSection);

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            name: "sweep".into(),
            algorithms: None,
            n_train: None,
            n_test: None,
            betas: None,
            mus: None,
            levels: None,
        }
    }
}

/// Builds the merged key-value table and deserializes it.
pub struct Loader {
    table: Table,
}

impl Loader {
    pub fn new(path: Option<&Path>) -> Result<Self, CliError> {
        let table = match path {
            None => Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        Ok(Self { table })
    }

    /// Applies every `SWHERD_<SECTION>_<KEY>` (or `SWHERD_<KEY>` for
    /// top-level keys) variable from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<_> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (name, raw) in vars {
            let rest = name[ENV_PREFIX.len()..].to_ascii_lowercase();
            let key = SECTIONS
                .iter()
                .find_map(|s| {
                    rest.strip_prefix(s)
                        .and_then(|k| k.strip_prefix('_'))
                        .map(|k| format!("{s}.{k}"))
                })
                .unwrap_or(rest);
            self.set(&key, &raw)
                .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    /// Sets `section.key` (or a top-level `key`) from a raw string. The
    /// string is read as a TOML value when possible, else as a bare string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let value = parse_value(raw);
        let (section, field) = match key.split_once('.') {
            Some((s, f)) => (Some(s), f),
            None => (None, key),
        };
        if field.is_empty() || field.contains('.') {
            return Err(CliError::Config(format!("malformed key `{key}`")));
        }
        let target = match section {
            None => &mut self.table,
            Some(s) => match self
                .table
                .entry(s.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
            {
                Value::Table(t) => t,
                _ => return Err(CliError::Config(format!("`{s}` is not a section"))),
            },
        };
        target.insert(field.to_string(), value);
        Ok(())
    }

    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(key.trim(), raw.trim())
    }

    pub fn finish(self) -> Result<CliConfig, CliError> {
        let cfg: CliConfig = Value::Table(self.table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        Ok(cfg)
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn parse_algorithm(key: &str, name: &str) -> Result<Algorithm, CliError> {
    name.parse()
        .map_err(|_| CliError::Config(format!("{key}: unknown algorithm `{name}`")))
}

impl CliConfig {
    pub fn env_config(&self) -> Result<EnvConfig, CliError> {
        let backend: Backend = self.env.backend.parse().map_err(|_| {
            CliError::Config(format!(
                "env.backend: unknown backend `{}`",
                self.env.backend
            ))
        })?;
        Ok(EnvConfig {
            rows: self.graph.rows,
            cols: self.graph.cols,
            agents: self.env.agents,
            beta: self.env.beta,
            levels: self.env.levels,
            mu: self.env.mu,
            initial: self.env.initial.clone(),
            target: self.env.target.clone(),
            max_iterations: self.env.max_iterations,
            backend,
        })
    }

    pub fn learner_config(&self) -> Result<LearnerConfig, CliError> {
        Ok(LearnerConfig {
            alpha: self.learner.alpha,
            gamma: self.learner.gamma,
            epsilon: self.learner.epsilon,
            epsilon_final: self.learner.epsilon_final,
            algorithm: parse_algorithm("learner.algorithm", &self.learner.algorithm)?,
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            env: self.env_config()?,
            learner: self.learner_config()?,
            episodes: self.train.episodes,
            max_iters_per_episode: self.train.max_iters_per_episode,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            runs: self.eval.runs,
            max_iterations: self.eval.max_iterations,
            epsilon: self.eval.epsilon,
            seed: self.seed,
        }
    }

    /// Sweep axes; an absent axis falls back to the single base value, an
    /// explicitly empty one empties the grid.
    pub fn sweep_spec(&self) -> Result<SweepSpec, CliError> {
        let base = self.train_config()?;
        let s = &self.sweep;
        let algorithms = match &s.algorithms {
            None => vec![base.learner.algorithm],
            Some(names) => names
                .iter()
                .map(|a| parse_algorithm("sweep.algorithms", a))
                .collect::<Result<_, _>>()?,
        };
        fn or_base<T: Clone>(axis: &Option<Vec<T>>, value: T) -> Vec<T> {
            axis.clone().unwrap_or_else(|| vec![value])
        }
        if s.n_test.as_ref().is_some_and(Vec::is_empty) {
            return Err(CliError::Config("sweep.n_test is empty".into()));
        }
        Ok(SweepSpec {
            algorithms,
            n_train: or_base(&s.n_train, base.env.agents),
            n_test: s.n_test.clone().unwrap_or_default(),
            betas: or_base(&s.betas, base.env.beta),
            mus: or_base(&s.mus, base.env.mu),
            levels: or_base(&s.levels, base.env.levels),
            eval: self.eval_config(),
            base,
        })
    }
}

/// Parses the key columns of an aggregate CSV row.
pub fn parse_key(line: &str) -> Option<CellKey> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() < 6 {
        return None;
    }
    Some(CellKey {
        algorithm: f[0].parse().ok()?,
        n_train: f[1].parse().ok()?,
        n_test: f[2].parse().ok()?,
        beta: f[3].parse().ok()?,
        mu: f[4].parse().ok()?,
        levels: f[5].parse().ok()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<CliConfig, CliError> {
        Loader {
            table: text.parse().unwrap(),
        }
        .finish()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = load("").unwrap();
        let train = cfg.train_config().unwrap();
        assert_eq!(train, TrainConfig::default());
        assert_eq!(cfg.eval_config(), EvalConfig::default());
    }

    #[test]
    fn shipped_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let default = Loader::new(Some(&dir.join("default.toml")))
            .unwrap()
            .finish()
            .unwrap();
        assert_eq!(default.train_config().unwrap(), TrainConfig::default());
        assert_eq!(default.eval_config(), EvalConfig::default());
        for (name, rows) in [
            ("mu_levels", 8),
            ("population_beta", 30),
            ("cross_population", 66),
            ("smoke", 1),
        ] {
            let path = dir.join(format!("{name}.toml"));
            let cfg = Loader::new(Some(&path)).unwrap().finish().unwrap();
            assert_eq!(cfg.sweep_spec().unwrap().keys().len(), rows, "{name}");
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = load("[learner]\nalpha_decay = 0.5\n").unwrap_err();
        assert!(
            matches!(err, CliError::Config(ref m) if m.contains("alpha_decay")),
            "{err}"
        );
        let err = load("colour = 1\n").unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn layers_apply_last_wins() {
        let mut l = Loader {
            table: "[env]\nbeta = 0.05\nmu = 0.001\n".parse().unwrap(),
        };
        l.apply_env([
            ("SWHERD_ENV_BETA".to_string(), "0.025".to_string()),
            ("SWHERD_TRAIN_MAX_ITERS_PER_EPISODE".into(), "7".into()),
            ("SWHERD_SEED".into(), "11".into()),
            ("OTHER".into(), "x".into()),
        ])
        .unwrap();
        l.set_pair("env.beta=0.1").unwrap();
        l.set_pair("env.backend=mean-field").unwrap();
        let cfg = l.finish().unwrap();
        assert_eq!(cfg.env.beta, 0.1);
        assert_eq!(cfg.env.mu, 0.001);
        assert_eq!(cfg.train.max_iters_per_episode, 7);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.env_config().unwrap().backend, Backend::MeanField);
    }

    #[test]
    fn unknown_env_var_is_rejected() {
        let mut l = Loader {
            table: Table::new(),
        };
        l.apply_env([("SWHERD_ENV_GAMMA".to_string(), "1".to_string())])
            .unwrap();
        let err = l.finish().unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn wrong_type_is_a_config_error() {
        assert!(matches!(
            load("[env]\nagents = \"many\"\n"),
            Err(CliError::Config(_))
        ));
        let cfg = load("[learner]\nalgorithm = \"td\"\n").unwrap();
        assert!(cfg
            .learner_config()
            .unwrap_err()
            .to_string()
            .contains("learner.algorithm"));
    }

    #[test]
    fn sweep_axes_default_to_base() {
        let cfg = load("[sweep]\nmus = [0.0005, 0.001]\nlevels = [10, 20]\n").unwrap();
        let spec = cfg.sweep_spec().unwrap();
        assert_eq!(spec.keys().len(), 4);
        assert_eq!(spec.betas, vec![0.1]);
        let cfg = load("[sweep]\nmus = []\n").unwrap();
        assert!(cfg.sweep_spec().unwrap().keys().is_empty());
    }

    #[test]
    fn aggregate_keys_parse_back() {
        let key = parse_key("sarsa,100,10,0.025,0.0005,20,1,2,0.5,3").unwrap();
        assert_eq!(key.algorithm, Algorithm::Sarsa);
        assert_eq!((key.n_train, key.n_test, key.levels), (100, 10, 20));
        assert_eq!((key.beta, key.mu), (0.025, 0.0005));
        assert!(parse_key("algorithm,n_train").is_none());
    }
}
