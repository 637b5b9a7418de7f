//! Tabular action values with SARSA / Q-Learning updates and an
//! epsilon-greedy behavior policy.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::environment::{DiscretizedState, Environment, LeaderAction, StateEncoder};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SWHQ";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Sarsa,
    QLearning,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sarsa => "sarsa",
            Algorithm::QLearning => "qlearning",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sarsa" => Ok(Algorithm::Sarsa),
            "qlearning" | "q-learning" | "q_learning" => Ok(Algorithm::QLearning),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// When set, epsilon falls linearly from `epsilon` to this value over
    /// the training episodes.
    pub epsilon_final: Option<f64>,
    pub algorithm: Algorithm,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            gamma: 0.9,
            epsilon: 0.1,
            epsilon_final: None,
            algorithm: Algorithm::QLearning,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {x} must lie in [0, 1]")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("gamma", self.gamma)?;
        unit("epsilon", self.epsilon)?;
        if let Some(e) = self.epsilon_final {
            unit("epsilon_final", e)?;
        }
        Ok(())
    }

    /// Exploration rate for a 0-based episode out of `episodes`.
    pub fn epsilon_at(&self, episode: usize, episodes: usize) -> f64 {
        match self.epsilon_final {
            Some(end) if episodes > 1 => {
                let t = episode as f64 / (episodes - 1) as f64;
                self.epsilon + (end - self.epsilon) * t
            }
            Some(end) => end,
            None => self.epsilon,
        }
    }
}

/// Flat table laid out state-major, action-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    encoder: StateEncoder,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(levels: u32, rows: usize, cols: usize) -> Result<Self> {
        let encoder = StateEncoder::new(levels, rows * cols)?;
        Ok(Self {
            encoder,
            rows,
            cols,
            values: vec![0.0; encoder.state_count() * LeaderAction::COUNT],
        })
    }

    pub fn for_env(env: &Environment) -> Result<Self> {
        let cfg = env.config();
        Self::new(cfg.levels, cfg.rows, cfg.cols)
    }

    pub fn levels(&self) -> u32 {
        self.encoder.levels()
    }

    pub fn vertices(&self) -> usize {
        self.encoder.vertices()
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn action_count(&self) -> usize {
        LeaderAction::COUNT
    }

    pub fn state_count(&self) -> usize {
        self.encoder.state_count()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn encoder(&self) -> StateEncoder {
        self.encoder
    }

    /// Errors unless the table was sized for `env`.
    pub fn check_compatible(&self, env: &Environment) -> Result<()> {
        let cfg = env.config();
        if (self.rows, self.cols) != (cfg.rows, cfg.cols) || self.levels() != cfg.levels {
            return Err(Error::Compatibility(format!(
                "table is {}x{} with D={}, environment is {}x{} with D={}",
                self.rows,
                self.cols,
                self.levels(),
                cfg.rows,
                cfg.cols,
                cfg.levels
            )));
        }
        Ok(())
    }

    pub fn state_index(&self, state: &DiscretizedState) -> Result<usize> {
        self.encoder.encode(state)
    }

    fn slot(&self, state: usize, action: LeaderAction) -> Result<usize> {
        if state >= self.state_count() {
            return Err(Error::Index(format!(
                "state {state} of {}",
                self.state_count()
            )));
        }
        Ok(state * LeaderAction::COUNT + action.index())
    }

    pub fn get(&self, state: usize, action: LeaderAction) -> Result<f64> {
        Ok(self.values[self.slot(state, action)?])
    }

    pub fn set(&mut self, state: usize, action: LeaderAction, value: f64) -> Result<()> {
        let slot = self.slot(state, action)?;
        self.values[slot] = value;
        Ok(())
    }

    pub fn lookup(&self, state: &DiscretizedState, action: LeaderAction) -> Result<f64> {
        self.get(self.state_index(state)?, action)
    }

    /// Lookup by raw action index, for callers that hold table coordinates.
    pub fn lookup_index(&self, state: &DiscretizedState, action: usize) -> Result<f64> {
        let action = LeaderAction::from_index(action)
            .ok_or_else(|| Error::Index(format!("action {action} of {}", LeaderAction::COUNT)))?;
        self.lookup(state, action)
    }

    /// Highest-valued action among `valid`; ties go to the earliest in
    /// canonical order.
    pub fn greedy(&self, state: usize, valid: &[LeaderAction]) -> Result<LeaderAction> {
        let mut best: Option<(LeaderAction, f64)> = None;
        for &a in valid {
            let q = self.get(state, a)?;
            match best {
                Some((b, bq)) if q < bq || (q == bq && b.index() < a.index()) => {}
                _ => best = Some((a, q)),
            }
        }
        best.map(|(a, _)| a).ok_or(Error::NoAction)
    }

    pub fn max_value(&self, state: usize, valid: &[LeaderAction]) -> Result<f64> {
        let a = self.greedy(state, valid)?;
        self.get(state, a)
    }

    /// Draws X ~ U[0,1); explores uniformly over `valid` when X <= epsilon,
    /// otherwise acts greedily. No draw is made when epsilon is 0.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: usize,
        valid: &[LeaderAction],
        epsilon: f64,
        rng: &mut R,
    ) -> Result<LeaderAction> {
        if valid.is_empty() {
            return Err(Error::NoAction);
        }
        if epsilon > 0.0 && rng.random::<f64>() <= epsilon {
            return valid.choose(rng).copied().ok_or(Error::NoAction);
        }
        self.greedy(state, valid)
    }

    fn td_update(
        &mut self,
        state: usize,
        action: LeaderAction,
        target: f64,
        alpha: f64,
    ) -> Result<()> {
        let slot = self.slot(state, action)?;
        let q = self.values[slot];
        self.values[slot] = q + alpha * (target - q);
        Ok(())
    }

    /// On-policy update toward `r + gamma * Q(s', a')`.
    #[allow(clippy::too_many_arguments)]
    pub fn update_sarsa(
        &mut self,
        state: usize,
        action: LeaderAction,
        reward: f64,
        next_state: usize,
        next_action: LeaderAction,
        cfg: &LearnerConfig,
    ) -> Result<()> {
        let target = reward + cfg.gamma * self.get(next_state, next_action)?;
        self.td_update(state, action, target, cfg.alpha)
    }

    /// Off-policy update toward `r + gamma * max_{a in valid'} Q(s', a)`.
    #[allow(clippy::too_many_arguments)]
    pub fn update_qlearning(
        &mut self,
        state: usize,
        action: LeaderAction,
        reward: f64,
        next_state: usize,
        next_valid: &[LeaderAction],
        cfg: &LearnerConfig,
    ) -> Result<()> {
        let target = reward + cfg.gamma * self.max_value(next_state, next_valid)?;
        self.td_update(state, action, target, cfg.alpha)
    }

    /// Update for a transition into a terminal state, whose value is 0.
    pub fn update_terminal(
        &mut self,
        state: usize,
        action: LeaderAction,
        reward: f64,
        cfg: &LearnerConfig,
    ) -> Result<()> {
        self.td_update(state, action, reward, cfg.alpha)
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for field in [
            FORMAT_VERSION,
            self.vertices() as u32,
            self.levels(),
            LeaderAction::COUNT as u32,
            self.rows as u32,
            self.cols as u32,
        ] {
            out.write_all(&field.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 28];
        read_header(&mut input, &mut header)?;
        if &header[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &header[..4])));
        }
        let field = |i: usize| {
            let at = 4 + 4 * i;
            u32::from_le_bytes(header[at..at + 4].try_into().expect("4-byte slice"))
        };
        let (version, m, d, actions, rows, cols) =
            (field(0), field(1), field(2), field(3), field(4), field(5));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        if actions as usize != LeaderAction::COUNT {
            return Err(Error::Compatibility(format!(
                "{actions} actions, expected 5"
            )));
        }
        if rows == 0 || cols == 0 || (rows as u64) * (cols as u64) != m as u64 {
            return Err(Error::Compatibility(format!(
                "grid {rows}x{cols} does not have {m} vertices"
            )));
        }
        let mut table = Self::new(d, rows as usize, cols as usize)
            .map_err(|e| Error::Compatibility(e.to_string()))?;
        let expected = table.values.len();
        let mut payload = Vec::with_capacity(expected * 8);
        input
            .by_ref()
            .take(expected as u64 * 8)
            .read_to_end(&mut payload)?;
        if payload.len() < expected * 8 {
            return Err(Error::Truncated {
                expected,
                found: payload.len() / 8,
            });
        }
        let mut extra = [0u8; 1];
        if input.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        for (v, chunk) in table.values.iter_mut().zip(payload.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(table)
    }
}

fn read_header<R: Read>(input: &mut R, header: &mut [u8; 28]) -> Result<()> {
    let mut filled = 0;
    while filled < header.len() {
        match input.read(&mut header[filled..])? {
            0 => {
                return Err(Error::Format(format!(
                    "header truncated at {filled} of {} bytes",
                    header.len()
                )))
            }
            n => filled += n,
        }
    }
    Ok(())
}
