//! Episodic herding environment.
//!
//! Each iteration the leader acts first; the followers then respond to the
//! leader's new location and flag. Rewards and the terminal test are taken
//! on the post-step follower distribution.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;

use crate::dynamics::{
    empirical_distribution, mean_field_step, step_dtmc, MeanFieldState, SwarmCounts,
    TransitionRates,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

/// Leader location and repel flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LeaderState {
    pub vertex: VertexId,
    /// Followers at `vertex` are repelled only while this is set.
    pub flag: bool,
}

impl LeaderState {
    pub fn new(vertex: usize, flag: bool) -> Self {
        Self {
            vertex: VertexId(vertex),
            flag,
        }
    }

    pub fn repels_at(&self, v: VertexId) -> bool {
        self.flag && self.vertex == v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LeaderAction {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl LeaderAction {
    /// Canonical order; also the action axis of the value table.
    pub const ALL: [LeaderAction; 5] = [
        LeaderAction::Left,
        LeaderAction::Right,
        LeaderAction::Up,
        LeaderAction::Down,
        LeaderAction::Stay,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LeaderAction::Left => "Left",
            LeaderAction::Right => "Right",
            LeaderAction::Up => "Up",
            LeaderAction::Down => "Down",
            LeaderAction::Stay => "Stay",
        }
    }

    /// Target vertex on a grid, `None` if the move leaves the grid.
    fn destination(self, graph: &Graph, v: VertexId) -> Option<VertexId> {
        let shape = graph.grid_shape()?;
        let (r, c) = shape.position(v);
        let (r, c) = match self {
            LeaderAction::Left => (r, c.checked_sub(1)?),
            LeaderAction::Right => (r, c + 1),
            LeaderAction::Up => (r.checked_sub(1)?, c),
            LeaderAction::Down => (r + 1, c),
            LeaderAction::Stay => (r, c),
        };
        (r < shape.rows && c < shape.cols).then(|| shape.vertex(r, c))
    }
}

impl fmt::Display for LeaderAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Actions available to a leader at `v`, in canonical order. Stay is always
/// present; directional moves only where the grid has a neighbor.
pub fn valid_actions(graph: &Graph, v: VertexId) -> Vec<LeaderAction> {
    LeaderAction::ALL
        .into_iter()
        .filter(|a| *a == LeaderAction::Stay || a.destination(graph, v).is_some())
        .collect()
}

/// Stay sets the repel flag in place; a move relocates with the flag cleared.
pub fn apply_leader_action(
    graph: &Graph,
    leader: LeaderState,
    action: LeaderAction,
) -> Result<LeaderState> {
    graph.check_vertex(leader.vertex)?;
    match action {
        LeaderAction::Stay => Ok(LeaderState {
            vertex: leader.vertex,
            flag: true,
        }),
        _ => action
            .destination(graph, leader.vertex)
            .map(|vertex| LeaderState {
                vertex,
                flag: false,
            })
            .ok_or(Error::InvalidAction {
                action: action.name(),
                vertex: leader.vertex.0,
            }),
    }
}

fn squared_distance(current: &MeanFieldState, target: &MeanFieldState) -> f64 {
    current
        .density()
        .iter()
        .zip(target.density())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Negated squared Euclidean distance to the target.
pub fn reward(current: &MeanFieldState, target: &MeanFieldState) -> f64 {
    -squared_distance(current, target)
}

/// Per-vertex mean squared error to the target.
pub fn mse(current: &MeanFieldState, target: &MeanFieldState) -> f64 {
    squared_distance(current, target) / current.len() as f64
}

/// Quantizes each fraction to `round(levels * s_v)`, rounding halves away
/// from zero.
pub fn discretize(state: &MeanFieldState, levels: u32) -> Vec<u32> {
    state
        .density()
        .iter()
        .map(|s| ((levels as f64 * s).round().max(0.0) as u32).min(levels))
        .collect()
}

/// Exact integer form of [`discretize`] applied to an empirical distribution.
pub fn discretize_counts(state: &SwarmCounts, levels: u32) -> Result<Vec<u32>> {
    let n = state.total();
    if n == 0 {
        return Err(Error::EmptySwarm);
    }
    let d = levels as u64;
    Ok(state
        .counts()
        .iter()
        .map(|&c| ((2 * d * c + n) / (2 * n)) as u32)
        .collect())
}

/// Quantized follower fractions together with the leader's vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscretizedState {
    pub levels: Vec<u32>,
    pub leader: VertexId,
}

/// Mixed-radix index over `(levels+1)^M` fraction vectors times `M` leader
/// positions: `leader + M * sum_v F_v (levels+1)^v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateEncoder {
    levels: u32,
    vertices: usize,
}

impl StateEncoder {
    pub fn new(levels: u32, vertices: usize) -> Result<Self> {
        if levels == 0 || vertices == 0 {
            return Err(Error::Encoding(format!(
                "levels={levels} vertices={vertices} must be positive"
            )));
        }
        let enc = Self { levels, vertices };
        (levels as usize + 1)
            .checked_pow(vertices as u32)
            .and_then(|n| n.checked_mul(vertices))
            .ok_or_else(|| Error::Encoding("state space too large".into()))?;
        Ok(enc)
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn state_count(&self) -> usize {
        (self.levels as usize + 1).pow(self.vertices as u32) * self.vertices
    }

    pub fn encode(&self, state: &DiscretizedState) -> Result<usize> {
        if state.levels.len() != self.vertices {
            return Err(Error::Encoding(format!(
                "expected {} components, got {}",
                self.vertices,
                state.levels.len()
            )));
        }
        if state.leader.0 >= self.vertices {
            return Err(Error::Encoding(format!(
                "leader vertex {} out of range",
                state.leader
            )));
        }
        let radix = self.levels as usize + 1;
        let mut fractions = 0usize;
        for (v, &f) in state.levels.iter().enumerate().rev() {
            if f > self.levels {
                return Err(Error::Encoding(format!(
                    "component {v} = {f} exceeds {}",
                    self.levels
                )));
            }
            fractions = fractions * radix + f as usize;
        }
        Ok(state.leader.0 + self.vertices * fractions)
    }

    pub fn decode(&self, index: usize) -> Result<DiscretizedState> {
        if index >= self.state_count() {
            return Err(Error::Encoding(format!("index {index} out of range")));
        }
        let radix = self.levels as usize + 1;
        let leader = VertexId(index % self.vertices);
        let mut rest = index / self.vertices;
        let levels = (0..self.vertices)
            .map(|_| {
                let f = (rest % radix) as u32;
                rest /= radix;
                f
            })
            .collect();
        Ok(DiscretizedState { levels, leader })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Integer agent counts with multinomial transitions.
    Dtmc,
    /// Deterministic population fractions.
    MeanField,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Dtmc => "dtmc",
            Backend::MeanField => "mean-field",
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtmc" => Ok(Backend::Dtmc),
            "mean-field" | "mean_field" | "meanfield" => Ok(Backend::MeanField),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub rows: usize,
    pub cols: usize,
    pub agents: u64,
    pub beta: f64,
    /// Discretization intervals per vertex fraction.
    pub levels: u32,
    /// Terminal MSE threshold.
    pub mu: f64,
    pub initial: Vec<f64>,
    pub target: Vec<f64>,
    pub max_iterations: usize,
    pub backend: Backend,
}

impl Default for EnvConfig {
    /// 2x2 grid, 100 agents, herding `[0.4,0.1,0.1,0.4]` to `[0.1,0.4,0.4,0.1]`.
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 2,
            agents: 100,
            beta: 0.1,
            levels: 10,
            mu: 0.0025,
            initial: vec![0.4, 0.1, 0.1, 0.4],
            target: vec![0.1, 0.4, 0.4, 0.1],
            max_iterations: 5000,
            backend: Backend::Dtmc,
        }
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Environment> {
        Environment::new(self.clone())
    }
}

/// Follower population in whichever representation the backend uses.
#[derive(Debug, Clone, PartialEq)]
pub enum Followers {
    Counts(SwarmCounts),
    Density(MeanFieldState),
}

impl Followers {
    pub fn distribution(&self) -> Result<MeanFieldState> {
        match self {
            Followers::Counts(c) => empirical_distribution(c),
            Followers::Density(d) => Ok(d.clone()),
        }
    }

    pub fn discretize(&self, levels: u32) -> Result<Vec<u32>> {
        match self {
            Followers::Counts(c) => discretize_counts(c, levels),
            Followers::Density(d) => Ok(discretize(d, levels)),
        }
    }

    /// Per-vertex values as written to traces: counts or densities.
    pub fn values(&self) -> Vec<String> {
        match self {
            Followers::Counts(c) => c.counts().iter().map(u64::to_string).collect(),
            Followers::Density(d) => d.density().iter().map(f64::to_string).collect(),
        }
    }

    pub fn counts(&self) -> Option<&SwarmCounts> {
        match self {
            Followers::Counts(c) => Some(c),
            Followers::Density(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub followers: Followers,
    pub leader: LeaderState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub mse: f64,
    pub terminal: bool,
}

/// Validated configuration plus the graph and rates derived from it.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    graph: Graph,
    rates: TransitionRates,
    initial: MeanFieldState,
    target: MeanFieldState,
    encoder: StateEncoder,
    actions: Vec<Vec<LeaderAction>>,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        let graph = Graph::grid(config.rows, config.cols)?;
        let m = graph.vertex_count();
        if !(config.beta > 0.0 && config.beta * (graph.max_out_degree() as f64) < 1.0) {
            return Err(Error::Config(format!(
                "beta = {} must satisfy 0 < beta * {} < 1",
                config.beta,
                graph.max_out_degree()
            )));
        }
        if config.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if !(config.mu > 0.0 && config.mu.is_finite()) {
            return Err(Error::Config(format!(
                "mu = {} must be positive",
                config.mu
            )));
        }
        if config.agents == 0 && config.backend == Backend::Dtmc {
            return Err(Error::Config("agent count must be positive".into()));
        }
        if config.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        let initial = distribution_for(&config.initial, m, "initial")?;
        let target = distribution_for(&config.target, m, "target")?;
        let rates = TransitionRates::uniform(&graph, config.beta)?;
        let encoder = StateEncoder::new(config.levels, m)?;
        let actions = graph.vertices().map(|v| valid_actions(&graph, v)).collect();
        Ok(Self {
            config,
            graph,
            rates,
            initial,
            target,
            encoder,
            actions,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn rates(&self) -> &TransitionRates {
        &self.rates
    }

    pub fn target(&self) -> &MeanFieldState {
        &self.target
    }

    pub fn encoder(&self) -> StateEncoder {
        self.encoder
    }

    pub fn valid_actions(&self, v: VertexId) -> &[LeaderAction] {
        &self.actions[v.0]
    }

    /// Initial followers with a uniformly random leader vertex and a clear flag.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let vertex = VertexId(rng.random_range(0..self.graph.vertex_count()));
        self.reset_with_leader(vertex)
    }

    pub fn reset_with_leader(&self, vertex: VertexId) -> EnvState {
        let followers = match self.config.backend {
            Backend::Dtmc => Followers::Counts(apportion(self.config.agents, &self.initial)),
            Backend::MeanField => Followers::Density(self.initial.clone()),
        };
        EnvState {
            followers,
            leader: LeaderState {
                vertex,
                flag: false,
            },
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        action: LeaderAction,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        let leader = apply_leader_action(&self.graph, state.leader, action)?;
        let followers = match &state.followers {
            Followers::Counts(c) => {
                Followers::Counts(step_dtmc(&self.graph, &self.rates, leader, c, rng)?)
            }
            Followers::Density(d) => {
                Followers::Density(mean_field_step(&self.graph, &self.rates, leader, d)?)
            }
        };
        let dist = followers.distribution()?;
        let mse = mse(&dist, &self.target);
        Ok(StepOutcome {
            reward: reward(&dist, &self.target),
            mse,
            terminal: mse < self.config.mu,
            state: EnvState { followers, leader },
        })
    }

    pub fn mse_of(&self, state: &EnvState) -> Result<f64> {
        Ok(mse(&state.followers.distribution()?, &self.target))
    }

    pub fn is_terminal(&self, state: &EnvState) -> Result<bool> {
        Ok(self.mse_of(state)? < self.config.mu)
    }

    pub fn observe(&self, state: &EnvState) -> Result<DiscretizedState> {
        Ok(DiscretizedState {
            levels: state.followers.discretize(self.config.levels)?,
            leader: state.leader.vertex,
        })
    }
}

fn distribution_for(values: &[f64], m: usize, what: &str) -> Result<MeanFieldState> {
    if values.len() != m {
        return Err(Error::Config(format!(
            "{what} distribution has {} entries for {m} vertices",
            values.len()
        )));
    }
    MeanFieldState::new(values.to_vec()).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Splits `n` agents proportionally to `dist` by the largest-remainder
/// method; ties go to the lower vertex index.
pub fn apportion(n: u64, dist: &MeanFieldState) -> SwarmCounts {
    let quotas: Vec<f64> = dist.density().iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor().max(0.0) as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // Products like 0.1 * 10 can land a hair under an integer.
    let remainder = |i: usize| {
        let r = quotas[i] - counts[i] as f64;
        if r > 1.0 - 1e-9 {
            1.0
        } else {
            r
        }
    };
    order.sort_by(|&a, &b| remainder(b).total_cmp(&remainder(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    SwarmCounts::new(counts)
}

/// Line-oriented, comma-separated per-iteration trace.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, vertices: usize) -> io::Result<Self> {
        let mut header = vec![
            "iteration".to_string(),
            "leader_vertex".into(),
            "leader_flag".into(),
            "action".into(),
        ];
        header.extend((0..vertices).map(|v| format!("v{v}")));
        header.extend(["reward".into(), "mse".into(), "terminal".into()]);
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out })
    }

    pub fn record(
        &mut self,
        iteration: usize,
        action: Option<LeaderAction>,
        state: &EnvState,
        reward: f64,
        mse: f64,
        terminal: bool,
    ) -> io::Result<()> {
        let mut fields = vec![
            iteration.to_string(),
            state.leader.vertex.to_string(),
            u8::from(state.leader.flag).to_string(),
            action.map_or_else(String::new, |a| a.name().to_string()),
        ];
        fields.extend(state.followers.values());
        fields.extend([reward.to_string(), mse.to_string(), terminal.to_string()]);
        writeln!(self.out, "{}", fields.join(","))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use LeaderAction::*;

    fn dist(v: &[f64]) -> MeanFieldState {
        MeanFieldState::new(v.to_vec()).unwrap()
    }

    #[test]
    fn actions_on_corners() {
        let g = Graph::grid(2, 2).unwrap();
        assert_eq!(valid_actions(&g, VertexId(0)), vec![Right, Down, Stay]);
        assert_eq!(valid_actions(&g, VertexId(3)), vec![Left, Up, Stay]);
        let line = Graph::grid(1, 2).unwrap();
        assert_eq!(valid_actions(&line, VertexId(0)), vec![Right, Stay]);
        assert_eq!(valid_actions(&line, VertexId(1)), vec![Left, Stay]);
    }

    #[test]
    fn action_count_matches_neighbors() {
        let g = Graph::grid(3, 4).unwrap();
        for v in g.vertices() {
            let acts = valid_actions(&g, v);
            assert!(acts.contains(&Stay));
            assert_eq!(acts.len(), 1 + g.out_neighbors(v).unwrap().len());
            for a in acts.into_iter().filter(|a| *a != Stay) {
                let next = apply_leader_action(
                    &g,
                    LeaderState {
                        vertex: v,
                        flag: true,
                    },
                    a,
                )
                .unwrap();
                assert!(g.has_edge(v, next.vertex));
            }
        }
    }

    #[test]
    fn leader_transitions() {
        let g = Graph::grid(2, 2).unwrap();
        assert_eq!(
            apply_leader_action(&g, LeaderState::new(0, false), Stay).unwrap(),
            LeaderState::new(0, true)
        );
        assert_eq!(
            apply_leader_action(&g, LeaderState::new(0, true), Right).unwrap(),
            LeaderState::new(1, false)
        );
        assert!(matches!(
            apply_leader_action(&g, LeaderState::new(3, false), Right),
            Err(Error::InvalidAction {
                action: "Right",
                vertex: 3
            })
        ));
    }

    #[test]
    fn reward_examples() {
        let a = dist(&[0.4, 0.1, 0.1, 0.4]);
        let b = dist(&[0.1, 0.4, 0.4, 0.1]);
        assert_eq!(reward(&a, &a), 0.0);
        assert!((reward(&a, &b) + 0.36).abs() < 1e-15);
        assert_eq!(reward(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])), -2.0);
    }

    #[test]
    fn mse_examples() {
        let a = dist(&[0.4, 0.1, 0.1, 0.4]);
        let b = dist(&[0.1, 0.4, 0.4, 0.1]);
        assert_eq!(mse(&a, &a), 0.0);
        assert!((mse(&a, &b) - 0.09).abs() < 1e-15);
        let one_off = dist(&[0.2, 0.3, 0.4, 0.1]);
        let exact = dist(&[0.1, 0.4, 0.4, 0.1]);
        assert!((mse(&one_off, &exact) - 0.005).abs() < 1e-15);
        assert!((reward(&a, &b) + 4.0 * mse(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(&dist(&[0.24, 0.76]), 10), vec![2, 8]);
        assert_eq!(discretize(&dist(&[0.0, 1.0]), 10), vec![0, 10]);
        assert_eq!(
            discretize(&dist(&[0.4, 0.1, 0.1, 0.4]), 20),
            vec![8, 2, 2, 8]
        );
        // halves round away from zero
        assert_eq!(discretize(&dist(&[0.25, 0.75]), 2), vec![1, 2]);
        let counts = SwarmCounts::new(vec![24, 76]);
        assert_eq!(discretize_counts(&counts, 10).unwrap(), vec![2, 8]);
        let counts = SwarmCounts::new(vec![25, 35, 40]);
        assert_eq!(discretize_counts(&counts, 10).unwrap(), vec![3, 4, 4]);
    }

    #[test]
    fn encode_examples() {
        let enc = StateEncoder::new(10, 4).unwrap();
        let s = |levels: Vec<u32>, leader| DiscretizedState {
            levels,
            leader: VertexId(leader),
        };
        assert_eq!(enc.encode(&s(vec![0, 0, 0, 0], 0)).unwrap(), 0);
        assert_eq!(enc.encode(&s(vec![1, 0, 0, 0], 0)).unwrap(), 4);
        assert_eq!(enc.encode(&s(vec![0, 1, 0, 0], 3)).unwrap(), 3 + 4 * 11);
        assert!(enc.encode(&s(vec![11, 0, 0, 0], 0)).is_err());
        assert!(enc.encode(&s(vec![0, 0, 0, 0], 4)).is_err());
        assert!(enc.encode(&s(vec![0, 0, 0], 0)).is_err());
        assert_eq!(enc.state_count(), 11usize.pow(4) * 4);
        assert!(enc.decode(enc.state_count()).is_err());
    }

    #[test]
    fn apportion_examples() {
        let d = dist(&[0.4, 0.1, 0.1, 0.4]);
        assert_eq!(apportion(100, &d).counts(), &[40, 10, 10, 40]);
        assert_eq!(apportion(10, &d).counts(), &[4, 1, 1, 4]);
        assert_eq!(apportion(7, &dist(&[0.5, 0.5])).counts(), &[4, 3]);
        assert_eq!(apportion(5, &dist(&[1.0 / 3.0; 3])).total(), 5);
    }

    #[test]
    fn reset_uses_initial_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let env = EnvConfig::default().build().unwrap();
        let s = env.reset(&mut rng);
        assert_eq!(s.followers.counts().unwrap().counts(), &[40, 10, 10, 40]);
        assert!(!s.leader.flag);
        let mf = EnvConfig {
            backend: Backend::MeanField,
            ..EnvConfig::default()
        }
        .build()
        .unwrap();
        let s = mf.reset(&mut rng);
        assert_eq!(s.followers, Followers::Density(dist(&[0.4, 0.1, 0.1, 0.4])));
    }

    #[test]
    fn reset_leader_is_uniform() {
        let env = EnvConfig::default().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = [0usize; 4];
        for _ in 0..40_000 {
            hits[env.reset(&mut rng).leader.vertex.0] += 1;
        }
        assert!(
            hits.iter().all(|&h| (9_500..10_500).contains(&h)),
            "{hits:?}"
        );
    }

    #[test]
    fn mean_field_stay_step() {
        let env = EnvConfig {
            backend: Backend::MeanField,
            ..EnvConfig::default()
        }
        .build()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = env.reset_with_leader(VertexId(0));
        let out = env.step(&s, Stay, &mut rng).unwrap();
        let Followers::Density(d) = &out.state.followers else {
            panic!("expected densities");
        };
        for (x, y) in d.density().iter().zip([0.32, 0.14, 0.14, 0.40]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((out.reward + 0.2736).abs() < 1e-12);
        assert!(!out.terminal);
        assert_eq!(out.state.leader, LeaderState::new(0, true));
    }

    #[test]
    fn step_at_target_is_terminal() {
        let env = EnvConfig {
            initial: vec![0.1, 0.4, 0.4, 0.1],
            ..EnvConfig::default()
        }
        .build()
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = env.reset_with_leader(VertexId(0));
        assert!(env.is_terminal(&s).unwrap());
        let out = env.step(&s, Right, &mut rng).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.terminal);
    }

    #[test]
    fn invalid_configs() {
        let bad = |cfg: EnvConfig| {
            assert!(matches!(
                cfg.build(),
                Err(Error::Config(_)) | Err(Error::InvalidDimension { .. })
            ))
        };
        bad(EnvConfig {
            beta: 0.5,
            ..EnvConfig::default()
        });
        bad(EnvConfig {
            levels: 0,
            ..EnvConfig::default()
        });
        bad(EnvConfig {
            mu: 0.0,
            ..EnvConfig::default()
        });
        bad(EnvConfig {
            initial: vec![0.5, 0.5],
            ..EnvConfig::default()
        });
        bad(EnvConfig {
            target: vec![0.5, 0.5, 0.5, 0.5],
            ..EnvConfig::default()
        });
        bad(EnvConfig {
            rows: 0,
            ..EnvConfig::default()
        });
    }

    #[test]
    fn trace_format() {
        let env = EnvConfig::default().build().unwrap();
        let s = env.reset_with_leader(VertexId(2));
        let mut w = TraceWriter::new(Vec::new(), 4).unwrap();
        w.record(0, None, &s, -0.36, 0.09, false).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(
            text,
            "iteration,leader_vertex,leader_flag,action,v0,v1,v2,v3,reward,mse,terminal\n\
             0,2,0,,40,10,10,40,-0.36,0.09,false\n"
        );
    }
}
