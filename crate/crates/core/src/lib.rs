//! Leader-based herding of a follower swarm on a graph.
//!
//! Followers sit on the vertices of a strongly connected graph and only move
//! when a leader parked on their vertex repels them. A tabular SARSA or
//! Q-Learning agent learns where the leader should go and when it should
//! repel, so that the follower distribution reaches a target distribution
//! in as few iterations as possible.

pub mod dynamics;
pub mod environment;
pub mod error;
pub mod graph;
pub mod harness;
pub mod learner;

pub use dynamics::{
    empirical_distribution, follower_transition_probs, mean_field_step, step_dtmc, MeanFieldState,
    SwarmCounts, TransitionRates,
};
pub use environment::{
    apply_leader_action, discretize, mse, reward, valid_actions, Backend, DiscretizedState,
    EnvConfig, EnvState, Environment, Followers, LeaderAction, LeaderState, StateEncoder,
    StepOutcome, TraceWriter,
};
pub use error::{Error, Result};
pub use graph::{Edge, Graph, GridShape, VertexId};
pub use harness::{
    evaluate, sweep, train, EvalConfig, Evaluation, RunRecord, Summary, SweepRow, SweepSpec,
    TrainConfig, TrainOutput,
};
pub use learner::{Algorithm, LearnerConfig, QTable};
