use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimensions {rows}x{cols}")]
    InvalidDimension { rows: usize, cols: usize },

    #[error("vertex {vertex} out of range for graph with {vertices} vertices")]
    VertexOutOfRange { vertex: usize, vertices: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid transition rates: {0}")]
    InvalidRates(String),

    #[error("invalid follower state: {0}")]
    InvalidState(String),

    #[error("swarm has no agents")]
    EmptySwarm,

    #[error("action {action} is not available at vertex {vertex}")]
    InvalidAction { action: &'static str, vertex: usize },

    #[error("state encoding error: {0}")]
    Encoding(String),

    #[error("q-table index out of range: {0}")]
    Index(String),

    #[error("no valid actions to choose from")]
    NoAction,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("incompatible q-table: {0}")]
    Compatibility(String),

    #[error("malformed q-table file: {0}")]
    Format(String),

    #[error("truncated q-table payload: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}
