//! Directed configuration graphs for leader and follower agents.
//!
//! Every vertex carries a self-edge and the graph is strongly connected.
//! Outgoing neighbor lists exclude the self-edge and are kept sorted so
//! that multinomial category order, action order and table layout are
//! identical across runs.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

/// Index of a vertex, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

impl VertexId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub source: VertexId,
    pub target: VertexId,
}

impl Edge {
    pub fn new(source: usize, target: usize) -> Self {
        Self {
            source: VertexId(source),
            target: VertexId(target),
        }
    }

    pub fn is_self_edge(&self) -> bool {
        self.source == self.target
    }
}

/// Row/column layout of a grid graph in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn position(&self, v: VertexId) -> (usize, usize) {
        (v.0 / self.cols, v.0 % self.cols)
    }

    pub fn vertex(&self, row: usize, col: usize) -> VertexId {
        VertexId(row * self.cols + col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<VertexId>>,
    grid: Option<GridShape>,
}

impl Graph {
    /// Builds a graph from an explicit edge list. Missing self-edges are
    /// added; duplicates, dangling endpoints and graphs that are not
    /// strongly connected are rejected.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let graph = Self::from_edges_unchecked(vertex_count, edges)?;
        if !graph.is_strongly_connected() {
            return Err(Error::InvalidGraph(
                "graph is not strongly connected".into(),
            ));
        }
        Ok(graph)
    }

    /// Like [`Graph::from_edges`] but skips the connectivity requirement.
    pub fn from_edges_unchecked(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut set = BTreeSet::new();
        for &(s, t) in edges {
            for v in [s, t] {
                if v >= vertex_count {
                    return Err(Error::VertexOutOfRange {
                        vertex: v,
                        vertices: vertex_count,
                    });
                }
            }
            if !set.insert(Edge::new(s, t)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({s},{t})")));
            }
        }
        for v in 0..vertex_count {
            set.insert(Edge::new(v, v));
        }
        let mut neighbors = vec![Vec::new(); vertex_count];
        for e in set.iter().filter(|e| !e.is_self_edge()) {
            neighbors[e.source.0].push(e.target);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            vertex_count,
            edges: set.into_iter().collect(),
            neighbors,
            grid: None,
        })
    }

    /// Bidirected `rows x cols` lattice with a self-edge at every vertex.
    /// Vertex `r * cols + c` sits at row `r`, column `c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(Error::InvalidDimension { rows, cols });
        }
        let shape = GridShape { rows, cols };
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = shape.vertex(r, c).0;
                if c + 1 < cols {
                    let w = shape.vertex(r, c + 1).0;
                    edges.push((v, w));
                    edges.push((w, v));
                }
                if r + 1 < rows {
                    let w = shape.vertex(r + 1, c).0;
                    edges.push((v, w));
                    edges.push((w, v));
                }
            }
        }
        let mut graph = Self::from_edges(rows * cols, &edges)?;
        graph.grid = Some(shape);
        Ok(graph)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn grid_shape(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_count).map(VertexId)
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.0 < self.vertex_count {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v.0,
                vertices: self.vertex_count,
            })
        }
    }

    /// Non-self targets of edges leaving `v`, ascending.
    pub fn out_neighbors(&self, v: VertexId) -> Result<&[VertexId]> {
        self.check_vertex(v)?;
        Ok(&self.neighbors[v.0])
    }

    pub fn max_out_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, source: VertexId, target: VertexId) -> bool {
        self.edges.binary_search(&Edge { source, target }).is_ok()
    }

    /// True iff every vertex reaches every other one along directed edges.
    pub fn is_strongly_connected(&self) -> bool {
        let forward = self.reachable_from(VertexId(0), false);
        let backward = self.reachable_from(VertexId(0), true);
        forward.iter().all(|&r| r) && backward.iter().all(|&r| r)
    }

    fn reachable_from(&self, start: VertexId, reversed: bool) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count];
        let mut stack = vec![start.0];
        seen[start.0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                let (from, to) = if reversed {
                    (e.target.0, e.source.0)
                } else {
                    (e.source.0, e.target.0)
                };
                if from == v && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    }
}
