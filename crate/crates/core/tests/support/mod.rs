//! Independent reference computations shared by the integration tests.
//! Nothing here calls the propagators or learners it is used to check.

#![allow(dead_code)]

use swarm_herding::{Graph, LeaderAction, LeaderState};

/// `sum_e u_e B_e` assembled edge by edge; `B_e` has a single 1 at
/// row `target(e)`, column `source(e)`.
pub fn kolmogorov_matrix(graph: &Graph, beta: f64, leader: LeaderState) -> Vec<Vec<f64>> {
    let m = graph.vertex_count();
    let rate = |source: usize| {
        if leader.flag && leader.vertex.0 == source {
            beta
        } else {
            0.0
        }
    };
    let mut a = vec![vec![0.0; m]; m];
    for e in graph.edges() {
        let (s, t) = (e.source.0, e.target.0);
        let u = if s != t {
            rate(s)
        } else {
            let leaving = graph
                .edges()
                .iter()
                .filter(|f| f.source.0 == s && f.target.0 != s)
                .map(|f| rate(f.source.0))
                .sum::<f64>();
            1.0 - leaving
        };
        a[t][s] += u;
    }
    a
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Value iteration on the discretized state space of a 1x2 grid.
///
/// A cell is `(round(D s_0), round(D s_1), leader)`. Its transition kernel
/// is the empirical image of every non-terminal lattice point
/// `s_0 = i / lattice` inside the cell under one mean-field step, so each
/// cell behaves like a uniform mixture over the states it aggregates.
pub struct LineOracle {
    pub levels: u32,
    pub beta: f64,
    pub mu: f64,
    pub gamma: f64,
    pub target0: f64,
    pub lattice: usize,
}

pub struct OraclePolicy {
    /// Optimal action per cell index `leader + 2 * (F0 + (D+1) F1)`; `None`
    /// for cells with no non-terminal lattice point.
    pub actions: Vec<Option<LeaderAction>>,
    pub values: Vec<f64>,
    /// Non-terminal successor cells, per cell.
    pub successors: Vec<Vec<usize>>,
}

impl LineOracle {
    fn cell(&self, s0: f64, leader: usize) -> usize {
        let d = self.levels as f64;
        let f0 = (d * s0).round() as usize;
        let f1 = (d * (1.0 - s0)).round() as usize;
        leader + 2 * (f0 + (self.levels as usize + 1) * f1)
    }

    fn terminal(&self, s0: f64) -> bool {
        let e = s0 - self.target0;
        // mse over two vertices: (e^2 + e^2) / 2
        e * e < self.mu
    }

    fn actions(leader: usize) -> [LeaderAction; 2] {
        if leader == 0 {
            [LeaderAction::Right, LeaderAction::Stay]
        } else {
            [LeaderAction::Left, LeaderAction::Stay]
        }
    }

    /// One step of the two-vertex mean-field model, written out by hand.
    fn step(&self, s0: f64, leader: usize, action: LeaderAction) -> (f64, usize) {
        match action {
            LeaderAction::Stay if leader == 0 => (s0 - self.beta * s0, 0),
            LeaderAction::Stay => (s0 + self.beta * (1.0 - s0), 1),
            LeaderAction::Right => (s0, 1),
            LeaderAction::Left => (s0, 0),
            _ => unreachable!(),
        }
    }

    pub fn solve(&self) -> OraclePolicy {
        let cells = (self.levels as usize + 1).pow(2) * 2;
        // cell -> action -> one (next cell, terminal, reward) per lattice point
        let mut samples: Vec<[Vec<(usize, bool, f64)>; 2]> =
            (0..cells).map(|_| [Vec::new(), Vec::new()]).collect();
        for i in 0..=self.lattice {
            let s0 = i as f64 / self.lattice as f64;
            if self.terminal(s0) {
                continue;
            }
            for leader in 0..2 {
                let c = self.cell(s0, leader);
                for (k, a) in Self::actions(leader).into_iter().enumerate() {
                    let (n0, nl) = self.step(s0, leader, a);
                    let e = n0 - self.target0;
                    let reward = -2.0 * e * e;
                    samples[c][k].push((self.cell(n0, nl), self.terminal(n0), reward));
                }
            }
        }
        let mut values = vec![0.0; cells];
        let mut q = vec![[f64::NEG_INFINITY; 2]; cells];
        loop {
            let mut delta = 0.0f64;
            for c in 0..cells {
                if samples[c][0].is_empty() {
                    continue;
                }
                for k in 0..2 {
                    let n = samples[c][k].len() as f64;
                    q[c][k] = samples[c][k]
                        .iter()
                        .map(|&(next, term, r)| {
                            r + if term { 0.0 } else { self.gamma * values[next] }
                        })
                        .sum::<f64>()
                        / n;
                }
                let v = q[c][0].max(q[c][1]);
                delta = delta.max((v - values[c]).abs());
                values[c] = v;
            }
            if delta < 1e-13 {
                break;
            }
        }
        let actions = (0..cells)
            .map(|c| {
                if samples[c][0].is_empty() {
                    return None;
                }
                let acts = Self::actions(c % 2);
                // acts is in canonical order, so ties keep the earlier one
                Some(if q[c][1] > q[c][0] { acts[1] } else { acts[0] })
            })
            .collect();
        let successors = samples
            .iter()
            .map(|per_action| {
                let mut next: Vec<usize> = per_action
                    .iter()
                    .flatten()
                    .filter(|(_, term, _)| !term)
                    .map(|&(n, _, _)| n)
                    .collect();
                next.sort_unstable();
                next.dedup();
                next
            })
            .collect();
        OraclePolicy {
            actions,
            values,
            successors,
        }
    }

    /// Cells reachable through non-terminal transitions from `starts`.
    pub fn reachable(&self, policy: &OraclePolicy, starts: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; policy.successors.len()];
        let mut stack: Vec<usize> = starts.to_vec();
        for &s in starts {
            seen[s] = true;
        }
        while let Some(c) = stack.pop() {
            for &n in &policy.successors[c] {
                if !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        (0..seen.len()).filter(|&c| seen[c]).collect()
    }

    pub fn start_cells(&self, initial0: f64) -> Vec<usize> {
        vec![self.cell(initial0, 0), self.cell(initial0, 1)]
    }
}
