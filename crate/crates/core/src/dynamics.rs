//! Follower population propagators.
//!
//! Two views of the same process: [`step_dtmc`] moves integer agent counts
//! with a multinomial draw, [`mean_field_step`] moves probability mass
//! deterministically. Followers only leave the vertex occupied by a leader
//! whose repel flag is set.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::environment::LeaderState;
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

/// Absolute tolerance for simplex membership.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Agent count per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwarmCounts {
    counts: Vec<u64>,
    total: u64,
}

impl SwarmCounts {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn empirical_distribution(&self) -> Result<MeanFieldState> {
        empirical_distribution(self)
    }
}

/// A point on the probability simplex over the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    density: Vec<f64>,
}

impl MeanFieldState {
    pub fn new(density: Vec<f64>) -> Result<Self> {
        check_simplex(&density)?;
        Ok(Self { density })
    }

    pub fn uniform(vertex_count: usize) -> Self {
        Self {
            density: vec![1.0 / vertex_count as f64; vertex_count],
        }
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.density.len()
    }

    pub fn is_empty(&self) -> bool {
        self.density.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.density
    }
}

fn check_simplex(density: &[f64]) -> Result<()> {
    if density.is_empty() {
        return Err(Error::InvalidState("empty density".into()));
    }
    if let Some((v, x)) = density
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || **x < -SIMPLEX_TOLERANCE)
    {
        return Err(Error::InvalidState(format!("density[{v}] = {x}")));
    }
    let sum: f64 = density.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidState(format!("density sums to {sum}")));
    }
    Ok(())
}

/// Per-edge repulsion rates, aligned with [`Graph::out_neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRates {
    rates: Vec<Vec<f64>>,
}

impl TransitionRates {
    /// Same rate on every non-self edge.
    pub fn uniform(graph: &Graph, beta: f64) -> Result<Self> {
        let rates = graph
            .vertices()
            .map(|v| vec![beta; graph.out_neighbors(v).map(<[_]>::len).unwrap_or(0)])
            .collect();
        Self::from_per_vertex(graph, rates)
    }

    /// `rates[v][i]` is the rate along the edge to `out_neighbors(v)[i]`.
    pub fn from_per_vertex(graph: &Graph, rates: Vec<Vec<f64>>) -> Result<Self> {
        if rates.len() != graph.vertex_count() {
            return Err(Error::InvalidRates(format!(
                "expected rates for {} vertices, got {}",
                graph.vertex_count(),
                rates.len()
            )));
        }
        for v in graph.vertices() {
            let row = &rates[v.0];
            let n = graph.out_neighbors(v)?.len();
            if row.len() != n {
                return Err(Error::InvalidRates(format!(
                    "vertex {v} has {n} out-edges but {} rates",
                    row.len()
                )));
            }
            if let Some(b) = row.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
                return Err(Error::InvalidRates(format!(
                    "rate {b} at vertex {v} is not positive"
                )));
            }
            let sum: f64 = row.iter().sum();
            if sum >= 1.0 {
                return Err(Error::InvalidRates(format!(
                    "rates leaving vertex {v} sum to {sum}, must be < 1"
                )));
            }
        }
        Ok(Self { rates })
    }

    pub fn at(&self, v: VertexId) -> &[f64] {
        &self.rates[v.0]
    }
}

/// Probability of each follower move out of `v`, over `out_neighbors(v)`
/// followed by `v` itself.
pub fn follower_transition_probs(
    graph: &Graph,
    rates: &TransitionRates,
    leader: LeaderState,
    v: VertexId,
) -> Result<Vec<f64>> {
    let neighbors = graph.out_neighbors(v)?;
    let mut probs = vec![0.0; neighbors.len() + 1];
    if leader.repels_at(v) {
        let row = rates.at(v);
        let moving: f64 = row.iter().sum();
        if moving >= 1.0 {
            return Err(Error::InvalidRates(format!(
                "rates at vertex {v} sum to {moving}"
            )));
        }
        probs[..row.len()].copy_from_slice(row);
        probs[row.len()] = 1.0 - moving;
    } else {
        probs[neighbors.len()] = 1.0;
    }
    Ok(probs)
}

/// One stochastic step of the agent-count chain. Agents at the leader's
/// vertex are split among its neighbors and itself by sequential binomial
/// draws in canonical neighbor order.
pub fn step_dtmc<R: Rng + ?Sized>(
    graph: &Graph,
    rates: &TransitionRates,
    leader: LeaderState,
    state: &SwarmCounts,
    rng: &mut R,
) -> Result<SwarmCounts> {
    if state.len() != graph.vertex_count() {
        return Err(Error::InvalidState(format!(
            "{} counts for {} vertices",
            state.len(),
            graph.vertex_count()
        )));
    }
    let mut next = state.clone();
    if !leader.flag {
        return Ok(next);
    }
    let v = leader.vertex;
    let probs = follower_transition_probs(graph, rates, leader, v)?;
    let neighbors = graph.out_neighbors(v)?;
    let mut remaining = state.counts[v.0];
    let mut mass_left = 1.0;
    for (target, &p) in neighbors.iter().zip(&probs) {
        if remaining == 0 {
            break;
        }
        let conditional = (p / mass_left).clamp(0.0, 1.0);
        let moved = Binomial::new(remaining, conditional)
            .map_err(|e| Error::InvalidRates(e.to_string()))?
            .sample(rng);
        next.counts[target.0] += moved;
        remaining -= moved;
        mass_left -= p;
    }
    next.counts[v.0] = remaining;
    Ok(next)
}

/// Deterministic propagation of the follower density by one step.
pub fn mean_field_step(
    graph: &Graph,
    rates: &TransitionRates,
    leader: LeaderState,
    state: &MeanFieldState,
) -> Result<MeanFieldState> {
    check_simplex(&state.density)?;
    if state.len() != graph.vertex_count() {
        return Err(Error::InvalidState(format!(
            "{} densities for {} vertices",
            state.len(),
            graph.vertex_count()
        )));
    }
    let mut next = state.density.clone();
    if !leader.flag {
        return Ok(MeanFieldState { density: next });
    }
    let v = leader.vertex;
    let probs = follower_transition_probs(graph, rates, leader, v)?;
    let mass = state.density[v.0];
    for (target, p) in graph.out_neighbors(v)?.iter().zip(&probs) {
        next[target.0] += p * mass;
    }
    next[v.0] = probs[probs.len() - 1] * mass;
    Ok(MeanFieldState { density: next })
}

/// Fraction of agents at each vertex.
pub fn empirical_distribution(state: &SwarmCounts) -> Result<MeanFieldState> {
    if state.total == 0 {
        return Err(Error::EmptySwarm);
    }
    let n = state.total as f64;
    Ok(MeanFieldState {
        density: state.counts.iter().map(|&c| c as f64 / n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} != {b:?}");
        }
    }

    fn grid() -> Graph {
        Graph::grid(2, 2).unwrap()
    }

    fn leader(v: usize, flag: bool) -> LeaderState {
        LeaderState {
            vertex: VertexId(v),
            flag,
        }
    }

    #[test]
    fn transition_probs_when_repelling() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let p = follower_transition_probs(&g, &rates, leader(0, true), VertexId(0)).unwrap();
        assert_close(&p, &[0.1, 0.1, 0.8], 1e-15);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn transition_probs_when_idle_or_elsewhere() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let p = follower_transition_probs(&g, &rates, leader(0, false), VertexId(0)).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
        let p = follower_transition_probs(&g, &rates, leader(1, true), VertexId(0)).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn rates_must_sum_below_one() {
        let g = grid();
        assert!(matches!(
            TransitionRates::uniform(&g, 0.5),
            Err(Error::InvalidRates(_))
        ));
        assert!(TransitionRates::uniform(&g, 0.0).is_err());
        assert!(TransitionRates::uniform(&g, 0.49).is_ok());
    }

    #[test]
    fn dtmc_idle_leader_is_identity() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let s = SwarmCounts::new(vec![40, 10, 10, 40]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_dtmc(&g, &rates, leader(0, false), &s, &mut rng).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn dtmc_mean_matches_expectation() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let s = SwarmCounts::new(vec![40, 10, 10, 40]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let mut sums = [0u64; 4];
        for _ in 0..draws {
            let next = step_dtmc(&g, &rates, leader(0, true), &s, &mut rng).unwrap();
            assert_eq!(next.total(), 100);
            assert_eq!(next.counts()[3], 40);
            for (acc, c) in sums.iter_mut().zip(next.counts()) {
                *acc += c;
            }
        }
        let means: Vec<f64> = sums.iter().map(|&x| x as f64 / draws as f64).collect();
        assert_close(&means, &[32.0, 14.0, 14.0, 40.0], 0.1);
    }

    #[test]
    fn mean_field_hand_example() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let s = MeanFieldState::uniform(4);
        let next = mean_field_step(&g, &rates, leader(2, true), &s).unwrap();
        assert_close(next.density(), &[0.275, 0.25, 0.20, 0.275], 1e-15);
    }

    #[test]
    fn mean_field_idle_is_identity() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        let s = MeanFieldState::new(vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        for v in 0..4 {
            let next = mean_field_step(&g, &rates, leader(v, false), &s).unwrap();
            assert_eq!(next, s);
        }
    }

    #[test]
    fn mean_field_extreme_rate_stays_on_simplex() {
        // beta * 2 neighbors = 1 - 1/M
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.375).unwrap();
        let s = MeanFieldState::uniform(4);
        let next = mean_field_step(&g, &rates, leader(0, true), &s).unwrap();
        assert!((next.density().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(next.density().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn mean_field_rejects_off_simplex() {
        let g = grid();
        let rates = TransitionRates::uniform(&g, 0.1).unwrap();
        assert!(MeanFieldState::new(vec![0.5, 0.5, 0.5, 0.0]).is_err());
        assert!(MeanFieldState::new(vec![1.1, -0.1, 0.0, 0.0]).is_err());
        let bad = MeanFieldState {
            density: vec![0.3; 4],
        };
        assert!(matches!(
            mean_field_step(&g, &rates, leader(0, true), &bad),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn empirical_distribution_examples() {
        let d = SwarmCounts::new(vec![40, 10, 10, 40])
            .empirical_distribution()
            .unwrap();
        assert_eq!(d.density(), &[0.4, 0.1, 0.1, 0.4]);
        let d = SwarmCounts::new(vec![10, 0, 0, 0])
            .empirical_distribution()
            .unwrap();
        assert_eq!(d.density(), &[1.0, 0.0, 0.0, 0.0]);
        let d = SwarmCounts::new(vec![1, 1, 1, 1])
            .empirical_distribution()
            .unwrap();
        assert_eq!(d.density(), &[0.25; 4]);
        assert!(matches!(
            SwarmCounts::new(vec![0, 0]).empirical_distribution(),
            Err(Error::EmptySwarm)
        ));
    }
}
