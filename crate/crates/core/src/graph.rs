//! Communication graphs and the structural quantities the protocols and the
//! bound formulas depend on: power graphs, hop distances, clique covers and
//! dominating sets.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Resampling budget when a connected Erdős–Rényi graph is requested.
pub const CONNECT_ATTEMPTS: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one vertex")]
    Empty,
    #[error("edge probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("no connected graph after {0} attempts")]
    NotConnected(usize),
    #[error("hop radius must be at least 1, got {0}")]
    InvalidGamma(usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge ({0}, {1}) out of range or a self-loop")]
    BadEdge(usize, usize),
}

/// Graph families the simulator can generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    ErdosRenyi { n: usize, p: f64 },
    Complete { n: usize },
    Path { n: usize },
    /// Star centred on vertex 0.
    Star { n: usize },
    Cycle { n: usize },
}

impl GraphSpec {
    pub fn num_agents(&self) -> usize {
        match *self {
            GraphSpec::ErdosRenyi { n, .. }
            | GraphSpec::Complete { n }
            | GraphSpec::Path { n }
            | GraphSpec::Star { n }
            | GraphSpec::Cycle { n } => n,
        }
    }
}

/// Undirected simple graph on agents `0..n`. Self-loops are never stored;
/// an agent always observes its own pulls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n || a == b {
                return Err(GraphError::BadEdge(a, b));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors: adj })
    }

    pub fn complete(n: usize) -> Self {
        Self {
            neighbors: (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Hop distances from `src`; `None` marks unreachable vertices.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_agents()];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.num_agents() == 0 || self.bfs_distances(0).iter().all(Option::is_some)
    }

    /// Adjacency list text, one line per vertex: `i: j k l`.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = String::new();
        for (i, list) in self.neighbors.iter().enumerate() {
            let _ = write!(out, "{i}:");
            for j in list {
                let _ = write!(out, " {j}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn generate_topology<R: Rng + ?Sized>(
    spec: &GraphSpec,
    rng: &mut R,
    require_connected: bool,
) -> Result<Topology, GraphError> {
    let n = spec.num_agents();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let edges: Vec<(usize, usize)> = match *spec {
        GraphSpec::ErdosRenyi { p, .. } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(GraphError::InvalidProbability(p));
            }
            let attempts = if require_connected { CONNECT_ATTEMPTS } else { 1 };
            for _ in 0..attempts {
                let g = erdos_renyi(n, p, rng);
                if !require_connected || g.is_connected() {
                    return Ok(g);
                }
            }
            return Err(GraphError::NotConnected(CONNECT_ATTEMPTS));
        }
        GraphSpec::Complete { .. } => return Ok(Topology::complete(n)),
        GraphSpec::Path { .. } => (1..n).map(|i| (i - 1, i)).collect(),
        GraphSpec::Star { .. } => (1..n).map(|i| (0, i)).collect(),
        GraphSpec::Cycle { .. } => {
            let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            if n > 2 {
                e.push((n - 1, 0));
            }
            e
        }
    };
    Topology::from_edges(n, &edges)
}

fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Topology {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Topology::from_edges(n, &edges).expect("generated edges are in range")
}

/// Structural summary of `G` at hop radius `gamma`.
#[derive(Debug, Clone)]
pub struct GraphAnalysis {
    pub gamma: usize,
    /// The power graph `G_gamma`.
    pub power: Topology,
    /// All-pairs hop distances in `G`.
    pub distances: Vec<Vec<Option<usize>>>,
    /// Degree of each agent in `G_gamma`.
    pub degrees_gamma: Vec<usize>,
    pub clique_cover: Vec<Vec<usize>>,
    pub dominating_set: Vec<usize>,
    /// Largest finite distance.
    pub diameter: usize,
    pub connected: bool,
}

impl GraphAnalysis {
    pub fn num_agents(&self) -> usize {
        self.power.num_agents()
    }

    /// `d_gamma + 1` for every agent.
    pub fn degrees_gamma_plus(&self) -> Vec<usize> {
        self.degrees_gamma.iter().map(|d| d + 1).collect()
    }

    /// Number of other agents within `radius` hops of each agent.
    pub fn degrees_within(&self, radius: usize) -> Vec<usize> {
        self.distances
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|d| matches!(d, Some(x) if *x >= 1 && *x <= radius))
                    .count()
            })
            .collect()
    }

    /// Greedy upper bound on the clique covering number of `G_gamma`.
    pub fn chi_hat(&self) -> usize {
        self.clique_cover.len()
    }

    /// Greedy upper bound on the domination number of `G_gamma`.
    pub fn gammabar_hat(&self) -> usize {
        self.dominating_set.len()
    }
}

pub fn all_pairs_distances(g: &Topology) -> Vec<Vec<Option<usize>>> {
    (0..g.num_agents()).map(|s| g.bfs_distances(s)).collect()
}

pub fn power_graph(g: &Topology, distances: &[Vec<Option<usize>>], gamma: usize) -> Topology {
    let neighbors = distances
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, d)| matches!(d, Some(x) if *x >= 1 && *x <= gamma))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    debug_assert_eq!(distances.len(), g.num_agents());
    Topology { neighbors }
}

pub fn analyze(g: &Topology, gamma: usize) -> Result<GraphAnalysis, GraphError> {
    if gamma < 1 {
        return Err(GraphError::InvalidGamma(gamma));
    }
    let distances = all_pairs_distances(g);
    let power = power_graph(g, &distances, gamma);
    let diameter = distances
        .iter()
        .flat_map(|row| row.iter().flatten())
        .copied()
        .max()
        .unwrap_or(0);
    let connected = distances.iter().all(|row| row.iter().all(Option::is_some));
    Ok(GraphAnalysis {
        gamma,
        degrees_gamma: power.degrees(),
        clique_cover: greedy_clique_cover(&power),
        dominating_set: greedy_dominating_set(&power),
        power,
        distances,
        diameter,
        connected,
    })
}

/// Partitions the vertices into cliques: seed each clique with the
/// lowest-index uncovered vertex and grow it with the lowest-index uncovered
/// vertices adjacent to every member.
pub fn greedy_clique_cover(g: &Topology) -> Vec<Vec<usize>> {
    let n = g.num_agents();
    let mut covered = vec![false; n];
    let mut cover = Vec::new();
    for seed in 0..n {
        if covered[seed] {
            continue;
        }
        let mut clique = vec![seed];
        covered[seed] = true;
        for &v in g.neighbors(seed) {
            if !covered[v] && clique.iter().all(|&u| g.is_adjacent(u, v)) {
                clique.push(v);
                covered[v] = true;
            }
        }
        cover.push(clique);
    }
    cover
}

/// Greedy max-coverage dominating set over closed neighbourhoods; ties go to
/// the lowest index.
pub fn greedy_dominating_set(g: &Topology) -> Vec<usize> {
    let n = g.num_agents();
    let mut dominated = vec![false; n];
    let mut remaining = n;
    let mut set = Vec::new();
    while remaining > 0 {
        let gain = |v: usize| {
            usize::from(!dominated[v]) + g.neighbors(v).iter().filter(|&&u| !dominated[u]).count()
        };
        let best = (0..n)
            .map(|v| (v, gain(v)))
            .fold((0, 0), |acc, (v, c)| if c > acc.1 { (v, c) } else { acc })
            .0;
        set.push(best);
        for u in std::iter::once(best).chain(g.neighbors(best).iter().copied()) {
            if !dominated[u] {
                dominated[u] = true;
                remaining -= 1;
            }
        }
    }
    set.sort_unstable();
    set
}

/// Each agent's leader and its hop distance in `G` to that leader. Leaders
/// map to themselves at distance 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeaderAssignment {
    pub leader_of: Vec<usize>,
    pub distance: Vec<usize>,
}

impl LeaderAssignment {
    pub fn is_leader(&self, i: usize) -> bool {
        self.leader_of[i] == i
    }

    pub fn leaders(&self) -> Vec<usize> {
        (0..self.leader_of.len()).filter(|&i| self.is_leader(i)).collect()
    }
}

pub fn leader_assignment(a: &GraphAnalysis) -> Result<LeaderAssignment, GraphError> {
    if !a.connected {
        return Err(GraphError::Disconnected);
    }
    let n = a.num_agents();
    let mut leader_of = vec![0; n];
    let mut distance = vec![0; n];
    for j in 0..n {
        if a.dominating_set.binary_search(&j).is_ok() {
            leader_of[j] = j;
            continue;
        }
        // dominating_set is sorted, so strict `<` keeps the lowest index on ties
        let (leader, d) = a
            .dominating_set
            .iter()
            .map(|&i| (i, a.distances[i][j].expect("connected")))
            .fold((usize::MAX, usize::MAX), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
        leader_of[j] = leader;
        distance[j] = d;
    }
    Ok(LeaderAssignment {
        leader_of,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn er_with_p_one_is_complete() {
        let g = generate_topology(&GraphSpec::ErdosRenyi { n: 7, p: 1.0 }, &mut rng(0), true).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 6));
    }

    #[test]
    fn er_mean_degree() {
        let mut total = 0.0;
        for seed in 0..100 {
            let g = generate_topology(&GraphSpec::ErdosRenyi { n: 100, p: 0.7 }, &mut rng(seed), true)
                .unwrap();
            total += g.degrees().iter().sum::<usize>() as f64 / 100.0;
        }
        assert!((total / 100.0 - 69.3).abs() <= 1.5);
    }

    #[test]
    fn er_errors() {
        assert_eq!(
            generate_topology(&GraphSpec::ErdosRenyi { n: 3, p: 0.0 }, &mut rng(0), true),
            Err(GraphError::NotConnected(CONNECT_ATTEMPTS))
        );
        assert_eq!(
            generate_topology(&GraphSpec::ErdosRenyi { n: 3, p: 1.2 }, &mut rng(0), false),
            Err(GraphError::InvalidProbability(1.2))
        );
        assert_eq!(
            generate_topology(&GraphSpec::Complete { n: 0 }, &mut rng(0), false),
            Err(GraphError::Empty)
        );
    }

    #[test]
    fn deterministic_families() {
        let p = generate_topology(&GraphSpec::Path { n: 3 }, &mut rng(0), true).unwrap();
        assert_eq!(p.degrees(), vec![1, 2, 1]);
        assert!(p.is_adjacent(0, 1) && p.is_adjacent(1, 2) && !p.is_adjacent(0, 2));
        let c = generate_topology(&GraphSpec::Cycle { n: 4 }, &mut rng(0), true).unwrap();
        assert_eq!(c.degrees(), vec![2; 4]);
        let s = generate_topology(&GraphSpec::Star { n: 5 }, &mut rng(0), true).unwrap();
        assert_eq!(s.degrees(), vec![4, 1, 1, 1, 1]);
        assert_eq!(s.to_adjacency_text().lines().next(), Some("0: 1 2 3 4"));
    }

    #[test]
    fn power_of_path() {
        let p = generate_topology(&GraphSpec::Path { n: 3 }, &mut rng(0), true).unwrap();
        let a = analyze(&p, 2).unwrap();
        assert_eq!(a.power, Topology::complete(3));
        assert_eq!(a.diameter, 2);
        let a1 = analyze(&p, 1).unwrap();
        assert_eq!(a1.power, p);
        assert_eq!(a1.degrees_gamma, p.degrees());
        assert_eq!(analyze(&p, 0).unwrap_err(), GraphError::InvalidGamma(0));
    }

    #[test]
    fn cycle_cover_and_domination() {
        let c = generate_topology(&GraphSpec::Cycle { n: 4 }, &mut rng(0), true).unwrap();
        let a = analyze(&c, 1).unwrap();
        assert_eq!(a.clique_cover, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(a.gammabar_hat(), 2);
    }

    #[test]
    fn leaders_on_simple_graphs() {
        let k = Topology::complete(6);
        let la = leader_assignment(&analyze(&k, 1).unwrap()).unwrap();
        assert_eq!(la.leaders(), vec![0]);
        assert!((1..6).all(|j| la.leader_of[j] == 0 && la.distance[j] == 1));

        let s = generate_topology(&GraphSpec::Star { n: 5 }, &mut rng(0), true).unwrap();
        let la = leader_assignment(&analyze(&s, 1).unwrap()).unwrap();
        assert_eq!(la.leaders(), vec![0]);
        assert_eq!(la.distance, vec![0, 1, 1, 1, 1]);

        let p = generate_topology(&GraphSpec::Path { n: 5 }, &mut rng(0), true).unwrap();
        let a = analyze(&p, 2).unwrap();
        let la = leader_assignment(&a).unwrap();
        for j in 0..5 {
            let l = la.leader_of[j];
            assert!(la.distance[j] <= 2);
            assert_eq!(Some(la.distance[j]), a.distances[l][j]);
            let best = a.dominating_set.iter().map(|&i| a.distances[i][j].unwrap()).min().unwrap();
            assert_eq!(la.distance[j], best);
        }
    }

    #[test]
    fn disconnected_assignment_fails() {
        let g = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let a = analyze(&g, 1).unwrap();
        assert!(!a.connected);
        assert_eq!(leader_assignment(&a), Err(GraphError::Disconnected));
    }

    #[test]
    fn degrees_within_radius() {
        let p = generate_topology(&GraphSpec::Path { n: 5 }, &mut rng(0), true).unwrap();
        let a = analyze(&p, 3).unwrap();
        assert_eq!(a.degrees_within(0), vec![0; 5]);
        assert_eq!(a.degrees_within(1), p.degrees());
        assert_eq!(a.degrees_within(3), a.degrees_gamma);
    }
}
