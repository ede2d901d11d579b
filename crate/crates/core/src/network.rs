//! Communication graphs and combination weights.
//!
//! Nodes are indexed from zero inside the library. The edge-list file format
//! and the CLI use one-based indices; conversion happens at those boundaries.
//!
//! Weight tables are stored column-major in the sense of the diffusion
//! literature: entry `(l, k)` is the weight node `k` places on node `l`, and
//! every column sums to one.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Tolerance used when checking column-stochasticity.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("a network needs at least one node")]
    Empty,
    #[error(
        "half width {half_width} is too large for a ring of {nodes} nodes (need 2*half_width < n)"
    )]
    HalfWidthTooLarge { nodes: usize, half_width: usize },
    #[error("node {node} refers to neighbor {neighbor}, outside 1..={nodes}")]
    NeighborOutOfRange {
        node: usize,
        neighbor: usize,
        nodes: usize,
    },
    #[error("link {a}-{b} is not symmetric")]
    Asymmetric { a: usize, b: usize },
    #[error("edge list line {line}: {reason}")]
    EdgeList { line: usize, reason: String },
    #[error("weight table has {got} entries, expected {expected}")]
    WeightShape { expected: usize, got: usize },
    #[error("weight table `{table}` has a negative or non-finite entry at ({l}, {k})")]
    InvalidWeight { table: char, l: usize, k: usize },
    #[error("column {k} of weight table `{table}` sums to {sum}, not 1")]
    NotStochastic { table: char, k: usize, sum: f64 },
    #[error("weight table `{table}` puts weight on non-neighbor {l} of node {k}")]
    OutsideSupport { table: char, l: usize, k: usize },
}

/// Undirected communication graph. Every neighborhood contains its own node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from zero-based neighbor sets.
    ///
    /// Self-links are added if missing and each set is sorted ascending.
    /// The relation must already be symmetric.
    pub fn from_neighbors(neighbors: Vec<Vec<usize>>) -> Result<Self, NetworkError> {
        let n = neighbors.len();
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut sets: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
        for (k, list) in neighbors.iter().enumerate() {
            let mut set = BTreeSet::new();
            set.insert(k);
            for &l in list {
                if l >= n {
                    return Err(NetworkError::NeighborOutOfRange {
                        node: k + 1,
                        neighbor: l + 1,
                        nodes: n,
                    });
                }
                set.insert(l);
            }
            sets.push(set);
        }
        for (k, set) in sets.iter().enumerate() {
            for &l in set {
                if !sets[l].contains(&k) {
                    return Err(NetworkError::Asymmetric { a: k + 1, b: l + 1 });
                }
            }
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Builds a topology from zero-based undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, NetworkError> {
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut lists = vec![Vec::new(); n];
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x >= n || y >= n {
                    return Err(NetworkError::NeighborOutOfRange {
                        node: x + 1,
                        neighbor: y + 1,
                        nodes: n,
                    });
                }
                lists[x].push(y);
            }
        }
        Self::from_neighbors(lists)
    }

    /// Ring lattice: node `k` links to `k ± 1 ..= k ± half_width` (mod n).
    pub fn ring_lattice(n: usize, half_width: usize) -> Result<Self, NetworkError> {
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        if 2 * half_width >= n {
            return Err(NetworkError::HalfWidthTooLarge {
                nodes: n,
                half_width,
            });
        }
        let lists = (0..n)
            .map(|k| {
                (1..=half_width)
                    .flat_map(|h| [(k + h) % n, (k + n - h) % n])
                    .collect()
            })
            .collect();
        Self::from_neighbors(lists)
    }

    /// Random geometric graph on the unit square.
    ///
    /// Nodes are placed uniformly from `seed` and linked when their distance is
    /// at most `radius`. A disconnected draw is repaired by growing the radius
    /// by 10% until the graph connects, which happens at the latest once the
    /// radius reaches the diagonal length.
    pub fn random_geometric(n: usize, radius: f64, seed: u64) -> Result<Self, NetworkError> {
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
        let mut radius = if radius.is_finite() && radius > 0.0 {
            radius
        } else {
            std::f64::consts::SQRT_2
        };
        loop {
            let mut lists = vec![Vec::new(); n];
            for a in 0..n {
                for b in (a + 1)..n {
                    let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
                    if (dx * dx + dy * dy).sqrt() <= radius {
                        lists[a].push(b);
                        lists[b].push(a);
                    }
                }
            }
            let topo = Self::from_neighbors(lists)?;
            if topo.is_connected() {
                return Ok(topo);
            }
            radius *= 1.1;
        }
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted zero-based neighborhood of `k`, including `k`.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    /// Size of the neighborhood of `k`, counting `k` itself.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn contains(&self, k: usize, l: usize) -> bool {
        self.neighbors[k].binary_search(&l).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighbors[k] {
                if !seen[l] {
                    seen[l] = true;
                    visited += 1;
                    queue.push_back(l);
                }
            }
        }
        visited == n
    }

    /// Undirected edges `(k, l)` with `k < l`, zero-based, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(k, ns)| ns.iter().filter(move |&&l| l > k).map(move |&l| (k, l)))
    }

    /// Renders the edge-list format: a line with `N`, then one `k l` line per
    /// undirected edge using one-based indices. Self-loops are implicit.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.node_count());
        for (k, l) in self.edges() {
            let _ = writeln!(out, "{} {}", k + 1, l + 1);
        }
        out
    }

    /// Parses the edge-list format. Blank lines and `#` comments are skipped;
    /// explicit self-loops are accepted and ignored.
    pub fn from_edge_list(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (first, header) = lines.next().ok_or(NetworkError::EdgeList {
            line: 1,
            reason: "missing node count".into(),
        })?;
        let n: usize = header.parse().map_err(|_| NetworkError::EdgeList {
            line: first,
            reason: format!("expected a node count, got `{header}`"),
        })?;
        if n == 0 {
            return Err(NetworkError::Empty);
        }
        let mut edges = Vec::new();
        for (line, content) in lines {
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed.as_deref() {
                Some(&[a, b]) if (1..=n).contains(&a) && (1..=n).contains(&b) => {
                    edges.push((a - 1, b - 1))
                }
                Some(&[_, _]) => {
                    return Err(NetworkError::EdgeList {
                        line,
                        reason: format!("node index outside 1..={n}"),
                    })
                }
                _ => {
                    return Err(NetworkError::EdgeList {
                        line,
                        reason: format!("expected `k l`, got `{content}`"),
                    })
                }
            }
        }
        Self::from_edges(n, &edges)
    }
}

/// Combination table `A` and measurement-sharing table `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights {
    n: usize,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl CombinationWeights {
    /// Wraps explicit tables given row-major by `l` (entry `l * n + k`), then
    /// validates nonnegativity, column sums and support on `topo`.
    pub fn new(topo: &Topology, a: Vec<f64>, c: Vec<f64>) -> Result<Self, NetworkError> {
        let n = topo.node_count();
        for table in [&a, &c] {
            if table.len() != n * n {
                return Err(NetworkError::WeightShape {
                    expected: n * n,
                    got: table.len(),
                });
            }
        }
        let weights = Self { n, a, c };
        weights.validate(topo)?;
        Ok(weights)
    }

    /// `a[l][k] = c[l][k] = 1 / n_k` over each neighborhood.
    pub fn uniform(topo: &Topology) -> Self {
        let n = topo.node_count();
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            let share = 1.0 / topo.degree(k) as f64;
            for &l in topo.neighbors(k) {
                a[l * n + k] = share;
            }
        }
        let c = a.clone();
        Self { n, a, c }
    }

    /// Identity tables: every node keeps to its own data and estimate.
    pub fn non_cooperative(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            a[k * n + k] = 1.0;
        }
        let c = a.clone();
        Self { n, a, c }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Weight node `k` places on node `l`'s estimate.
    #[inline]
    pub fn a(&self, l: usize, k: usize) -> f64 {
        self.a[l * self.n + k]
    }

    /// Weight node `k` places on node `l`'s data.
    #[inline]
    pub fn c(&self, l: usize, k: usize) -> f64 {
        self.c[l * self.n + k]
    }

    pub fn validate(&self, topo: &Topology) -> Result<(), NetworkError> {
        let n = self.n;
        for (name, table) in [('a', &self.a), ('c', &self.c)] {
            for k in 0..n {
                let mut sum = 0.0;
                for l in 0..n {
                    let w = table[l * n + k];
                    if !w.is_finite() || w < 0.0 {
                        return Err(NetworkError::InvalidWeight { table: name, l, k });
                    }
                    if w != 0.0 && !topo.contains(k, l) {
                        return Err(NetworkError::OutsideSupport { table: name, l, k });
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(NetworkError::NotStochastic {
                        table: name,
                        k,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_ring() {
        let t = Topology::ring_lattice(5, 0).unwrap();
        for k in 0..5 {
            assert_eq!(t.neighbors(k), &[k]);
        }
        assert!(!t.is_connected());
    }

    #[test]
    fn ring_neighbors_wrap() {
        let t = Topology::ring_lattice(5, 1).unwrap();
        assert_eq!(t.neighbors(0), &[0, 1, 4]);
        assert_eq!(t.degree(0), 3);
    }

    #[test]
    fn ring_twenty_half_width_two() {
        let t = Topology::ring_lattice(20, 2).unwrap();
        for k in 0..20 {
            assert_eq!(t.degree(k), 5);
            for l in 0..20 {
                assert_eq!(t.contains(k, l), t.contains(l, k));
                let ring_dist = (k as i64 - l as i64)
                    .rem_euclid(20)
                    .min((l as i64 - k as i64).rem_euclid(20));
                assert_eq!(t.contains(k, l), ring_dist <= 2);
            }
        }
    }

    #[test]
    fn ring_rejects_wide_half_width() {
        assert_eq!(
            Topology::ring_lattice(4, 2),
            Err(NetworkError::HalfWidthTooLarge {
                nodes: 4,
                half_width: 2
            })
        );
        assert!(Topology::ring_lattice(5, 2).is_ok());
        assert_eq!(Topology::ring_lattice(0, 0), Err(NetworkError::Empty));
    }

    #[test]
    fn geometric_small_cases() {
        let one = Topology::random_geometric(1, 0.1, 3).unwrap();
        assert_eq!(one.neighbors(0), &[0]);
        let pair = Topology::random_geometric(2, 1.5, 7).unwrap();
        assert_eq!(pair.neighbors(0), &[0, 1]);
        assert_eq!(pair.neighbors(1), &[0, 1]);
    }

    #[test]
    fn geometric_twenty_nodes_connected() {
        let t = Topology::random_geometric(20, 0.35, 42).unwrap();
        assert!(t.is_connected());
        for k in 0..20 {
            assert!((2..=20).contains(&t.degree(k)));
        }
        assert_eq!(t, Topology::random_geometric(20, 0.35, 42).unwrap());
    }

    #[test]
    fn geometric_tiny_radius_grows_until_connected() {
        let t = Topology::random_geometric(12, 0.01, 5).unwrap();
        assert!(t.is_connected());
    }

    #[test]
    fn asymmetric_neighbor_sets_rejected() {
        let err = Topology::from_neighbors(vec![vec![1], vec![]]).unwrap_err();
        assert_eq!(err, NetworkError::Asymmetric { a: 1, b: 2 });
    }

    #[test]
    fn edge_list_round_trip() {
        let t = Topology::random_geometric(20, 0.3, 9).unwrap();
        let text = t.to_edge_list();
        assert!(text.starts_with("20\n"));
        assert_eq!(Topology::from_edge_list(&text).unwrap(), t);
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(
            Topology::from_edge_list("3\n1 4\n"),
            Err(NetworkError::EdgeList { line: 2, .. })
        ));
        assert!(matches!(
            Topology::from_edge_list("x\n"),
            Err(NetworkError::EdgeList { line: 1, .. })
        ));
        assert!(matches!(
            Topology::from_edge_list("3\n1 2 3\n"),
            Err(NetworkError::EdgeList { .. })
        ));
        let t = Topology::from_edge_list("# path\n3\n1 2\n2 3\n2 2\n").unwrap();
        assert_eq!(t.neighbors(1), &[0, 1, 2]);
    }

    #[test]
    fn uniform_on_path() {
        let t = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let w = CombinationWeights::uniform(&t);
        for l in 0..3 {
            assert_eq!(w.a(l, 1), 1.0 / 3.0);
            assert_eq!(w.c(l, 1), 1.0 / 3.0);
        }
        assert_eq!(w.a(0, 0), 0.5);
        assert_eq!(w.a(2, 0), 0.0);
        w.validate(&t).unwrap();
    }

    #[test]
    fn uniform_isolated_node_and_degree_four() {
        let t = Topology::from_edges(5, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let w = CombinationWeights::uniform(&t);
        assert_eq!(w.a(4, 4), 1.0);
        for l in 0..4 {
            assert_eq!(w.a(l, 4), 0.0);
            assert_eq!(w.a(l, 0), 0.25);
        }
    }

    #[test]
    fn uniform_on_regular_graph_is_doubly_stochastic() {
        let t = Topology::ring_lattice(20, 3).unwrap();
        let w = CombinationWeights::uniform(&t);
        for l in 0..20 {
            let row: f64 = (0..20).map(|k| w.a(l, k)).sum();
            assert!((row - 1.0).abs() < STOCHASTIC_TOLERANCE);
        }
    }

    #[test]
    fn non_cooperative_is_identity() {
        let w = CombinationWeights::non_cooperative(3);
        for l in 0..3 {
            for k in 0..3 {
                assert_eq!(w.a(l, k), if l == k { 1.0 } else { 0.0 });
                assert_eq!(w.c(l, k), w.a(l, k));
            }
        }
        w.validate(&Topology::ring_lattice(3, 0).unwrap()).unwrap();
        assert_eq!(CombinationWeights::non_cooperative(1).a(0, 0), 1.0);
    }

    #[test]
    fn explicit_weights_validated() {
        let t = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut a = CombinationWeights::uniform(&t).a.clone();
        let c = a.clone();
        assert!(CombinationWeights::new(&t, a.clone(), c.clone()).is_ok());
        a[2 * 3] = 0.1; // node 0 weighting non-neighbor 2
        assert!(matches!(
            CombinationWeights::new(&t, a, c.clone()),
            Err(NetworkError::OutsideSupport {
                table: 'a',
                l: 2,
                k: 0
            })
        ));
        let mut bad = c.clone();
        bad[0] = 0.7;
        assert!(matches!(
            CombinationWeights::new(&t, c.clone(), bad),
            Err(NetworkError::NotStochastic {
                table: 'c',
                k: 0,
                ..
            })
        ));
        assert!(matches!(
            CombinationWeights::new(&t, vec![1.0], c),
            Err(NetworkError::WeightShape {
                expected: 9,
                got: 1
            })
        ));
    }
}
