//! Directed communication topology and the weight matrix Γ.
//!
//! Arc direction follows the sensing convention: an arc `j -> i` means node
//! `i` receives node `j`'s output, and its weight is `γ_ij`. Reachability is
//! always computed along that direction of information flow.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Weighted directed graph. Only strictly positive weights are stored, so
/// arc presence and weight positivity always coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    /// `(receiver, sender) -> γ`
    weights: BTreeMap<(usize, usize), f64>,
}

impl WeightedDigraph {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("node count must be positive".into()));
        }
        Ok(Self { n, weights: BTreeMap::new() })
    }

    /// Builds a graph from `(from, to, weight)` triples.
    pub fn from_arcs(n: usize, arcs: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut g = Self::new(n)?;
        for (from, to, w) in arcs {
            g.add_arc(from, to, w)?;
        }
        Ok(g)
    }

    /// Complete digraph with identical weights.
    pub fn complete(n: usize, weight: f64) -> Result<Self> {
        let arcs = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (j, i, weight)));
        Self::from_arcs(n, arcs)
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize, weight: f64) -> Result<Self> {
        Self::from_arcs(n, (0..n).map(|j| (j, (j + 1) % n, weight)))
    }

    /// Sets `γ_to,from`. A zero weight removes the arc.
    pub fn add_arc(&mut self, from: usize, to: usize, weight: f64) -> Result<()> {
        if from >= self.n || to >= self.n {
            return Err(Error::Graph(format!("arc {from}->{to} out of range for {} nodes", self.n)));
        }
        if from == to {
            return Err(Error::Graph(format!("self-loop on node {from}")));
        }
        if !weight.is_finite() {
            return Err(Error::Graph(format!("non-finite weight on arc {from}->{to}")));
        }
        if weight < 0.0 {
            return Err(Error::NegativeWeight { from, to, weight });
        }
        if weight == 0.0 {
            self.weights.remove(&(to, from));
        } else {
            self.weights.insert((to, from), weight);
        }
        Ok(())
    }

    /// Graph whose arcs are the positive off-diagonal entries of Γ.
    pub fn from_gamma(gamma: &GammaMatrix) -> Self {
        let m = gamma.as_matrix();
        let n = m.nrows();
        let mut weights = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] > 0.0 {
                    weights.insert((i, j), m[(i, j)]);
                }
            }
        }
        Self { n, weights }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.weights.len()
    }

    /// `γ_ij`: weight node `i` gives to messages from node `j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// In-neighbours of `i` with their weights, in ascending sender order.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.range((i, 0)..(i, usize::MAX)).map(|(&(_, j), &w)| (j, w))
    }

    /// All arcs as `(from, to, weight)`, ordered by receiver then sender.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights.iter().map(|(&(to, from), &w)| (from, to, w))
    }

    /// `Σ_j γ_ij`.
    pub fn in_weight(&self, i: usize) -> f64 {
        self.in_neighbors(i).map(|(_, w)| w).sum()
    }

    /// Graph with each weight replaced by `f(from, to, weight)`.
    pub fn map_weights(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Result<Self> {
        Self::from_arcs(self.n, self.arcs().map(|(j, i, w)| (j, i, f(j, i, w))).collect::<Vec<_>>())
    }

    fn out_lists(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (from, to, _) in self.arcs() {
            out[from].push(to);
        }
        out
    }

    /// Nodes reachable from `root` by walks of length at least one.
    pub fn reach(&self, root: usize) -> BTreeSet<usize> {
        bfs(&self.out_lists(), root)
    }

    /// Parses the edge-list text format: one `from to gamma` triple per line,
    /// zero-based node ids, `#` comments, and an optional `n <count>` line
    /// that fixes the node count (otherwise it is one past the largest id).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut arcs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Graph(format!("edge list line {}: cannot parse {raw:?}", lineno + 1));
            match fields.as_slice() {
                ["n", count] => declared = Some(count.parse::<usize>().map_err(|_| bad())?),
                [from, to, w] => arcs.push((
                    from.parse::<usize>().map_err(|_| bad())?,
                    to.parse::<usize>().map_err(|_| bad())?,
                    w.parse::<f64>().map_err(|_| bad())?,
                )),
                _ => return Err(bad()),
            }
        }
        let implied = arcs.iter().map(|&(j, i, _)| j.max(i) + 1).max().unwrap_or(0);
        let n = declared.unwrap_or(implied);
        if n < implied {
            return Err(Error::Graph(format!("declared {n} nodes but arcs reference node {}", implied - 1)));
        }
        Self::from_arcs(n, arcs)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (from, to, w) in self.arcs() {
            let _ = writeln!(s, "{from} {to} {w:.17e}");
        }
        s
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_edge_list(&text)
    }

    /// Uniform random digraph: each ordered pair carries an arc with
    /// probability `edge_prob`. Draws are rejected until the graph has a
    /// spanning tree and, when given, `root` reaches every other node.
    pub fn random<R: Rng + ?Sized>(
        n: usize,
        edge_prob: f64,
        weight: f64,
        root: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if !(edge_prob > 0.0 && edge_prob <= 1.0) {
            return Err(Error::Graph(format!("edge probability {edge_prob} outside (0, 1]")));
        }
        if root.is_some_and(|r| r >= n) {
            return Err(Error::Graph("root out of range".into()));
        }
        for _ in 0..100_000 {
            let mut g = Self::new(n)?;
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < edge_prob {
                        g.add_arc(j, i, weight)?;
                    }
                }
            }
            let ok = match root {
                Some(r) => n == 1 || g.reach(r).len() + usize::from(!g.reach(r).contains(&r)) == n,
                None => has_spanning_tree(&g),
            };
            if ok {
                return Ok(g);
            }
        }
        Err(Error::Graph("rejection sampling found no graph with a spanning tree".into()))
    }
}

fn bfs(out: &[Vec<usize>], root: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = out[root].iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        if seen.insert(v) {
            queue.extend(out[v].iter().copied());
        }
    }
    seen
}

/// Zero-row-sum weight matrix with `γ_ij` off the diagonal and
/// `-Σ_{j≠i} γ_ij` on it.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix(DMatrix<f64>);

impl GammaMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.sum()).collect()
    }

    /// Wraps a matrix after checking the sign pattern and zero row sums.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Graph("Γ must be square and non-empty".into()));
        }
        for i in 0..m.nrows() {
            let scale = m.row(i).abs().sum().max(1.0);
            if m.row(i).sum().abs() > 1e-12 * scale {
                return Err(Error::Graph(format!("row {i} of Γ does not sum to zero")));
            }
            for j in 0..m.ncols() {
                if i != j && m[(i, j)] < 0.0 {
                    return Err(Error::NegativeWeight { from: j, to: i, weight: m[(i, j)] });
                }
            }
        }
        Ok(Self(m))
    }
}

pub fn build_gamma(g: &WeightedDigraph) -> GammaMatrix {
    let n = g.node_count();
    let mut m = DMatrix::zeros(n, n);
    for (from, to, w) in g.arcs() {
        m[(to, from)] = w;
    }
    for i in 0..n {
        // Sum the off-diagonal entries directly so the row sum is exactly
        // the negated diagonal up to one rounding.
        m[(i, i)] = -g.in_neighbors(i).map(|(_, w)| w).sum::<f64>();
    }
    GammaMatrix(m)
}

pub fn has_spanning_tree(g: &WeightedDigraph) -> bool {
    let n = g.node_count();
    if n == 1 {
        return true;
    }
    let out = g.out_lists();
    (0..n).any(|r| {
        let mut reach = bfs(&out, r);
        reach.insert(r);
        reach.len() == n
    })
}

/// Nodes reachable from every member of `src`.
pub fn reachable_from_set(g: &WeightedDigraph, src: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    if src.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    if let Some(&bad) = src.iter().find(|&&v| v >= g.node_count()) {
        return Err(Error::Graph(format!("node {bad} out of range")));
    }
    let out = g.out_lists();
    let mut iter = src.iter().map(|&s| bfs(&out, s));
    let first = iter.next().unwrap_or_default();
    Ok(iter.fold(first, |acc, r| acc.intersection(&r).copied().collect()))
}

/// Free-node block of Γ and its coupling to the fixed nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedGamma {
    pub free: Vec<usize>,
    pub fixed: Vec<usize>,
    /// Principal submatrix on the free nodes; its diagonal keeps the full
    /// in-weight over all nodes.
    pub gamma_free: DMatrix<f64>,
    /// Free rows by fixed columns.
    pub gamma_cross: DMatrix<f64>,
}

pub fn restrict_gamma(gamma: &GammaMatrix, fixed: &BTreeSet<usize>) -> Result<RestrictedGamma> {
    let n = gamma.size();
    if let Some(&bad) = fixed.iter().find(|&&v| v >= n) {
        return Err(Error::Graph(format!("fixed node {bad} out of range")));
    }
    if fixed.len() == n {
        return Err(Error::AllNodesFixed);
    }
    let free: Vec<usize> = (0..n).filter(|v| !fixed.contains(v)).collect();
    let fixed: Vec<usize> = fixed.iter().copied().collect();
    let m = gamma.as_matrix();
    let gamma_free = DMatrix::from_fn(free.len(), free.len(), |r, c| m[(free[r], free[c])]);
    let gamma_cross = DMatrix::from_fn(free.len(), fixed.len(), |r, c| m[(free[r], fixed[c])]);
    Ok(RestrictedGamma { free, fixed, gamma_free, gamma_cross })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn two_node_symmetric_gamma() {
        let g = WeightedDigraph::from_arcs(2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let m = build_gamma(&g).into_matrix();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
    }

    #[test]
    fn single_node_gamma_is_zero() {
        let g = WeightedDigraph::new(1).unwrap();
        assert_eq!(build_gamma(&g).into_matrix(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn random_gamma_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = WeightedDigraph::random(10, 0.3, 1.0, None, &mut rng).unwrap();
        let gamma = build_gamma(&g);
        let m = gamma.as_matrix();
        for i in 0..10 {
            // independent recount of the in-degree from the arc list
            let indeg = g.arcs().filter(|&(_, to, _)| to == i).count() as f64;
            assert_eq!(m[(i, i)], -indeg);
            let s: f64 = (0..10).map(|j| m[(i, j)]).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let mut g = WeightedDigraph::new(3).unwrap();
        assert!(matches!(g.add_arc(0, 1, -0.5), Err(Error::NegativeWeight { .. })));
        assert!(g.add_arc(1, 1, 1.0).is_err());
        assert!(g.add_arc(0, 3, 1.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        assert!(GammaMatrix::from_matrix(bad).is_err());
    }

    #[test]
    fn zero_weight_removes_arc() {
        let mut g = WeightedDigraph::new(2).unwrap();
        g.add_arc(0, 1, 2.0).unwrap();
        g.add_arc(0, 1, 0.0).unwrap();
        assert_eq!(g.arc_count(), 0);
    }

    #[test]
    fn spanning_tree_cases() {
        let star = WeightedDigraph::from_arcs(5, (1..5).map(|i| (0, i, 1.0))).unwrap();
        assert!(has_spanning_tree(&star));
        let pairs = WeightedDigraph::from_arcs(4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
        assert!(!has_spanning_tree(&pairs));
        let ring = WeightedDigraph::ring(10, 1.0).unwrap();
        assert!(has_spanning_tree(&ring));
        // reversed star: everyone sends to node 0, nobody reaches the rest
        let sink = WeightedDigraph::from_arcs(5, (1..5).map(|i| (i, 0, 1.0))).unwrap();
        assert!(!has_spanning_tree(&sink));
    }

    #[test]
    fn ring_spanning_tree_matches_bfs_from_every_root() {
        let ring = WeightedDigraph::ring(10, 1.0).unwrap();
        for r in 0..10 {
            let mut seen = [false; 10];
            let mut v = r;
            for _ in 0..10 {
                seen[v] = true;
                v = (v + 1) % 10;
            }
            assert!(seen.iter().all(|&s| s));
            assert_eq!(ring.reach(r).len(), 10);
        }
    }

    #[test]
    fn reachable_from_set_cases() {
        let star = WeightedDigraph::from_arcs(5, (1..5).map(|i| (0, i, 1.0))).unwrap();
        assert_eq!(reachable_from_set(&star, &set(&[0])).unwrap(), set(&[1, 2, 3, 4]));
        assert!(reachable_from_set(&star, &set(&[3])).unwrap().is_empty());
        let ring = WeightedDigraph::ring(10, 1.0).unwrap();
        let all: BTreeSet<usize> = (0..10).collect();
        assert_eq!(reachable_from_set(&ring, &set(&[2, 7])).unwrap(), all);
        assert!(matches!(reachable_from_set(&ring, &BTreeSet::new()), Err(Error::EmptyNodeSet)));
    }

    #[test]
    fn restrict_two_nodes() {
        let g = WeightedDigraph::from_arcs(2, [(0, 1, 1.0)]).unwrap();
        let r = restrict_gamma(&build_gamma(&g), &set(&[0])).unwrap();
        assert_eq!(r.gamma_free, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(r.gamma_cross, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn restrict_with_nothing_fixed_is_identity() {
        let g = WeightedDigraph::ring(4, 1.5).unwrap();
        let gamma = build_gamma(&g);
        let r = restrict_gamma(&gamma, &BTreeSet::new()).unwrap();
        assert_eq!(&r.gamma_free, gamma.as_matrix());
        assert_eq!(r.gamma_cross.ncols(), 0);
        assert!(matches!(restrict_gamma(&gamma, &set(&[0, 1, 2, 3])), Err(Error::AllNodesFixed)));
    }

    #[test]
    fn restrict_rows_recover_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = WeightedDigraph::random(10, 0.4, 1.0, None, &mut rng).unwrap();
        let gamma = build_gamma(&g);
        let r = restrict_gamma(&gamma, &set(&[1, 4, 8])).unwrap();
        for (row, &i) in r.free.iter().enumerate() {
            let mut total = 0.0;
            for (c, &j) in r.free.iter().enumerate() {
                assert_eq!(r.gamma_free[(row, c)], gamma.as_matrix()[(i, j)]);
                total += r.gamma_free[(row, c)];
            }
            for (c, &k) in r.fixed.iter().enumerate() {
                assert_eq!(r.gamma_cross[(row, c)], gamma.as_matrix()[(i, k)]);
                total += r.gamma_cross[(row, c)];
            }
            assert!(total.abs() < 1e-12);
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# demo\nn 4\n0 1 1.5\n2 1 0.25\n1 3 2\n";
        let g = WeightedDigraph::parse_edge_list(text).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.weight(1, 0), 1.5);
        assert_eq!(WeightedDigraph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
        assert!(WeightedDigraph::parse_edge_list("0 1").is_err());
        assert!(WeightedDigraph::parse_edge_list("0 1 -1").is_err());
        assert!(WeightedDigraph::parse_edge_list("n 2\n0 5 1").is_err());
    }

    #[test]
    fn random_graph_with_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = WeightedDigraph::random(8, 0.2, 1.0, Some(3), &mut rng).unwrap();
        let mut reach = g.reach(3);
        reach.insert(3);
        assert_eq!(reach.len(), 8);
    }

    proptest::proptest! {
        #[test]
        fn spanning_tree_is_scale_invariant(
            arcs in proptest::collection::vec((0usize..6, 0usize..6, 0.01f64..5.0), 0..20),
            scale in 0.01f64..100.0,
        ) {
            let arcs: Vec<_> = arcs.into_iter().filter(|(a, b, _)| a != b).collect();
            let g = WeightedDigraph::from_arcs(6, arcs.clone()).unwrap();
            let h = WeightedDigraph::from_arcs(6, arcs.into_iter().map(|(a, b, w)| (a, b, w * scale))).unwrap();
            proptest::prop_assert_eq!(has_spanning_tree(&g), has_spanning_tree(&h));
        }
    }
}
