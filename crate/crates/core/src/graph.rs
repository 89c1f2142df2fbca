//! Labeled directed acyclic graphs.
//!
//! Nodes are addressed by index; labels are carried along for I/O. Edge sets
//! are kept ordered so that every traversal, serialization and tie-break is
//! a deterministic function of the graph.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

/// Number of rejected draws after which [`random_dag`] gives up.
pub const DEFAULT_REJECTION_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    labels: Vec<String>,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

fn check_label(label: &str) -> Result<()> {
    let bad = label.is_empty()
        || label.trim() != label
        || label.contains(',')
        || label.contains("->")
        || label.contains('#')
        || label.contains(['\n', '\r', '"']);
    if bad {
        return Err(Error::invalid(format!("invalid node label {label:?}")));
    }
    Ok(())
}

impl Dag {
    /// Builds a graph, rejecting self-loops, duplicate edges, dangling
    /// indices, duplicate labels and cycles.
    pub fn new<I>(labels: Vec<String>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = labels.len();
        let mut seen = BTreeSet::new();
        for label in &labels {
            check_label(label)?;
            if !seen.insert(label.as_str()) {
                return Err(Error::invalid(format!("duplicate node label {label:?}")));
            }
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {}", labels[u])));
            }
            if !set.insert((u, v)) {
                return Err(Error::invalid(format!(
                    "duplicate edge {} -> {}",
                    labels[u], labels[v]
                )));
            }
        }
        let dag = Self::from_parts(labels, set);
        if dag.try_topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    fn from_parts(labels: Vec<String>, edges: BTreeSet<(usize, usize)>) -> Self {
        let n = labels.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        // BTreeSet iteration keeps both adjacency lists sorted.
        for &(u, v) in &edges {
            children[u].push(v);
            parents[v].push(u);
        }
        for p in &mut parents {
            p.sort_unstable();
        }
        Dag {
            labels,
            edges,
            parents,
            children,
        }
    }

    /// Graph without edges.
    pub fn empty(labels: Vec<String>) -> Result<Self> {
        Self::new(labels, std::iter::empty())
    }

    /// Labels `x0, x1, ...`.
    pub fn default_labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    /// Builds a graph from labels and edges given by label.
    pub fn from_named_edges(labels: &[&str], edges: &[(&str, &str)]) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let idx = |name: &str| {
            labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::invalid(format!("unknown node {name:?}")))
        };
        let edges = edges
            .iter()
            .map(|(a, b)| Ok((idx(a)?, idx(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.has_edge(u, v) || self.has_edge(v, u)
    }

    /// Parents of `v` in ascending index order.
    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    /// Children of `v` in ascending index order.
    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Returns a copy with a different edge set, validated like [`Dag::new`].
    pub fn with_edges<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::new(self.labels.clone(), edges)
    }

    fn try_topological_order(&self) -> Option<Vec<usize>> {
        let n = self.n_nodes();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
            .filter(|&v| indegree[v] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Topological order; among ready nodes the smallest index goes first.
    pub fn topological_order(&self) -> Vec<usize> {
        self.try_topological_order()
            .expect("Dag invariant violated: graph is cyclic")
    }

    /// All nodes reachable from `v` by a path of length at least one.
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.children[v].clone();
        while let Some(u) = stack.pop() {
            if seen.insert(u) {
                stack.extend(self.children[u].iter().copied());
            }
        }
        seen
    }

    /// True iff a directed path `u -> ... -> v` of length ≥ 1 exists.
    /// `u == v` is always false since the graph is acyclic.
    pub fn has_directed_path(&self, u: usize, v: usize) -> Result<bool> {
        let n = self.n_nodes();
        if u >= n || v >= n {
            return Err(Error::invalid(format!(
                "node index out of range: ({u}, {v}) with {n} nodes"
            )));
        }
        if u == v {
            return Ok(false);
        }
        Ok(self.descendants(u).contains(&v))
    }

    /// True iff the undirected skeleton has exactly one component.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &w in self.parents[u].iter().chain(&self.children[u]) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }

    /// Text form: a `nodes:` header followed by one `a -> b` line per edge,
    /// edges in (parent, child) index order.
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes: {}\n", self.labels.join(", "));
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{} -> {}", self.labels[u], self.labels[v]);
        }
        out
    }

    /// Parses the format written by [`Dag::to_text`]. Blank lines and `#`
    /// comments are ignored; edge order is free.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut labels: Option<Vec<String>> = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("nodes:") {
                if labels.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "duplicate nodes header".into(),
                    });
                }
                let rest = rest.trim();
                labels = Some(if rest.is_empty() {
                    Vec::new()
                } else {
                    rest.split(',').map(|s| s.trim().to_string()).collect()
                });
                continue;
            }
            let Some(names) = labels.as_ref() else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "edge before the nodes header".into(),
                });
            };
            let (a, b) = line.split_once("->").ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `a -> b`, found {line:?}"),
            })?;
            let find = |name: &str| {
                names.iter().position(|l| l == name).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unknown node {name:?}"),
                })
            };
            edges.push((find(a.trim())?, find(b.trim())?));
        }
        let labels = labels.ok_or(Error::Parse {
            line: 0,
            message: "missing nodes header".into(),
        })?;
        Self::new(labels, edges)
    }

    /// Graphviz DOT rendering.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for label in &self.labels {
            let _ = writeln!(out, "  \"{label}\";");
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "  \"{}\" -> \"{}\";", self.labels[u], self.labels[v]);
        }
        out.push_str("}\n");
        out
    }
}

/// Structural Hamming distance: per unordered node pair, 1 if the two graphs
/// disagree on it (missing, extra or reversed edge), else 0.
pub fn shd(a: &Dag, b: &Dag) -> Result<usize> {
    if a.labels != b.labels {
        return Err(Error::invalid("shd requires graphs over the same node set"));
    }
    let n = a.n_nodes();
    let mut dist = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let sa = (a.has_edge(i, j), a.has_edge(j, i));
            let sb = (b.has_edge(i, j), b.has_edge(j, i));
            if sa != sb {
                dist += 1;
            }
        }
    }
    Ok(dist)
}

/// Draws a DAG with labels `x0..` by including each ordered pair `(i, j)`,
/// `i != j`, independently with probability `p_edge`, and rejecting cyclic
/// draws. Candidate pairs are visited row-major.
pub fn random_dag<R: Rng + ?Sized>(n: usize, p_edge: f64, rng: &mut R) -> Result<Dag> {
    random_dag_with_cap(n, p_edge, DEFAULT_REJECTION_CAP, rng)
}

pub fn random_dag_with_cap<R: Rng + ?Sized>(
    n: usize,
    p_edge: f64,
    cap: usize,
    rng: &mut R,
) -> Result<Dag> {
    if n == 0 {
        return Err(Error::invalid("random_dag needs at least one node"));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Error::invalid(format!("p_edge {p_edge} outside [0, 1]")));
    }
    let labels = Dag::default_labels(n);
    for _ in 0..=cap {
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen_bool(p_edge) {
                    edges.insert((i, j));
                }
            }
        }
        let dag = Dag::from_parts(labels.clone(), edges);
        if dag.try_topological_order().is_some() {
            return Ok(dag);
        }
    }
    Err(Error::GenerationFailed { attempts: cap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain() -> Dag {
        Dag::from_named_edges(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap()
    }

    /// Components {x3, x5, x0, x2, x4} and {x1, x6}, after the outlier figure.
    fn two_components() -> Dag {
        let labels = Dag::default_labels(7);
        Dag::new(labels, [(3, 5), (0, 3), (2, 5), (4, 2), (1, 6)]).unwrap()
    }

    #[test]
    fn rejects_invalid_graphs() {
        let l = Dag::default_labels(3);
        assert!(matches!(Dag::new(l.clone(), [(0, 0)]), Err(Error::InvalidArgument(_))));
        assert!(matches!(Dag::new(l.clone(), [(0, 1), (0, 1)]), Err(Error::InvalidArgument(_))));
        assert!(matches!(Dag::new(l.clone(), [(0, 3)]), Err(Error::InvalidArgument(_))));
        assert!(matches!(Dag::new(l.clone(), [(0, 1), (1, 2), (2, 0)]), Err(Error::Cyclic)));
        assert!(Dag::new(vec!["a".into(), "a".into()], []).is_err());
        assert!(Dag::new(vec!["a,b".into()], []).is_err());
    }

    #[test]
    fn random_dag_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_dag(5, 0.0, &mut rng).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges()), (5, 0));
        let g = random_dag(1, 0.9, &mut rng).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges()), (1, 0));
        assert!(random_dag(0, 0.5, &mut rng).is_err());
        assert!(random_dag(3, 1.5, &mut rng).is_err());
    }

    #[test]
    fn random_dag_cap_exceeded() {
        // p_edge = 1 with n >= 2 always yields a 2-cycle.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let err = random_dag_with_cap(3, 1.0, 50, &mut rng).unwrap_err();
        assert!(matches!(err, Error::GenerationFailed { attempts: 50 }));
    }

    #[test]
    fn random_dag_two_nodes_is_uniform_over_acyclic_outcomes() {
        // Raw outcomes at p = 0.5: {}, {01}, {10}, {01,10}; the last is rejected,
        // so P(exactly one edge) = 2/3.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let g = random_dag(2, 0.5, &mut rng).unwrap();
            if g.n_edges() == 0 {
                counts[0] += 1;
            } else if g.has_edge(0, 1) {
                counts[1] += 1;
            } else {
                counts[2] += 1;
            }
        }
        let sd = (2.0 / 3.0 * 1.0 / 3.0 / draws as f64).sqrt();
        let one_edge = (counts[1] + counts[2]) as f64 / draws as f64;
        assert!((one_edge - 2.0 / 3.0).abs() < 3.0 * sd, "{one_edge}");
        let sd1 = (1.0 / 3.0 * 2.0 / 3.0 / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - 1.0 / 3.0).abs() < 3.0 * sd1);
        }
    }

    /// Independent rejection sampler on adjacency matrices with a
    /// transitive-closure cycle test.
    fn brute_force_edge_count(n: usize, p: f64, rng: &mut ChaCha8Rng) -> usize {
        loop {
            let mut adj = vec![vec![false; n]; n];
            for (i, row) in adj.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = i != j && rng.gen::<f64>() < p;
                }
            }
            let mut reach = adj.clone();
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        reach[i][j] |= reach[i][k] && reach[k][j];
                    }
                }
            }
            if (0..n).all(|i| !reach[i][i]) {
                return adj.iter().flatten().filter(|&&b| b).count();
            }
        }
    }

    #[test]
    fn random_dag_edge_count_matches_rejection_oracle() {
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(99);
        let oracle_draws = 40_000;
        let samples: Vec<f64> = (0..oracle_draws)
            .map(|_| brute_force_edge_count(7, 0.1, &mut oracle_rng) as f64)
            .collect();
        let expected = samples.iter().sum::<f64>() / oracle_draws as f64;
        let var = samples.iter().map(|x| (x - expected).powi(2)).sum::<f64>()
            / (oracle_draws - 1) as f64;

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1000;
        let mut total = 0usize;
        for _ in 0..draws {
            let g = random_dag(7, 0.1, &mut rng).unwrap();
            assert!(g.try_topological_order().is_some());
            total += g.n_edges();
        }
        let mean = total as f64 / draws as f64;
        let se = (var / draws as f64 + var / oracle_draws as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} vs {expected}");
    }

    #[test]
    fn path_queries() {
        let g = chain();
        assert!(g.has_directed_path(0, 2).unwrap());
        assert!(!g.has_directed_path(2, 0).unwrap());
        assert!(!g.has_directed_path(1, 1).unwrap());
        assert!(g.has_directed_path(0, 7).is_err());
        let g = two_components();
        assert!(!g.has_directed_path(1, 5).unwrap());
        assert!(g.has_directed_path(3, 5).unwrap());
    }

    #[test]
    fn connectivity() {
        assert!(chain().is_weakly_connected());
        assert!(Dag::empty(vec!["a".into()]).unwrap().is_weakly_connected());
        let g = Dag::from_named_edges(&["a", "b", "c"], &[("a", "b")]).unwrap();
        assert!(!g.is_weakly_connected());
        assert!(!two_components().is_weakly_connected());
    }

    #[test]
    fn shd_examples() {
        let l = Dag::default_labels(6);
        let a = Dag::new(l.clone(), [(0, 1), (2, 3)]).unwrap();
        let b = Dag::new(l.clone(), [(1, 0), (4, 5)]).unwrap();
        assert_eq!(shd(&a, &a).unwrap(), 0);
        assert_eq!(shd(&a, &b).unwrap(), 3);
        let t = two_components();
        let mut edges: Vec<_> = t.edges().iter().copied().filter(|&e| e != (3, 5)).collect();
        edges.push((5, 3));
        let r = t.with_edges(edges).unwrap();
        assert_eq!(shd(&t, &r).unwrap(), 1);
        let other = Dag::empty(Dag::default_labels(5)).unwrap();
        assert!(shd(&a, &other).is_err());
    }

    #[test]
    fn topological_order_and_descendants() {
        let e = Dag::empty(Dag::default_labels(4)).unwrap();
        assert_eq!(e.topological_order(), vec![0, 1, 2, 3]);
        assert_eq!(chain().topological_order(), vec![0, 1, 2]);
        let rev = Dag::new(Dag::default_labels(3), [(2, 1), (1, 0)]).unwrap();
        assert_eq!(rev.topological_order(), vec![2, 1, 0]);
        let diamond = Dag::from_named_edges(
            &["a", "b", "c", "d"],
            &[("a", "b"), ("a", "c"), ("b", "d"), ("c", "d")],
        )
        .unwrap();
        assert_eq!(diamond.descendants(0), BTreeSet::from([1, 2, 3]));
        assert_eq!(diamond.parents(3), &[1, 2]);
        assert!(diamond.descendants(3).is_empty());
    }

    #[test]
    fn text_and_dot_formats() {
        let g = two_components();
        let text = g.to_text();
        assert!(text.starts_with("nodes: x0, x1, x2, x3, x4, x5, x6\n"));
        let back = Dag::from_text(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_text(), text);
        let shuffled = "# comment\nnodes: a, b, c\n\nb -> c\na -> b\n";
        assert_eq!(Dag::from_text(shuffled).unwrap(), chain());
        assert!(Dag::from_text("a -> b\n").is_err());
        assert!(matches!(
            Dag::from_text("nodes: a, b\na -> z\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(Dag::from_text("nodes:\n").unwrap().n_nodes() == 0);
        let dot = chain().to_dot();
        assert!(dot.contains("\"a\" -> \"b\";"));
    }

    fn brute_force_path(g: &Dag, u: usize, v: usize) -> bool {
        // Enumerate simple paths by DFS over explicit path stacks.
        let mut stack = vec![vec![u]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            for &c in g.children(last) {
                if c == v {
                    return true;
                }
                if !path.contains(&c) {
                    let mut p = path.clone();
                    p.push(c);
                    stack.push(p);
                }
            }
        }
        false
    }

    fn arb_dag(max_n: usize) -> impl Strategy<Value = Dag> {
        (1..=max_n, any::<u64>(), 0.0..0.35f64).prop_map(|(n, seed, p)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_dag(n, p, &mut rng).unwrap()
        })
    }

    proptest! {
        #[test]
        fn path_agrees_with_enumeration(g in arb_dag(7)) {
            for u in 0..g.n_nodes() {
                for v in 0..g.n_nodes() {
                    let expected = u != v && brute_force_path(&g, u, v);
                    prop_assert_eq!(g.has_directed_path(u, v).unwrap(), expected);
                }
            }
        }

        #[test]
        fn shd_is_a_metric(seeds in any::<[u64; 3]>(), n in 1usize..8) {
            let gs: Vec<Dag> = seeds
                .iter()
                .map(|&s| random_dag(n, 0.3, &mut ChaCha8Rng::seed_from_u64(s)).unwrap())
                .collect();
            let d = |a: &Dag, b: &Dag| shd(a, b).unwrap();
            prop_assert_eq!(d(&gs[0], &gs[0]), 0);
            prop_assert_eq!(d(&gs[0], &gs[1]), d(&gs[1], &gs[0]));
            prop_assert_eq!(d(&gs[0], &gs[1]) == 0, gs[0] == gs[1]);
            prop_assert!(d(&gs[0], &gs[2]) <= d(&gs[0], &gs[1]) + d(&gs[1], &gs[2]));
        }

        #[test]
        fn text_round_trip(g in arb_dag(7)) {
            prop_assert_eq!(Dag::from_text(&g.to_text()).unwrap(), g);
        }
    }
}
