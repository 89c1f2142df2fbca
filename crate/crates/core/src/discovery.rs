//! Score-based causal discovery.
//!
//! Greedy equivalence search walks the space of Markov equivalence classes
//! (represented as CPDAGs) with a decomposable multinomial BIC score: a
//! forward phase of edge insertions followed by a backward phase of edge
//! deletions, each taking the best-scoring valid operator until none
//! improves the score.
//!
//! Edge knowledge is folded into the search state. Required edges are
//! installed before the forward phase and never deleted; forbidden edges are
//! never inserted. After every operator the state is re-completed into a
//! CPDAG, required and forbidden orientations are imposed and propagated
//! with Meek's rules, and operators whose result cannot honor the knowledge
//! are discarded.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Maximum parent-set size for a local score.
pub const MAX_SCORE_PARENTS: usize = 15;
/// Maximum number of variables the search handles (one bit per node).
pub const MAX_SEARCH_NODES: usize = 64;

const IMPROVEMENT_EPS: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Knowledge
// ---------------------------------------------------------------------------

/// Required and forbidden directed edges, by variable name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Knowledge {
    required: BTreeSet<(String, String)>,
    forbidden: BTreeSet<(String, String)>,
}

/// Knowledge resolved against an indexed node set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct ResolvedKnowledge {
    pub required: Vec<(usize, usize)>,
    pub forbidden: BTreeSet<(usize, usize)>,
}

impl ResolvedKnowledge {
    fn is_required_pair(&self, a: usize, b: usize) -> bool {
        self.required.contains(&(a, b)) || self.required.contains(&(b, a))
    }
}

impl Knowledge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn require(&mut self, from: impl Into<String>, to: impl Into<String>) -> &mut Self {
        self.required.insert((from.into(), to.into()));
        self
    }

    pub fn forbid(&mut self, from: impl Into<String>, to: impl Into<String>) -> &mut Self {
        self.forbidden.insert((from.into(), to.into()));
        self
    }

    pub fn required(&self) -> &BTreeSet<(String, String)> {
        &self.required
    }

    pub fn forbidden(&self) -> &BTreeSet<(String, String)> {
        &self.forbidden
    }

    pub fn is_empty(&self) -> bool {
        self.required.is_empty() && self.forbidden.is_empty()
    }

    /// Every required and forbidden edge reversed.
    pub fn reversed(&self) -> Self {
        let flip = |s: &BTreeSet<(String, String)>| {
            s.iter().map(|(a, b)| (b.clone(), a.clone())).collect()
        };
        Self {
            required: flip(&self.required),
            forbidden: flip(&self.forbidden),
        }
    }

    /// Checks internal consistency and resolves names against `labels`.
    pub(crate) fn resolve(&self, labels: &[String]) -> Result<ResolvedKnowledge> {
        let find = |name: &str| {
            labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::Knowledge(format!("unknown variable {name:?}")))
        };
        let resolve_set = |set: &BTreeSet<(String, String)>| {
            set.iter()
                .map(|(a, b)| {
                    let pair = (find(a)?, find(b)?);
                    if pair.0 == pair.1 {
                        return Err(Error::Knowledge(format!("self edge on {a:?}")));
                    }
                    Ok(pair)
                })
                .collect::<Result<Vec<_>>>()
        };
        let required = resolve_set(&self.required)?;
        let forbidden: BTreeSet<_> = resolve_set(&self.forbidden)?.into_iter().collect();
        for &(a, b) in &required {
            if forbidden.contains(&(a, b)) {
                return Err(Error::Knowledge(format!(
                    "{} -> {} is both required and forbidden",
                    labels[a], labels[b]
                )));
            }
            if required.contains(&(b, a)) {
                return Err(Error::Knowledge(format!(
                    "{} -> {} is required in both directions",
                    labels[a], labels[b]
                )));
            }
        }
        if Dag::new(labels.to_vec(), required.iter().copied()).is_err() {
            return Err(Error::Knowledge("required edges form a cycle".into()));
        }
        Ok(ResolvedKnowledge {
            required,
            forbidden,
        })
    }

    /// Checks the knowledge against a node set without running anything.
    pub fn validate(&self, labels: &[String]) -> Result<()> {
        self.resolve(labels).map(|_| ())
    }

    /// Parses `require a -> b` / `forbid a -> b` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut k = Knowledge::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (keyword, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err(format!("expected `require|forbid a -> b`, found {line:?}")))?;
            let (a, b) = rest
                .split_once("->")
                .ok_or_else(|| err(format!("missing `->` in {line:?}")))?;
            let (a, b) = (a.trim(), b.trim());
            if a.is_empty() || b.is_empty() {
                return Err(err(format!("empty variable name in {line:?}")));
            }
            match keyword {
                "require" => k.require(a, b),
                "forbid" => k.forbid(a, b),
                other => return Err(err(format!("unknown directive {other:?}"))),
            };
        }
        Ok(k)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.required {
            let _ = writeln!(out, "require {a} -> {b}");
        }
        for (a, b) in &self.forbidden {
            let _ = writeln!(out, "forbid {a} -> {b}");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Multinomial BIC of `node` given `parents`: maximum-likelihood
/// log-likelihood minus `(penalty / 2) · 2^|parents| · ln m`.
pub fn bic_score(data: &BinaryDataset, node: usize, parents: &[usize], penalty: f64) -> Result<f64> {
    if parents.contains(&node) {
        return Err(Error::invalid("a node cannot be its own parent"));
    }
    if parents.len() > MAX_SCORE_PARENTS {
        return Err(Error::Capacity {
            what: "parents in a local score",
            got: parents.len(),
            limit: MAX_SCORE_PARENTS,
        });
    }
    let m = data.n_rows();
    if m == 0 {
        return Err(Error::invalid("cannot score an empty dataset"));
    }
    let mut vars = parents.to_vec();
    vars.push(node);
    let counts = data.counts(&vars)?;
    let mut ll = 0.0;
    for pair in counts.chunks_exact(2) {
        let total = (pair[0] + pair[1]) as f64;
        for &c in pair {
            if c > 0 {
                let c = c as f64;
                ll += c * (c / total).ln();
            }
        }
    }
    let params = (1u64 << parents.len()) as f64;
    Ok(ll - 0.5 * penalty * params * (m as f64).ln())
}

/// Total BIC of a DAG; the sum of its local scores.
pub fn graph_score(data: &BinaryDataset, g: &Dag, penalty: f64) -> Result<f64> {
    (0..g.n_nodes())
        .map(|v| bic_score(data, v, g.parents(v), penalty))
        .sum()
}

struct Scorer<'a> {
    data: &'a BinaryDataset,
    penalty: f64,
    cache: HashMap<(usize, u64), f64>,
}

impl<'a> Scorer<'a> {
    fn new(data: &'a BinaryDataset, penalty: f64) -> Self {
        Self {
            data,
            penalty,
            cache: HashMap::new(),
        }
    }

    fn local(&mut self, node: usize, parents: u64) -> Result<f64> {
        if let Some(&s) = self.cache.get(&(node, parents)) {
            return Ok(s);
        }
        let list: Vec<usize> = bits(parents).collect();
        let s = bic_score(self.data, node, &list, self.penalty)?;
        self.cache.insert((node, parents), s);
        Ok(s)
    }

    /// Score of a fully directed pattern.
    fn dag(&mut self, dag: &Pattern) -> Result<f64> {
        let mut total = 0.0;
        for v in 0..dag.n {
            total += self.local(v, dag.pa[v])?;
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// Partially directed graphs on bitmasks
// ---------------------------------------------------------------------------

fn bit(i: usize) -> u64 {
    1u64 << i
}

fn bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(i)
        }
    })
}

/// All submasks of `mask`, in increasing numeric order.
fn submasks(mask: u64) -> Vec<u64> {
    let members: Vec<usize> = bits(mask).collect();
    let mut out: Vec<u64> = (0..1u64 << members.len())
        .map(|k| {
            members
                .iter()
                .enumerate()
                .filter(|(j, _)| (k >> j) & 1 == 1)
                .fold(0, |acc, (_, &v)| acc | bit(v))
        })
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern {
    n: usize,
    pa: Vec<u64>,
    ch: Vec<u64>,
    ne: Vec<u64>,
}

impl Pattern {
    fn empty(n: usize) -> Self {
        Self {
            n,
            pa: vec![0; n],
            ch: vec![0; n],
            ne: vec![0; n],
        }
    }

    fn from_dag(g: &Dag) -> Self {
        let mut p = Self::empty(g.n_nodes());
        for &(a, b) in g.edges() {
            p.add_directed(a, b);
        }
        p
    }

    fn adj(&self, v: usize) -> u64 {
        self.pa[v] | self.ch[v] | self.ne[v]
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj(a) & bit(b) != 0
    }

    fn is_directed(&self, a: usize, b: usize) -> bool {
        self.ch[a] & bit(b) != 0
    }

    fn is_undirected(&self, a: usize, b: usize) -> bool {
        self.ne[a] & bit(b) != 0
    }

    fn add_directed(&mut self, a: usize, b: usize) {
        self.ch[a] |= bit(b);
        self.pa[b] |= bit(a);
    }

    fn add_undirected(&mut self, a: usize, b: usize) {
        self.ne[a] |= bit(b);
        self.ne[b] |= bit(a);
    }

    fn remove(&mut self, a: usize, b: usize) {
        for (x, y) in [(a, b), (b, a)] {
            self.ch[x] &= !bit(y);
            self.pa[x] &= !bit(y);
            self.ne[x] &= !bit(y);
        }
    }

    fn orient(&mut self, a: usize, b: usize) {
        self.remove(a, b);
        self.add_directed(a, b);
    }

    fn is_clique(&self, mask: u64) -> bool {
        bits(mask).all(|v| (mask & !bit(v)) & !self.adj(v) == 0)
    }

    /// Is `to` reachable from `from` along edges `a -> b` or `a -- b`
    /// without passing through `blocked`?
    fn semi_directed_reachable(&self, from: usize, to: usize, blocked: u64) -> bool {
        let mut seen = bit(from) | blocked;
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            let next = (self.ch[v] | self.ne[v]) & !seen;
            if next & bit(to) != 0 {
                return true;
            }
            seen |= next;
            stack.extend(bits(next));
        }
        false
    }

    fn is_fully_directed(&self) -> bool {
        self.ne.iter().all(|&m| m == 0)
    }

    fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| bits(self.ch[a]).map(move |b| (a, b)))
            .collect()
    }

    fn undirected_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|a| bits(self.ne[a] & !((bit(a) << 1) - 1)).map(move |b| (a, b)))
            .collect()
    }

    /// Consistent extension (Dor & Tarsi): repeatedly remove the
    /// lowest-index sink whose undirected neighbors are adjacent to all its
    /// other neighbors, orienting those undirected edges into it.
    fn extension(&self) -> Option<Pattern> {
        let mut out = self.clone();
        let mut alive: u64 = if self.n == 64 { u64::MAX } else { bit(self.n) - 1 };
        while alive != 0 {
            let x = bits(alive).find(|&x| {
                if self.ch[x] & alive != 0 {
                    return false;
                }
                let adj_x = self.adj(x) & alive;
                bits(self.ne[x] & alive).all(|y| (adj_x & !bit(y)) & !self.adj(y) == 0)
            })?;
            for y in bits(self.ne[x] & alive) {
                out.orient(y, x);
            }
            alive &= !bit(x);
        }
        Some(out)
    }

    /// CPDAG of a fully directed acyclic pattern: v-structure edges stay
    /// directed, everything else starts undirected and Meek's rules restore
    /// the compelled orientations.
    fn cpdag_of(dag: &Pattern) -> Pattern {
        let mut p = Pattern::empty(dag.n);
        for (a, b) in dag.directed_edges() {
            p.add_undirected(a, b);
        }
        for c in 0..dag.n {
            let parents: Vec<usize> = bits(dag.pa[c]).collect();
            for (i, &a) in parents.iter().enumerate() {
                for &b in &parents[i + 1..] {
                    if !dag.adjacent(a, b) {
                        p.orient(a, c);
                        p.orient(b, c);
                    }
                }
            }
        }
        p.meek();
        p
    }

    fn meek_rule_applies(&self, a: usize, b: usize) -> bool {
        // R1: c -> a -- b, c and b nonadjacent.
        if self.pa[a] & !self.adj(b) & !bit(b) != 0 {
            return true;
        }
        // R2: a -> c -> b.
        if self.ch[a] & self.pa[b] != 0 {
            return true;
        }
        // R3: a -- c -> b, a -- d -> b, c and d nonadjacent.
        let cs: Vec<usize> = bits(self.ne[a] & self.pa[b]).collect();
        for (i, &c) in cs.iter().enumerate() {
            if cs[i + 1..].iter().any(|&d| !self.adjacent(c, d)) {
                return true;
            }
        }
        // R4: c -> d -> b, a adjacent to c and d, c and b nonadjacent.
        for d in bits(self.adj(a) & self.pa[b]) {
            if self.pa[d] & self.adj(a) & !self.adj(b) & !bit(b) != 0 {
                return true;
            }
        }
        false
    }

    /// Closes the pattern under Meek's orientation rules R1-R4.
    fn meek(&mut self) {
        loop {
            let mut changed = false;
            for a in 0..self.n {
                for b in bits(self.ne[a]).collect::<Vec<_>>() {
                    if self.is_undirected(a, b) && self.meek_rule_applies(a, b) {
                        self.orient(a, b);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Imposes required and forbidden orientations, closing under Meek's
    /// rules after each round. Returns false on a contradiction.
    fn apply_knowledge(&mut self, k: &ResolvedKnowledge) -> bool {
        loop {
            let mut changed = false;
            for &(a, b) in &k.required {
                if self.is_directed(a, b) {
                    continue;
                }
                if !self.is_undirected(a, b) {
                    return false;
                }
                self.orient(a, b);
                changed = true;
            }
            for &(a, b) in &k.forbidden {
                if self.is_directed(a, b) {
                    return false;
                }
                if self.is_undirected(a, b) {
                    self.orient(b, a);
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
            self.meek();
        }
    }

    /// Re-completes an operator result into a knowledge-oriented CPDAG and
    /// returns it together with a consistent extension.
    fn complete(&self, k: &ResolvedKnowledge) -> Option<(Pattern, Pattern)> {
        let dag = self.extension()?;
        let mut cp = Pattern::cpdag_of(&dag);
        if !cp.apply_knowledge(k) {
            return None;
        }
        let ext = cp.extension()?;
        Some((cp, ext))
    }

    fn to_cpdag(&self, labels: &[String]) -> Cpdag {
        Cpdag {
            labels: labels.to_vec(),
            directed: self.directed_edges().into_iter().collect(),
            undirected: self.undirected_edges().into_iter().collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// CPDAG
// ---------------------------------------------------------------------------

/// Partially directed graph representing a (knowledge-refined) Markov
/// equivalence class. Undirected edges are stored as `(low, high)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpdag {
    labels: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    undirected: BTreeSet<(usize, usize)>,
}

impl Cpdag {
    pub fn new<D, U>(labels: Vec<String>, directed: D, undirected: U) -> Result<Self>
    where
        D: IntoIterator<Item = (usize, usize)>,
        U: IntoIterator<Item = (usize, usize)>,
    {
        let n = labels.len();
        if n > MAX_SEARCH_NODES {
            return Err(Error::Capacity {
                what: "pattern nodes",
                got: n,
                limit: MAX_SEARCH_NODES,
            });
        }
        let directed: BTreeSet<_> = directed.into_iter().collect();
        let undirected: BTreeSet<_> = undirected
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        for &(a, b) in directed.iter().chain(&undirected) {
            if a >= n || b >= n || a == b {
                return Err(Error::invalid(format!("invalid pattern edge ({a}, {b})")));
            }
        }
        for &(a, b) in &directed {
            if directed.contains(&(b, a)) || undirected.contains(&(a.min(b), a.max(b))) {
                return Err(Error::invalid(format!(
                    "pattern has two edges between {} and {}",
                    labels[a], labels[b]
                )));
            }
        }
        Dag::new(labels.clone(), directed.iter().copied())?;
        Ok(Self {
            labels,
            directed,
            undirected,
        })
    }

    /// The equivalence class of a DAG.
    pub fn from_dag(g: &Dag) -> Self {
        Pattern::cpdag_of(&Pattern::from_dag(g)).to_cpdag(g.labels())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn undirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.undirected
    }

    pub fn n_edges(&self) -> usize {
        self.directed.len() + self.undirected.len()
    }

    /// Unordered adjacencies as `(low, high)` pairs.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.directed
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .chain(self.undirected.iter().copied())
            .collect()
    }

    fn to_pattern(&self) -> Pattern {
        let mut p = Pattern::empty(self.labels.len());
        for &(a, b) in &self.directed {
            p.add_directed(a, b);
        }
        for &(a, b) in &self.undirected {
            p.add_undirected(a, b);
        }
        p
    }

    /// `a -> b` and `a -- b` lines after a `nodes:` header.
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes: {}\n", self.labels.join(", "));
        for &(a, b) in &self.directed {
            let _ = writeln!(out, "{} -> {}", self.labels[a], self.labels[b]);
        }
        for &(a, b) in &self.undirected {
            let _ = writeln!(out, "{} -- {}", self.labels[a], self.labels[b]);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Greedy equivalence search
// ---------------------------------------------------------------------------

/// Result of a search along with the total score after each stage.
#[derive(Debug, Clone)]
pub struct GesOutcome {
    pub pattern: Cpdag,
    pub initial_score: f64,
    pub forward_score: f64,
    pub final_score: f64,
    pub insertions: usize,
    pub deletions: usize,
}

struct Candidate {
    delta: f64,
    pattern: Pattern,
    dag: Pattern,
}

fn consider(best: &mut Option<Candidate>, delta: f64, result: Option<(Pattern, Pattern)>) {
    let Some((pattern, dag)) = result else {
        return;
    };
    if delta > IMPROVEMENT_EPS && best.as_ref().is_none_or(|b| delta > b.delta) {
        *best = Some(Candidate {
            delta,
            pattern,
            dag,
        });
    }
}

struct Search<'a> {
    scorer: Scorer<'a>,
    knowledge: ResolvedKnowledge,
    state: Pattern,
    score: f64,
}

impl Search<'_> {
    /// Best Insert(x, y, T) over candidates visited in (x, y, T) order.
    fn best_insert(&mut self) -> Result<Option<Candidate>> {
        let n = self.state.n;
        let mut best = None;
        for x in 0..n {
            for y in 0..n {
                if x == y || self.state.adjacent(x, y) || self.knowledge.forbidden.contains(&(x, y)) {
                    continue;
                }
                let adj_x = self.state.adj(x);
                let na = self.state.ne[y] & adj_x;
                let free = self.state.ne[y] & !adj_x & !bit(x);
                for t in submasks(free) {
                    let cond = na | t;
                    if !self.state.is_clique(cond)
                        || self.state.semi_directed_reachable(y, x, cond)
                    {
                        continue;
                    }
                    let mut next = self.state.clone();
                    next.add_directed(x, y);
                    for z in bits(t) {
                        next.orient(z, y);
                    }
                    let result = next.complete(&self.knowledge);
                    let delta = match &result {
                        Some((_, dag)) => self.scorer.dag(dag)? - self.score,
                        None => continue,
                    };
                    consider(&mut best, delta, result);
                }
            }
        }
        Ok(best)
    }

    /// Best Delete(x, y, H) over candidates visited in (x, y, H) order.
    fn best_delete(&mut self) -> Result<Option<Candidate>> {
        let n = self.state.n;
        let mut best = None;
        for x in 0..n {
            for y in 0..n {
                let removable = self.state.is_directed(x, y) || self.state.is_undirected(x, y);
                if !removable || self.knowledge.is_required_pair(x, y) {
                    continue;
                }
                let na = self.state.ne[y] & self.state.adj(x);
                for h in submasks(na) {
                    if !self.state.is_clique(na & !h) {
                        continue;
                    }
                    let mut next = self.state.clone();
                    next.remove(x, y);
                    for z in bits(h) {
                        next.orient(y, z);
                        if next.is_undirected(x, z) {
                            next.orient(x, z);
                        }
                    }
                    let result = next.complete(&self.knowledge);
                    let delta = match &result {
                        Some((_, dag)) => self.scorer.dag(dag)? - self.score,
                        None => continue,
                    };
                    consider(&mut best, delta, result);
                }
            }
        }
        Ok(best)
    }

    fn apply(&mut self, c: Candidate) -> Result<()> {
        // Recomputed, not accumulated from deltas.
        self.score = self.scorer.dag(&c.dag)?;
        self.state = c.pattern;
        Ok(())
    }
}

/// Greedy equivalence search; see [`ges_detailed`].
pub fn ges(data: &BinaryDataset, knowledge: &Knowledge, penalty: f64) -> Result<Cpdag> {
    ges_detailed(data, knowledge, penalty).map(|o| o.pattern)
}

/// Greedy equivalence search with a BIC score (`penalty` scales the
/// complexity term). Deterministic: among equally scoring operators the
/// first in (x, y, subset) order wins.
pub fn ges_detailed(data: &BinaryDataset, knowledge: &Knowledge, penalty: f64) -> Result<GesOutcome> {
    let labels = data.columns();
    let n = labels.len();
    if n > MAX_SEARCH_NODES {
        return Err(Error::Capacity {
            what: "variables for search",
            got: n,
            limit: MAX_SEARCH_NODES,
        });
    }
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::invalid(format!("penalty must be positive, got {penalty}")));
    }
    let k = knowledge.resolve(labels)?;
    let mut start = Pattern::empty(n);
    for &(a, b) in &k.required {
        start.add_directed(a, b);
    }
    let (state, dag) = start.complete(&k).ok_or_else(|| {
        Error::Knowledge("required and forbidden edges admit no consistent graph".into())
    })?;
    let mut scorer = Scorer::new(data, penalty);
    let score = scorer.dag(&dag)?;
    let mut search = Search {
        scorer,
        knowledge: k,
        state,
        score,
    };
    let initial_score = search.score;
    let mut insertions = 0;
    while let Some(c) = search.best_insert()? {
        search.apply(c)?;
        insertions += 1;
    }
    let forward_score = search.score;
    let mut deletions = 0;
    while let Some(c) = search.best_delete()? {
        search.apply(c)?;
        deletions += 1;
    }
    Ok(GesOutcome {
        pattern: search.state.to_cpdag(labels),
        initial_score,
        forward_score,
        final_score: search.score,
        insertions,
        deletions,
    })
}

// ---------------------------------------------------------------------------
// Orientation and hints
// ---------------------------------------------------------------------------

/// Turns a pattern into one DAG of its class: knowledge orientations first,
/// then Meek closure, then repeatedly the lowest remaining undirected edge
/// `(a, b)`, `a < b`, is oriented `a -> b` and the closure recomputed.
pub fn orient_to_dag(p: &Cpdag, knowledge: &Knowledge) -> Result<Dag> {
    let k = knowledge
        .resolve(&p.labels)
        .map_err(|e| Error::Orientation(e.to_string()))?;
    let original = p.to_pattern();
    let mut g = original.clone();
    if !g.apply_knowledge(&k) {
        return Err(Error::Orientation(
            "knowledge contradicts the pattern orientation".into(),
        ));
    }
    g.meek();
    while let Some(&(a, b)) = g.undirected_edges().first() {
        g.orient(a, b);
        g.meek();
    }
    debug_assert!(g.is_fully_directed());
    let dag = Dag::new(p.labels.clone(), g.directed_edges())
        .map_err(|_| Error::Orientation("orientation produced a directed cycle".into()))?;
    // No v-structures beyond those already directed in the pattern.
    for c in 0..dag.n_nodes() {
        let ps = dag.parents(c);
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                if !dag.is_adjacent(a, b)
                    && !(original.is_directed(a, c) && original.is_directed(b, c))
                {
                    return Err(Error::Orientation(format!(
                        "orientation creates a new v-structure {} -> {} <- {}",
                        p.labels[a], p.labels[c], p.labels[b]
                    )));
                }
            }
        }
    }
    Ok(dag)
}

/// Requires `floor(p_hint · |E|)` true edges drawn uniformly without
/// replacement.
pub fn pick_hint_edges<R: Rng + ?Sized>(g: &Dag, p_hint: f64, rng: &mut R) -> Result<Knowledge> {
    if !(0.0..=1.0).contains(&p_hint) {
        return Err(Error::invalid(format!("p_hint {p_hint} outside [0, 1]")));
    }
    let edges: Vec<(usize, usize)> = g.edges().iter().copied().collect();
    let k = floor_fraction(p_hint, edges.len());
    let mut knowledge = Knowledge::new();
    for i in rand::seq::index::sample(rng, edges.len(), k).into_iter() {
        let (a, b) = edges[i];
        knowledge.require(g.label(a), g.label(b));
    }
    Ok(knowledge)
}

/// `floor(p · count)`, tolerant of binary rounding such as `0.29 · 100`.
pub(crate) fn floor_fraction(p: f64, count: usize) -> usize {
    ((p * count as f64) + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesnet::Cbn;
    use crate::graph::random_dag;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<String> {
        Dag::default_labels(n)
    }

    fn strong_chain() -> Cbn {
        let g = Dag::new(labels(3), [(0, 1), (1, 2)]).unwrap();
        Cbn::from_tables(g, vec![vec![0.5], vec![0.1, 0.9], vec![0.1, 0.9]]).unwrap()
    }

    #[test]
    fn bic_of_constant_column() {
        let m = 50;
        let d = BinaryDataset::new(labels(2), vec![vec![0, 1]; m]).unwrap();
        let s = bic_score(&d, 0, &[], 1.0).unwrap();
        assert!((s + 0.5 * (m as f64).ln()).abs() < 1e-12);
        let s2 = bic_score(&d, 0, &[], 2.0).unwrap();
        assert!((s2 + (m as f64).ln()).abs() < 1e-12);
        assert!(bic_score(&d, 0, &[0], 1.0).is_err());
    }

    #[test]
    fn bic_matches_hand_computation() {
        // x1 given x0: stratum x0=0 has x1 = {0,0,1}, stratum x0=1 has {1}.
        let d = BinaryDataset::new(labels(2), vec![vec![0, 0], vec![0, 0], vec![0, 1], vec![1, 1]])
            .unwrap();
        let ll = 2.0 * (2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln();
        let expected = ll - 0.5 * 2.0 * 4f64.ln();
        assert!((bic_score(&d, 1, &[0], 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bic_capacity() {
        let d = BinaryDataset::new(labels(17), vec![vec![0; 17]]).unwrap();
        let parents: Vec<usize> = (1..17).collect();
        assert!(matches!(bic_score(&d, 0, &parents, 1.0), Err(Error::Capacity { .. })));
    }

    #[test]
    fn graph_score_decomposes() {
        let b = strong_chain();
        let d = b.sample(300, &mut ChaCha8Rng::seed_from_u64(1));
        let total = graph_score(&d, b.graph(), 1.0).unwrap();
        let parts = bic_score(&d, 0, &[], 1.0).unwrap()
            + bic_score(&d, 1, &[0], 1.0).unwrap()
            + bic_score(&d, 2, &[1], 1.0).unwrap();
        assert_eq!(total, parts);
    }

    #[test]
    fn penalty_dominates_on_independent_columns() {
        let g = Dag::empty(labels(2)).unwrap();
        let b = Cbn::from_tables(g, vec![vec![0.5], vec![0.5]]).unwrap();
        let wins = (0..100)
            .filter(|&seed| {
                let d = b.sample(1000, &mut ChaCha8Rng::seed_from_u64(seed));
                bic_score(&d, 0, &[], 1.0).unwrap() > bic_score(&d, 0, &[1], 1.0).unwrap()
            })
            .count();
        assert!(wins >= 95, "{wins}");
    }

    #[test]
    fn knowledge_validation() {
        let l = labels(3);
        let mut k = Knowledge::new();
        k.require("x0", "x1").forbid("x0", "x1");
        assert!(matches!(k.validate(&l), Err(Error::Knowledge(_))));
        let mut k = Knowledge::new();
        k.require("x0", "x1").require("x1", "x0");
        assert!(k.validate(&l).is_err());
        let mut k = Knowledge::new();
        k.require("x0", "x1").require("x1", "x2").require("x2", "x0");
        assert!(k.validate(&l).is_err());
        let mut k = Knowledge::new();
        k.require("x0", "nope");
        assert!(k.validate(&l).is_err());
        let d = BinaryDataset::new(l, vec![vec![0, 0, 0]]).unwrap();
        let mut bad = Knowledge::new();
        bad.require("x0", "x1").forbid("x0", "x1");
        assert!(matches!(ges(&d, &bad, 1.0), Err(Error::Knowledge(_))));
    }

    #[test]
    fn knowledge_text_format() {
        let text = "# hints\nrequire a -> b\n\nforbid c -> a  # trailing\nrequire Wet Grass -> b\n";
        let k = Knowledge::parse(text).unwrap();
        assert!(k.required().contains(&("a".into(), "b".into())));
        assert!(k.required().contains(&("Wet Grass".into(), "b".into())));
        assert!(k.forbidden().contains(&("c".into(), "a".into())));
        assert_eq!(Knowledge::parse(&k.to_text()).unwrap(), k);
        assert!(matches!(Knowledge::parse("allow a -> b"), Err(Error::Parse { line: 1, .. })));
        assert!(Knowledge::parse("require a b").is_err());
        let r = k.reversed();
        assert!(r.required().contains(&("b".into(), "a".into())));
    }

    #[test]
    fn cpdag_of_chain_and_collider() {
        let chain = Dag::new(labels(3), [(0, 1), (1, 2)]).unwrap();
        let c = Cpdag::from_dag(&chain);
        assert!(c.directed().is_empty());
        assert_eq!(c.undirected(), &BTreeSet::from([(0, 1), (1, 2)]));
        let collider = Dag::new(labels(3), [(0, 2), (1, 2)]).unwrap();
        let c = Cpdag::from_dag(&collider);
        assert_eq!(c.directed(), &BTreeSet::from([(0, 2), (1, 2)]));
        // Meek R1 propagates below a collider.
        let g = Dag::new(labels(4), [(0, 2), (1, 2), (2, 3)]).unwrap();
        let c = Cpdag::from_dag(&g);
        assert!(c.directed().contains(&(2, 3)));
    }

    #[test]
    fn ges_recovers_chain_class() {
        let b = strong_chain();
        let d = b.sample(1000, &mut ChaCha8Rng::seed_from_u64(7));
        let out = ges_detailed(&d, &Knowledge::new(), 1.0).unwrap();
        assert_eq!(out.pattern, Cpdag::from_dag(b.graph()));
        assert!(out.forward_score >= out.initial_score);
        assert!(out.final_score >= out.forward_score);
    }

    #[test]
    fn ges_recovers_collider_orientation() {
        let g = Dag::new(labels(3), [(0, 2), (1, 2)]).unwrap();
        let b = Cbn::from_tables(g, vec![vec![0.5], vec![0.5], vec![0.05, 0.6, 0.6, 0.95]]).unwrap();
        let d = b.sample(2000, &mut ChaCha8Rng::seed_from_u64(3));
        let p = ges(&d, &Knowledge::new(), 1.0).unwrap();
        assert_eq!(p, Cpdag::from_dag(b.graph()));
    }

    #[test]
    fn ges_with_required_edge_orients_it() {
        let b = strong_chain();
        let d = b.sample(1000, &mut ChaCha8Rng::seed_from_u64(8));
        let mut k = Knowledge::new();
        k.require("x1", "x0");
        let p = ges(&d, &k, 1.0).unwrap();
        assert!(p.directed().contains(&(1, 0)));
        let dag = orient_to_dag(&p, &k).unwrap();
        assert!(dag.has_edge(1, 0) && dag.has_edge(1, 2));
    }

    #[test]
    fn ges_respects_forbidden_edges() {
        let b = strong_chain();
        let d = b.sample(1000, &mut ChaCha8Rng::seed_from_u64(9));
        let mut k = Knowledge::new();
        k.forbid("x0", "x1").forbid("x1", "x0");
        let p = ges(&d, &k, 1.0).unwrap();
        assert!(!p.skeleton().contains(&(0, 1)));
        let mut k = Knowledge::new();
        k.forbid("x1", "x2");
        let p = ges(&d, &k, 1.0).unwrap();
        let dag = orient_to_dag(&p, &k).unwrap();
        assert!(!dag.has_edge(1, 2));
    }

    #[test]
    fn empty_data_signal_gives_empty_graph() {
        let g = Dag::empty(labels(4)).unwrap();
        let b = Cbn::from_tables(g, vec![vec![0.5]; 4]).unwrap();
        let d = b.sample(1000, &mut ChaCha8Rng::seed_from_u64(4));
        let p = ges(&d, &Knowledge::new(), 1.0).unwrap();
        assert_eq!(p.n_edges(), 0);
    }

    #[test]
    fn orient_examples() {
        let full = Cpdag::new(labels(3), [(0, 1), (2, 1)], []).unwrap();
        let dag = orient_to_dag(&full, &Knowledge::new()).unwrap();
        assert_eq!(dag.edges(), &BTreeSet::from([(0, 1), (2, 1)]));

        let single = Cpdag::new(labels(2), [], [(1, 0)]).unwrap();
        let dag = orient_to_dag(&single, &Knowledge::new()).unwrap();
        assert_eq!(dag.edges(), &BTreeSet::from([(0, 1)]));

        let chain = Cpdag::new(labels(3), [], [(0, 1), (1, 2)]).unwrap();
        let mut k = Knowledge::new();
        k.require("x1", "x0");
        let dag = orient_to_dag(&chain, &k).unwrap();
        assert_eq!(dag.edges(), &BTreeSet::from([(1, 0), (1, 2)]));

        // x0 -> x1 <- x2 would be a new collider.
        let mut k = Knowledge::new();
        k.require("x0", "x1").require("x2", "x1");
        assert!(matches!(orient_to_dag(&chain, &k), Err(Error::Orientation(_))));
    }

    #[test]
    fn hint_counts() {
        let g = Dag::new(labels(6), [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = pick_hint_edges(&g, 0.3, &mut rng).unwrap();
        assert_eq!(k.required().len(), 1);
        assert!(k.forbidden().is_empty());
        let k = pick_hint_edges(&g, 1.0, &mut rng).unwrap();
        assert_eq!(k.required().len(), 5);
        assert!(pick_hint_edges(&g, 0.0, &mut rng).unwrap().is_empty());
        assert!(pick_hint_edges(&g, 1.2, &mut rng).is_err());
        for (a, b) in k.required() {
            assert!(g.has_edge(g.index_of(a).unwrap(), g.index_of(b).unwrap()));
        }
        assert_eq!(floor_fraction(0.29, 100), 29);
    }

    fn v_structures(g: &Dag) -> BTreeSet<(usize, usize, usize)> {
        let mut out = BTreeSet::new();
        for c in 0..g.n_nodes() {
            let ps = g.parents(c);
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    if !g.is_adjacent(a, b) {
                        out.insert((a, c, b));
                    }
                }
            }
        }
        out
    }

    fn dag_skeleton(g: &Dag) -> BTreeSet<(usize, usize)> {
        g.edges().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn orientation_is_a_consistent_extension(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_dag(n, 0.35, &mut rng).unwrap();
            let p = Cpdag::from_dag(&g);
            let dag = orient_to_dag(&p, &Knowledge::new()).unwrap();
            prop_assert_eq!(dag_skeleton(&dag), p.skeleton());
            prop_assert_eq!(v_structures(&dag), v_structures(&g));
            prop_assert_eq!(Cpdag::from_dag(&dag), p);
        }

        #[test]
        fn orientation_honours_true_required_edges(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_dag(n, 0.35, &mut rng).unwrap();
            let k = pick_hint_edges(&g, 0.5, &mut rng).unwrap();
            let dag = orient_to_dag(&Cpdag::from_dag(&g), &k).unwrap();
            for (a, b) in k.required() {
                prop_assert!(dag.has_edge(dag.index_of(a).unwrap(), dag.index_of(b).unwrap()));
            }
            prop_assert_eq!(v_structures(&dag), v_structures(&g));
        }
    }
}
