//! Binary causal Bayesian networks.
//!
//! Exact inference enumerates all `2^n` joint states, which is the ground
//! truth for every effect computed in a simulation study. States are indexed
//! with node `i` stored in bit `i`.
//!
//! CPD tables are indexed by the parent assignment read as a binary number
//! over the ordered parent list, first parent most significant: for parents
//! `(z, t)` the entries are `p(x=1 | z=0,t=0), p(x=1 | z=0,t=1),
//! p(x=1 | z=1,t=0), p(x=1 | z=1,t=1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Largest network handled by exact enumeration.
pub const MAX_EXACT_NODES: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct Cpd {
    node: usize,
    parents: Vec<usize>,
    table: Vec<f64>,
}

impl Cpd {
    pub fn new(node: usize, parents: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if parents.len() >= usize::BITS as usize - 1 || table.len() != 1 << parents.len() {
            return Err(Error::invalid(format!(
                "CPD of node {node}: table has {} entries, expected 2^{}",
                table.len(),
                parents.len()
            )));
        }
        if let Some(p) = table.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!(
                "CPD of node {node}: probability {p} outside [0, 1]"
            )));
        }
        Ok(Self {
            node,
            parents,
            table,
        })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `p(x = 1 | parents)` with parent values read from a joint state index.
    fn p_one_in_state(&self, state: usize) -> f64 {
        let idx = self
            .parents
            .iter()
            .fold(0, |acc, &p| (acc << 1) | ((state >> p) & 1));
        self.table[idx]
    }

    fn p_one_in_row(&self, row: &[u8]) -> f64 {
        self.table[crate::dataset::assignment_index(row, &self.parents)]
    }
}

/// Probability table over all `2^n` joint states.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    n: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `p(x_node = 1)`.
    pub fn marginal(&self, node: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(s, _)| (s >> node) & 1 == 1)
            .map(|(_, p)| p)
            .sum()
    }

    /// Sums out `node`, returning a table over the remaining nodes (kept in
    /// index order).
    pub fn marginalize_out(&self, node: usize) -> JointTable {
        let mut probs = vec![0.0; self.probs.len() / 2];
        for (s, &p) in self.probs.iter().enumerate() {
            let low = s & ((1 << node) - 1);
            let high = (s >> (node + 1)) << node;
            probs[high | low] += p;
        }
        JointTable {
            n: self.n - 1,
            probs,
        }
    }
}

/// DAG plus one binary CPD per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Cbn {
    graph: Dag,
    cpds: Vec<Cpd>,
}

impl Cbn {
    pub fn new(graph: Dag, cpds: Vec<Cpd>) -> Result<Self> {
        if cpds.len() != graph.n_nodes() {
            return Err(Error::invalid(format!(
                "{} CPDs for {} nodes",
                cpds.len(),
                graph.n_nodes()
            )));
        }
        for (i, cpd) in cpds.iter().enumerate() {
            if cpd.node != i {
                return Err(Error::invalid(format!("CPD {i} is for node {}", cpd.node)));
            }
            if cpd.parents != graph.parents(i) {
                return Err(Error::invalid(format!(
                    "CPD parents of {} do not match the graph",
                    graph.label(i)
                )));
            }
        }
        Ok(Self { graph, cpds })
    }

    /// Builds a network from per-node tables given in node order.
    pub fn from_tables(graph: Dag, tables: Vec<Vec<f64>>) -> Result<Self> {
        let cpds = tables
            .into_iter()
            .enumerate()
            .map(|(i, t)| Cpd::new(i, graph.parents(i).to_vec(), t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, cpds)
    }

    pub fn graph(&self) -> &Dag {
        &self.graph
    }

    pub fn cpds(&self) -> &[Cpd] {
        &self.cpds
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    fn check_capacity(&self) -> Result<()> {
        if self.n_nodes() > MAX_EXACT_NODES {
            return Err(Error::Capacity {
                what: "nodes for exact inference",
                got: self.n_nodes(),
                limit: MAX_EXACT_NODES,
            });
        }
        Ok(())
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.n_nodes() {
            return Err(Error::invalid(format!(
                "node {v} out of range for {} nodes",
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// Product of CPD factors over all nodes except `skip`.
    fn factorize(&self, skip: Option<(usize, u8)>) -> Result<JointTable> {
        self.check_capacity()?;
        let n = self.n_nodes();
        let probs = (0..1usize << n)
            .map(|s| {
                let mut p = 1.0;
                for (i, cpd) in self.cpds.iter().enumerate() {
                    let bit = (s >> i) & 1;
                    if let Some((t, v)) = skip {
                        if i == t {
                            if bit != v as usize {
                                return 0.0;
                            }
                            continue;
                        }
                    }
                    let p1 = cpd.p_one_in_state(s);
                    p *= if bit == 1 { p1 } else { 1.0 - p1 };
                }
                p
            })
            .collect();
        Ok(JointTable { n, probs })
    }

    pub fn joint_distribution(&self) -> Result<JointTable> {
        self.factorize(None)
    }

    /// Interventional distribution under `do(x_t = v)` by truncated
    /// factorization: the factor of `t` is replaced by a point mass at `v`.
    pub fn intervene(&self, t: usize, v: u8) -> Result<JointTable> {
        self.check_node(t)?;
        if v > 1 {
            return Err(Error::invalid(format!("intervention value {v} is not binary")));
        }
        self.factorize(Some((t, v)))
    }

    /// `p(x_o = 1 | do(x_t = v))`, computed by enumeration.
    pub fn interventional_mean(&self, t: usize, v: u8, o: usize) -> Result<f64> {
        self.check_node(o)?;
        Ok(self.intervene(t, v)?.marginal(o))
    }

    /// Exact average treatment effect `p(o=1 | do(t=1)) - p(o=1 | do(t=0))`.
    /// Returns exactly `0.0` when `o` is not a descendant of `t`.
    pub fn true_ate(&self, t: usize, o: usize) -> Result<f64> {
        self.check_node(t)?;
        self.check_node(o)?;
        if t == o {
            return Err(Error::invalid("treatment and outcome must differ"));
        }
        if !self.graph.has_directed_path(t, o)? {
            return Ok(0.0);
        }
        Ok(self.interventional_mean(t, 1, o)? - self.interventional_mean(t, 0, o)?)
    }

    /// The network after `do(x_t = v)`: incoming edges of `t` are removed
    /// and its CPD becomes the constant `v`.
    pub fn mutilated(&self, t: usize, v: u8) -> Result<Cbn> {
        self.check_node(t)?;
        if v > 1 {
            return Err(Error::invalid(format!("intervention value {v} is not binary")));
        }
        let edges: Vec<_> = self
            .graph
            .edges()
            .iter()
            .copied()
            .filter(|&(_, c)| c != t)
            .collect();
        let graph = self.graph.with_edges(edges)?;
        let mut cpds = self.cpds.clone();
        cpds[t] = Cpd::new(t, Vec::new(), vec![v as f64])?;
        Cbn::new(graph, cpds)
    }

    /// Ancestral sampling of `m` i.i.d. rows in topological order.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> BinaryDataset {
        let n = self.n_nodes();
        let order = self.graph.topological_order();
        let mut data = vec![0u8; m * n];
        for row in data.chunks_exact_mut(n.max(1)).take(m) {
            for &v in &order {
                let p = self.cpds[v].p_one_in_row(row);
                row[v] = u8::from(rng.gen::<f64>() < p);
            }
        }
        BinaryDataset::from_flat(self.graph.labels().to_vec(), data)
            .expect("sampled cells are binary and labels unique")
    }

    pub fn to_json(&self) -> String {
        let labels = self.graph.labels();
        let doc = CbnDoc {
            nodes: labels.to_vec(),
            edges: self
                .graph
                .edges()
                .iter()
                .map(|&(u, v)| [labels[u].clone(), labels[v].clone()])
                .collect(),
            cpds: self
                .cpds
                .iter()
                .map(|c| CpdDoc {
                    node: labels[c.node].clone(),
                    parents: c.parents.iter().map(|&p| labels[p].clone()).collect(),
                    table: c.table.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("CBN document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CbnDoc = serde_json::from_str(text)?;
        let find = |name: &str| {
            doc.nodes
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::invalid(format!("unknown node {name:?}")))
        };
        let edges = doc
            .edges
            .iter()
            .map(|[a, b]| Ok((find(a)?, find(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let graph = Dag::new(doc.nodes.clone(), edges)?;
        let mut cpds: Vec<Option<Cpd>> = vec![None; graph.n_nodes()];
        for c in &doc.cpds {
            let node = find(&c.node)?;
            let parents = c.parents.iter().map(|p| find(p)).collect::<Result<Vec<_>>>()?;
            if cpds[node].is_some() {
                return Err(Error::invalid(format!("duplicate CPD for {:?}", c.node)));
            }
            cpds[node] = Some(Cpd::new(node, parents, c.table.clone())?);
        }
        let cpds = cpds
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| Error::invalid(format!("missing CPD for node {i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph, cpds)
    }
}

#[derive(Serialize, Deserialize)]
struct CbnDoc {
    nodes: Vec<String>,
    edges: Vec<[String; 2]>,
    cpds: Vec<CpdDoc>,
}

#[derive(Serialize, Deserialize)]
struct CpdDoc {
    node: String,
    parents: Vec<String>,
    table: Vec<f64>,
}

/// Attaches CPDs whose entries are i.i.d. uniform on `[0, 1)`, filled node by
/// node in index order.
pub fn random_cpds<R: Rng + ?Sized>(g: &Dag, rng: &mut R) -> Cbn {
    let tables = (0..g.n_nodes())
        .map(|v| (0..1usize << g.parents(v).len()).map(|_| rng.gen::<f64>()).collect())
        .collect();
    Cbn::from_tables(g.clone(), tables).expect("uniform tables are valid CPDs")
}
