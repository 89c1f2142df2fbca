//! Average treatment effect estimation from observational binary data and a
//! causal graph.
//!
//! Identification always adjusts for the parents of the treatment, which
//! blocks every back-door path when all variables are observed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::graph::Dag;

/// Largest adjustment set the stratified estimator enumerates.
pub const MAX_STRATA_VARS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// No directed path from treatment to outcome in the graph.
    TrivialZero,
    LinearAdjusted,
    Stratified,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::TrivialZero => "trivial-zero",
            Method::LinearAdjusted => "linear-adjusted",
            Method::Stratified => "stratified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub treatment: String,
    pub outcome: String,
    pub value: f64,
    pub method: Method,
    pub adjustment: Vec<String>,
}

impl AteEstimate {
    pub fn trivial_zero(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            treatment: treatment.into(),
            outcome: outcome.into(),
            value: 0.0,
            method: Method::TrivialZero,
            adjustment: Vec::new(),
        }
    }
}

/// Back-door adjustment set: the parents of `t`.
pub fn adjustment_set(g: &Dag, t: usize, o: usize) -> Result<Vec<usize>> {
    if t == o {
        return Err(Error::invalid("treatment and outcome must differ"));
    }
    if t >= g.n_nodes() || o >= g.n_nodes() {
        return Err(Error::invalid("node index out of range"));
    }
    Ok(g.parents(t).to_vec())
}

/// Least squares via SVD. Singular values below
/// `max(rows, cols) · ε · σ_max` are treated as zero, which yields the
/// minimum-norm solution for rank-deficient designs.
pub fn ols(design: &[Vec<f64>], response: &[f64]) -> Result<Vec<f64>> {
    let rows = design.len();
    if rows == 0 {
        return Err(Error::invalid("regression needs at least one row"));
    }
    if rows != response.len() {
        return Err(Error::invalid(format!(
            "design has {rows} rows but response has {}",
            response.len()
        )));
    }
    let cols = design[0].len();
    if cols == 0 || design.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("design rows must share a nonzero length"));
    }
    let x = DMatrix::from_fn(rows, cols, |i, j| design[i][j]);
    let y = DVector::from_column_slice(response);
    let svd = x.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let eps = sigma_max * rows.max(cols) as f64 * f64::EPSILON;
    let beta = svd
        .solve(&y, eps)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    Ok(beta.iter().copied().collect())
}

fn check_inputs(d: &BinaryDataset, g: &Dag, t: usize, o: usize) -> Result<()> {
    if d.columns() != g.labels() {
        return Err(Error::invalid("graph nodes must match the dataset columns"));
    }
    if t == o || t >= g.n_nodes() || o >= g.n_nodes() {
        return Err(Error::invalid(format!("invalid treatment/outcome pair ({t}, {o})")));
    }
    if d.n_rows() == 0 {
        return Err(Error::invalid("cannot estimate from an empty dataset"));
    }
    Ok(())
}

fn names(g: &Dag, nodes: &[usize]) -> Vec<String> {
    nodes.iter().map(|&v| g.label(v).to_string()).collect()
}

/// Coefficient of `t` in the regression of `o` on an intercept, `t` and the
/// adjustment set. Exactly zero when `g` has no directed path `t -> o`.
pub fn estimate_ate_linear(d: &BinaryDataset, g: &Dag, t: usize, o: usize) -> Result<AteEstimate> {
    check_inputs(d, g, t, o)?;
    if !g.has_directed_path(t, o)? {
        return Ok(AteEstimate::trivial_zero(g.label(t), g.label(o)));
    }
    let z = adjustment_set(g, t, o)?;
    let design: Vec<Vec<f64>> = d
        .rows()
        .map(|row| {
            let mut x = Vec::with_capacity(2 + z.len());
            x.push(1.0);
            x.push(row[t] as f64);
            x.extend(z.iter().map(|&v| row[v] as f64));
            x
        })
        .collect();
    let response: Vec<f64> = d.rows().map(|row| row[o] as f64).collect();
    let beta = ols(&design, &response)?;
    Ok(AteEstimate {
        treatment: g.label(t).to_string(),
        outcome: g.label(o).to_string(),
        value: beta[1],
        method: Method::LinearAdjusted,
        adjustment: names(g, &z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub estimate: AteEstimate,
    /// Share of rows in strata where both treatment arms were observed.
    pub retained_weight: f64,
}

/// Plug-in back-door estimate
/// `Σ_z (p̂(o=1 | t=1, z) − p̂(o=1 | t=0, z)) · p̂(z)` over the parents of
/// `t`. Strata missing a treatment arm are dropped and the remaining
/// weights renormalized.
pub fn estimate_ate_stratified(
    d: &BinaryDataset,
    g: &Dag,
    t: usize,
    o: usize,
) -> Result<StratifiedEstimate> {
    check_inputs(d, g, t, o)?;
    let z = adjustment_set(g, t, o)?;
    if z.len() > MAX_STRATA_VARS {
        return Err(Error::Capacity {
            what: "adjustment variables for stratification",
            got: z.len(),
            limit: MAX_STRATA_VARS,
        });
    }
    let mut vars = z.clone();
    vars.push(t);
    vars.push(o);
    let counts = d.counts(&vars)?;
    let m = d.n_rows() as f64;
    let mut weighted = 0.0;
    let mut retained = 0.0;
    // Cells per stratum: (t, o) = 00, 01, 10, 11.
    for cell in counts.chunks_exact(4) {
        let n0 = (cell[0] + cell[1]) as f64;
        let n1 = (cell[2] + cell[3]) as f64;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let w = (n0 + n1) / m;
        weighted += w * (cell[3] as f64 / n1 - cell[1] as f64 / n0);
        retained += w;
    }
    if retained == 0.0 {
        return Err(Error::EstimationImpossible(format!(
            "no stratum of {:?} contains both values of {}",
            names(g, &z),
            g.label(t)
        )));
    }
    Ok(StratifiedEstimate {
        estimate: AteEstimate {
            treatment: g.label(t).to_string(),
            outcome: g.label(o).to_string(),
            value: weighted / retained,
            method: Method::Stratified,
            adjustment: names(g, &z),
        },
        retained_weight: retained,
    })
}
