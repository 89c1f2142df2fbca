//! The end-to-end causal analysis: preprocessing, knowledge-constrained
//! discovery, orientation, optional graph edits, parent-adjusted estimation
//! of the target and every probe effect, and probe validation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{BinaryDataset, RawDataset};
use crate::discovery::{ges, orient_to_dag, Cpdag, Knowledge};
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimation::{estimate_ate_linear, AteEstimate};
use crate::graph::Dag;
use crate::probing::{validate, ProbeSpec, ValidationReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum PreprocessStep {
    DropColumns { columns: Vec<String> },
    Binarize {
        column: String,
        zero_label: String,
        one_label: String,
    },
    /// Keeps rows whose `column` cell is one of `keep`.
    FilterRows { column: String, keep: Vec<String> },
}

impl PreprocessStep {
    pub fn apply(&self, data: &RawDataset) -> Result<RawDataset> {
        match self {
            PreprocessStep::DropColumns { columns } => data.drop_columns(columns),
            PreprocessStep::Binarize {
                column,
                zero_label,
                one_label,
            } => data.binarize(column, zero_label, one_label),
            PreprocessStep::FilterRows { column, keep } => data.filter_rows(column, keep),
        }
    }
}

/// Manual graph postprocessing, applied after orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum EdgeEdit {
    Add { from: String, to: String },
    Delete { from: String, to: String },
    Reverse { from: String, to: String },
}

/// Applies `edits` in order. Any edit that references a missing node or edge,
/// duplicates an edge, or closes a cycle is an error.
pub fn apply_edits(g: &Dag, edits: &[EdgeEdit]) -> Result<Dag> {
    let mut edges = g.edges().clone();
    let node = |name: &str| {
        g.index_of(name)
            .ok_or_else(|| Error::invalid(format!("edge edit names unknown node {name:?}")))
    };
    for edit in edits {
        match edit {
            EdgeEdit::Add { from, to } => {
                let e = (node(from)?, node(to)?);
                if edges.contains(&e) || edges.contains(&(e.1, e.0)) {
                    return Err(Error::invalid(format!("cannot add {from} -> {to}: nodes already adjacent")));
                }
                edges.insert(e);
            }
            EdgeEdit::Delete { from, to } => {
                if !edges.remove(&(node(from)?, node(to)?)) {
                    return Err(Error::invalid(format!("cannot delete missing edge {from} -> {to}")));
                }
            }
            EdgeEdit::Reverse { from, to } => {
                let (a, b) = (node(from)?, node(to)?);
                if !edges.remove(&(a, b)) {
                    return Err(Error::invalid(format!("cannot reverse missing edge {from} -> {to}")));
                }
                edges.insert((b, a));
            }
        }
        Dag::new(g.labels().to_vec(), edges.iter().copied())
            .map_err(|e| Error::invalid(format!("edit {edit:?} rejected: {e}")))?;
    }
    g.with_edges(edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub preprocessing: Vec<PreprocessStep>,
    pub knowledge: Knowledge,
    pub target: (String, String),
    pub probes: Vec<ProbeSpec>,
    pub penalty: f64,
    pub edits: Vec<EdgeEdit>,
}

impl AnalysisConfig {
    pub fn new(treatment: impl Into<String>, outcome: impl Into<String>) -> Self {
        Self {
            preprocessing: Vec::new(),
            knowledge: Knowledge::new(),
            target: (treatment.into(), outcome.into()),
            probes: Vec::new(),
            penalty: 1.0,
            edits: Vec::new(),
        }
    }

    /// Checks that the target, the probes and the knowledge only name
    /// existing columns.
    pub fn validate(&self, columns: &[String]) -> Result<()> {
        let known = |name: &str, what: &str| {
            if columns.iter().any(|c| c == name) {
                Ok(())
            } else {
                Err(Error::invalid(format!("unknown column {name:?} in {what}")))
            }
        };
        let (t, o) = &self.target;
        known(t, "target")?;
        known(o, "target")?;
        if t == o {
            return Err(Error::invalid("target treatment and outcome must differ"));
        }
        if self.probes.is_empty() {
            return Err(Error::invalid("at least one probe is required"));
        }
        for p in &self.probes {
            let what = format!("probe {} -> {}", p.treatment, p.outcome);
            known(&p.treatment, &what)?;
            known(&p.outcome, &what)?;
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(Error::invalid(format!("penalty must be positive, got {}", self.penalty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub pattern: Cpdag,
    pub discovered: Dag,
    pub report: ValidationReport,
}

/// Runs the whole analysis on raw tabular data.
pub fn run_end_to_end(data: &RawDataset, cfg: &AnalysisConfig) -> Result<AnalysisResult> {
    let mut raw = data.clone();
    for step in &cfg.preprocessing {
        raw = step.apply(&raw).stage(Stage::Preprocessing)?;
    }
    let binary = raw.to_binary().stage(Stage::Preprocessing)?;
    run_on_binary(&binary, cfg)
}

/// Runs the analysis on data that needs no preprocessing; the configured
/// preprocessing steps are ignored.
pub fn run_on_binary(data: &BinaryDataset, cfg: &AnalysisConfig) -> Result<AnalysisResult> {
    let columns = data.columns();
    cfg.validate(columns).stage(Stage::Preprocessing)?;
    cfg.knowledge.validate(columns).stage(Stage::Knowledge)?;
    let pattern = ges(data, &cfg.knowledge, cfg.penalty).stage(Stage::Discovery)?;
    let oriented = orient_to_dag(&pattern, &cfg.knowledge).stage(Stage::Orientation)?;
    let discovered = apply_edits(&oriented, &cfg.edits).stage(Stage::Postprocessing)?;

    let estimate = |t: &str, o: &str| -> Result<AteEstimate> {
        let ti = data.column_index(t).expect("validated column");
        let oi = data.column_index(o).expect("validated column");
        estimate_ate_linear(data, &discovered, ti, oi)
    };
    let target = estimate(&cfg.target.0, &cfg.target.1).stage(Stage::Estimation)?;
    let probe_estimates = cfg
        .probes
        .iter()
        .map(|p| estimate(&p.treatment, &p.outcome))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::Estimation)?;
    let report = validate(target, probe_estimates, &cfg.probes, None).stage(Stage::Validation)?;
    Ok(AnalysisResult {
        pattern,
        discovered,
        report,
    })
}

impl AnalysisResult {
    pub fn to_json(&self) -> serde_json::Value {
        let g = &self.discovered;
        let edges: Vec<[&str; 2]> = g.edges().iter().map(|&(a, b)| [g.label(a), g.label(b)]).collect();
        let target = &self.report.target;
        let probes: Vec<serde_json::Value> = self
            .report
            .probes
            .iter()
            .map(|p| {
                json!({
                    "pair": [p.spec.treatment, p.spec.outcome],
                    "expectation": p.spec.expectation.to_string(),
                    "estimate": p.estimate.value,
                    "passed": p.passed,
                })
            })
            .collect();
        json!({
            "discovered_graph": { "nodes": g.labels(), "edges": edges },
            "target": {
                "pair": [target.treatment, target.outcome],
                "estimate": target.value,
                "method": target.method.to_string(),
                "adjustment": target.adjustment,
            },
            "probes": probes,
            "hit_rate": self.report.hit_rate,
        })
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let g = &self.discovered;
        let _ = writeln!(s, "discovered graph ({} nodes, {} edges):", g.n_nodes(), g.n_edges());
        for &(a, b) in g.edges() {
            let _ = writeln!(s, "  {} -> {}", g.label(a), g.label(b));
        }
        let t = &self.report.target;
        let _ = write!(s, "target {} -> {}: {:.4} ({}", t.treatment, t.outcome, t.value, t.method);
        if !t.adjustment.is_empty() {
            let _ = write!(s, ", adjusting for {}", t.adjustment.join(", "));
        }
        s.push_str(")\nprobes:\n");
        for p in &self.report.probes {
            let _ = writeln!(
                s,
                "  [{}] {} -> {} expect {}: {:.4}",
                if p.passed { "PASS" } else { "FAIL" },
                p.spec.treatment,
                p.spec.outcome,
                p.spec.expectation,
                p.estimate.value
            );
        }
        let passed = self.report.probes.iter().filter(|p| p.passed).count();
        let _ = writeln!(
            s,
            "hit rate: {}/{} = {:.3}",
            passed,
            self.report.probes.len(),
            self.report.hit_rate
        );
        s
    }
}
