//! Quantitative probes.
//!
//! A probe states what an analyst expects of one non-target causal effect.
//! After the analysis, every probe is checked against the model's estimate
//! of that effect; the share of satisfied probes is the hit rate. A failed
//! probe is evidence against the whole analysis, including its estimate of
//! the target effect.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::AteEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expectation {
    /// `|value - target| <= tol`.
    Point { target: f64, tol: f64 },
    /// `lo <= value <= hi`.
    Interval { lo: f64, hi: f64 },
    GreaterThan { threshold: f64 },
    LessThan { threshold: f64 },
    /// `|value| > margin`.
    NonZero { margin: f64 },
}

impl Expectation {
    fn check(&self) -> Result<()> {
        let finite = |x: f64| x.is_finite();
        let ok = match *self {
            Expectation::Point { target, tol } => finite(target) && finite(tol) && tol >= 0.0,
            Expectation::Interval { lo, hi } => finite(lo) && finite(hi) && lo <= hi,
            Expectation::GreaterThan { threshold } | Expectation::LessThan { threshold } => {
                finite(threshold)
            }
            Expectation::NonZero { margin } => finite(margin) && margin > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed expectation `{self}`")))
        }
    }

    /// Whether `value` meets the expectation. Point and interval bounds are
    /// inclusive; NaN never passes.
    pub fn admits(&self, value: f64) -> bool {
        match *self {
            Expectation::Point { target, tol } => (value - target).abs() <= tol,
            Expectation::Interval { lo, hi } => lo <= value && value <= hi,
            Expectation::GreaterThan { threshold } => value > threshold,
            Expectation::LessThan { threshold } => value < threshold,
            Expectation::NonZero { margin } => value.abs() > margin,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Expectation::Point { target, tol } => write!(f, "{target} +/- {tol}"),
            Expectation::Interval { lo, hi } => write!(f, "in [{lo}, {hi}]"),
            Expectation::GreaterThan { threshold } => write!(f, "> {threshold}"),
            Expectation::LessThan { threshold } => write!(f, "< {threshold}"),
            Expectation::NonZero { margin } => write!(f, "nonzero {margin}"),
        }
    }
}

impl std::str::FromStr for Expectation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("expected a number, found {:?}", t.trim()))
        };
        let e = if let Some(rest) = s.strip_prefix(">") {
            Expectation::GreaterThan { threshold: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("<") {
            Expectation::LessThan { threshold: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("nonzero") {
            Expectation::NonZero { margin: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("in") {
            let inner = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| format!("expected `in [lo, hi]`, found {s:?}"))?;
            let (lo, hi) = inner
                .split_once(',')
                .ok_or_else(|| format!("expected `in [lo, hi]`, found {s:?}"))?;
            Expectation::Interval { lo: num(lo)?, hi: num(hi)? }
        } else if let Some((target, tol)) = s.split_once("+/-") {
            Expectation::Point { target: num(target)?, tol: num(tol)? }
        } else {
            return Err(format!("unrecognized expectation {s:?}"));
        };
        e.check().map_err(|e| e.to_string())?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub treatment: String,
    pub outcome: String,
    pub expectation: Expectation,
}

impl ProbeSpec {
    pub fn new(
        treatment: impl Into<String>,
        outcome: impl Into<String>,
        expectation: Expectation,
    ) -> Result<Self> {
        let (treatment, outcome) = (treatment.into(), outcome.into());
        if treatment == outcome {
            return Err(Error::invalid(format!("probe on {treatment:?} has treatment = outcome")));
        }
        expectation.check()?;
        Ok(Self {
            treatment,
            outcome,
            expectation,
        })
    }

    /// Parses a probes file: `probe t -> o expect <expectation>` per line,
    /// `#` comments.
    pub fn parse_file(text: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let body = line
                .strip_prefix("probe")
                .filter(|r| r.starts_with(char::is_whitespace))
                .ok_or_else(|| err(format!("expected `probe t -> o expect ...`, found {line:?}")))?;
            let (pair, expect) = body
                .split_once(" expect ")
                .ok_or_else(|| err(format!("missing `expect` in {line:?}")))?;
            let (t, o) = pair
                .split_once("->")
                .ok_or_else(|| err(format!("missing `->` in {line:?}")))?;
            let expectation: Expectation = expect.parse().map_err(err)?;
            out.push(ProbeSpec::new(t.trim(), o.trim(), expectation).map_err(|e| err(e.to_string()))?);
        }
        Ok(out)
    }
}

impl fmt::Display for ProbeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "probe {} -> {} expect {}",
            self.treatment, self.outcome, self.expectation
        )
    }
}

pub fn evaluate_probe(spec: &ProbeSpec, value: f64) -> bool {
    spec.expectation.admits(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub spec: ProbeSpec,
    pub estimate: AteEstimate,
    /// Ground truth, known only in simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
    pub passed: bool,
}

/// Share of passed probes, `k / N`.
pub fn hit_rate(results: &[ProbeResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::invalid("hit rate is undefined without probes"));
    }
    let passed = results.iter().filter(|r| r.passed).count();
    Ok(passed as f64 / results.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub target: AteEstimate,
    pub probes: Vec<ProbeResult>,
    pub hit_rate: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.probes.iter().all(|p| p.passed)
    }
}

/// Checks each probe estimate against its spec. `truths`, when given, is
/// attached to the results for later inspection and does not affect
/// pass/fail.
pub fn validate(
    target: AteEstimate,
    estimates: Vec<AteEstimate>,
    specs: &[ProbeSpec],
    truths: Option<&[f64]>,
) -> Result<ValidationReport> {
    if estimates.len() != specs.len() {
        return Err(Error::invalid(format!(
            "{} probe estimates for {} probe specs",
            estimates.len(),
            specs.len()
        )));
    }
    if let Some(t) = truths {
        if t.len() != specs.len() {
            return Err(Error::invalid("one ground-truth value per probe is required"));
        }
    }
    let probes = specs
        .iter()
        .zip(estimates)
        .enumerate()
        .map(|(i, (spec, estimate))| {
            if estimate.treatment != spec.treatment || estimate.outcome != spec.outcome {
                return Err(Error::invalid(format!(
                    "estimate for {} -> {} does not match probe {} -> {}",
                    estimate.treatment, estimate.outcome, spec.treatment, spec.outcome
                )));
            }
            Ok(ProbeResult {
                passed: evaluate_probe(spec, estimate.value),
                spec: spec.clone(),
                estimate,
                truth: truths.map(|t| t[i]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let hit_rate = hit_rate(&probes)?;
    Ok(ValidationReport {
        target,
        probes,
        hit_rate,
    })
}
