//! The simulation study. Each run draws a random network, samples data from
//! it, reveals some true edges as knowledge, picks a nontrivial target and a
//! set of probe effects, runs the analysis with point probes around the true
//! effects, and records how well the target was recovered.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{random_cpds, Cbn, MAX_EXACT_NODES};
use crate::discovery::floor_fraction;
use crate::discovery::pick_hint_edges;
use crate::error::{Error, Result};
use crate::graph::{random_dag, shd};
use crate::io::write_atomic;
use crate::pipeline::{run_on_binary, AnalysisConfig};
use crate::probing::{Expectation, ProbeSpec};

/// Network draws per run before the run is recorded as failed.
pub const MAX_REGENERATIONS: u64 = 1_000;

/// Effects smaller than this count as zero when choosing a target.
pub const NONZERO_ATE: f64 = 1e-12;

pub const RUNS_CSV_COLUMNS: [&str; 19] = [
    "run_index",
    "run_seed",
    "n",
    "p_edge",
    "m",
    "p_hint",
    "p_probe",
    "eps_probe",
    "target_treatment",
    "target_outcome",
    "true_ate",
    "est_ate",
    "abs_err",
    "rel_err",
    "shd",
    "hit_rate",
    "n_probes",
    "connected",
    "failed",
];

pub const AGG_CSV_COLUMNS: [&str; 5] = ["hit_rate", "count", "mean_abs_err", "mean_rel_err", "mean_shd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: usize,
    pub p_edge: f64,
    pub m: usize,
    pub p_hint: f64,
    pub p_probe: f64,
    pub eps_probe: f64,
    pub n_runs: usize,
    pub master_seed: u64,
    pub penalty: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n: 7,
            p_edge: 0.1,
            m: 1000,
            p_hint: 0.3,
            p_probe: 0.5,
            eps_probe: 0.1,
            n_runs: 300,
            master_seed: 42,
            penalty: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > MAX_EXACT_NODES {
            return Err(Error::invalid(format!(
                "n must lie in [2, {MAX_EXACT_NODES}], got {}",
                self.n
            )));
        }
        for (name, p) in [("p_edge", self.p_edge), ("p_hint", self.p_hint), ("p_probe", self.p_probe)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(self.eps_probe.is_finite() && self.eps_probe >= 0.0) {
            return Err(Error::invalid(format!("eps_probe must be >= 0, got {}", self.eps_probe)));
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(Error::invalid(format!("penalty must be positive, got {}", self.penalty)));
        }
        if self.probes_requested() == 0 {
            return Err(Error::invalid(format!(
                "p_probe = {} selects no probes for n = {}; the hit rate would be undefined",
                self.p_probe, self.n
            )));
        }
        Ok(())
    }

    /// `floor(p_probe · n²)`.
    pub fn probes_requested(&self) -> usize {
        floor_fraction(self.p_probe, self.n * self.n)
    }

    /// Overrides fields from `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("invalid value {v:?}"))
            }
            let res = match key {
                "n" => num(value).map(|v| self.n = v),
                "p_edge" => num(value).map(|v| self.p_edge = v),
                "m" => num(value).map(|v| self.m = v),
                "p_hint" => num(value).map(|v| self.p_hint = v),
                "p_probe" => num(value).map(|v| self.p_probe = v),
                "eps_probe" => num(value).map(|v| self.eps_probe = v),
                "n_runs" => num(value).map(|v| self.n_runs = v),
                "master_seed" => num(value).map(|v| self.master_seed = v),
                "penalty" => num(value).map(|v| self.penalty = v),
                other => Err(format!("unknown key {other:?}")),
            };
            res.map_err(|m| err(format!("{key}: {m}")))?;
        }
        Ok(())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of attempt `regeneration` of run `run_index`: chained splitmix64
/// over the three inputs.
pub fn run_seed(master_seed: u64, run_index: u64, regeneration: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ run_index) ^ regeneration)
}

/// Exact effect of every ordered pair; `0` on the diagonal and wherever no
/// directed path exists.
pub fn ate_matrix(cbn: &Cbn) -> Result<Vec<Vec<f64>>> {
    let n = cbn.n_nodes();
    let g = cbn.graph();
    let mut out = vec![vec![0.0; n]; n];
    for t in 0..n {
        let desc = g.descendants(t);
        if desc.is_empty() {
            continue;
        }
        let one = cbn.intervene(t, 1)?;
        let zero = cbn.intervene(t, 0)?;
        for &o in &desc {
            out[t][o] = one.marginal(o) - zero.marginal(o);
        }
    }
    Ok(out)
}

/// Uniform choice among ordered pairs with a directed path and a nonzero
/// effect. `None` marks a degenerate network.
pub fn select_target<R: Rng + ?Sized>(cbn: &Cbn, ates: &[Vec<f64>], rng: &mut R) -> Option<(usize, usize)> {
    let g = cbn.graph();
    let n = g.n_nodes();
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|t| (0..n).map(move |o| (t, o)))
        .filter(|&(t, o)| t != o && ates[t][o].abs() > NONZERO_ATE && g.has_directed_path(t, o).unwrap_or(false))
        .collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

/// `k` ordered non-self pairs other than `target`, drawn without
/// replacement and returned in row-major order. `k` is capped at the number
/// of candidates.
pub fn select_probes<R: Rng + ?Sized>(
    n: usize,
    target: (usize, usize),
    k: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|t| (0..n).map(move |o| (t, o)))
        .filter(|&(t, o)| t != o && (t, o) != target)
        .collect();
    let take = k.min(candidates.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), take).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| candidates[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDetail {
    pub treatment: String,
    pub outcome: String,
    pub truth: f64,
    pub estimate: f64,
    pub passed: bool,
}

/// One run. Outcome fields are `None` when the run failed before producing
/// them; detail fields are empty for records read back from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: u64,
    pub run_seed: u64,
    pub n: usize,
    pub p_edge: f64,
    pub m: usize,
    pub p_hint: f64,
    pub p_probe: f64,
    pub eps_probe: f64,
    pub target_treatment: Option<String>,
    pub target_outcome: Option<String>,
    pub true_ate: Option<f64>,
    pub est_ate: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub shd: Option<usize>,
    pub hit_rate: Option<f64>,
    pub n_probes: Option<usize>,
    pub connected: bool,
    pub failed: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub regenerations: u64,
    #[serde(default)]
    pub probes_requested: Option<usize>,
    #[serde(default)]
    pub true_graph: Option<String>,
    #[serde(default)]
    pub discovered_graph: Option<String>,
    #[serde(default)]
    pub hints: Vec<(String, String)>,
    #[serde(default)]
    pub probes: Vec<ProbeDetail>,
}

impl RunRecord {
    fn blank(params: &SimParams, run_index: u64) -> Self {
        Self {
            run_index,
            run_seed: run_seed(params.master_seed, run_index, 0),
            n: params.n,
            p_edge: params.p_edge,
            m: params.m,
            p_hint: params.p_hint,
            p_probe: params.p_probe,
            eps_probe: params.eps_probe,
            target_treatment: None,
            target_outcome: None,
            true_ate: None,
            est_ate: None,
            abs_err: None,
            rel_err: None,
            shd: None,
            hit_rate: None,
            n_probes: None,
            connected: false,
            failed: true,
            error: None,
            regenerations: 0,
            probes_requested: None,
            true_graph: None,
            discovered_graph: None,
            hints: Vec::new(),
            probes: Vec::new(),
        }
    }

    fn fail(mut self, message: impl Into<String>) -> Self {
        self.failed = true;
        self.error = Some(message.into());
        self
    }

    /// Hit rate recomputed from the per-probe detail.
    pub fn recomputed_hit_rate(&self) -> Option<f64> {
        if self.probes.is_empty() {
            return None;
        }
        let k = self
            .probes
            .iter()
            .filter(|p| (p.estimate - p.truth).abs() <= self.eps_probe)
            .count();
        Some(k as f64 / self.probes.len() as f64)
    }
}

/// Executes run `run_index`. Never panics on bad luck: generation or
/// pipeline failures produce a record with `failed` set.
pub fn simulate_run(params: &SimParams, run_index: u64) -> RunRecord {
    let mut rec = RunRecord::blank(params, run_index);
    if let Err(e) = params.validate() {
        return rec.fail(e.to_string());
    }
    let n = params.n;
    for regeneration in 0..=MAX_REGENERATIONS {
        rec.regenerations = regeneration;
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(params.master_seed, run_index, regeneration));
        let g = match random_dag(n, params.p_edge, &mut rng) {
            Ok(g) => g,
            Err(e) => return rec.fail(e.to_string()),
        };
        let cbn = random_cpds(&g, &mut rng);
        let data = cbn.sample(params.m, &mut rng);
        let hints = match pick_hint_edges(&g, params.p_hint, &mut rng) {
            Ok(k) => k,
            Err(e) => return rec.fail(e.to_string()),
        };
        let ates = match ate_matrix(&cbn) {
            Ok(a) => a,
            Err(e) => return rec.fail(e.to_string()),
        };
        let Some((t, o)) = select_target(&cbn, &ates, &mut rng) else {
            continue;
        };
        let requested = params.probes_requested();
        let pairs = select_probes(n, (t, o), requested, &mut rng);

        let label = |v: usize| g.label(v).to_string();
        rec.connected = g.is_weakly_connected();
        rec.true_graph = Some(g.to_text());
        rec.hints = hints.required().iter().cloned().collect();
        rec.target_treatment = Some(label(t));
        rec.target_outcome = Some(label(o));
        rec.true_ate = Some(ates[t][o]);
        rec.probes_requested = Some(requested);

        let mut cfg = AnalysisConfig::new(label(t), label(o));
        cfg.knowledge = hints;
        cfg.penalty = params.penalty;
        let specs: Result<Vec<ProbeSpec>> = pairs
            .iter()
            .map(|&(a, b)| {
                let expectation = Expectation::Point {
                    target: ates[a][b],
                    tol: params.eps_probe,
                };
                ProbeSpec::new(label(a), label(b), expectation)
            })
            .collect();
        cfg.probes = match specs {
            Ok(s) => s,
            Err(e) => return rec.fail(e.to_string()),
        };
        let result = match run_on_binary(&data, &cfg) {
            Ok(r) => r,
            Err(e) => return rec.fail(e.to_string()),
        };
        let truth = ates[t][o];
        let est = result.report.target.value;
        rec.est_ate = Some(est);
        rec.abs_err = Some((est - truth).abs());
        rec.rel_err = Some(((est - truth) / truth).abs());
        rec.shd = match shd(&result.discovered, &g) {
            Ok(d) => Some(d),
            Err(e) => return rec.fail(e.to_string()),
        };
        rec.hit_rate = Some(result.report.hit_rate);
        rec.n_probes = Some(pairs.len());
        rec.discovered_graph = Some(result.discovered.to_text());
        rec.probes = pairs
            .iter()
            .zip(&result.report.probes)
            .map(|(&(a, b), p)| ProbeDetail {
                treatment: label(a),
                outcome: label(b),
                truth: ates[a][b],
                estimate: p.estimate.value,
                passed: p.passed,
            })
            .collect();
        rec.failed = false;
        return rec;
    }
    rec.fail(format!(
        "no network with a nontrivial target in {} draws",
        MAX_REGENERATIONS + 1
    ))
}

/// Runs `params.n_runs` runs on a pool of `threads` workers (`None`: one per
/// core). The result is ordered by run index and independent of `threads`.
pub fn run_study(params: &SimParams, threads: Option<usize>) -> Result<Vec<RunRecord>> {
    params.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..params.n_runs as u64)
            .into_par_iter()
            .map(|i| simulate_run(params, i))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub runs: usize,
    pub failed: usize,
    pub regenerations: u64,
    pub mean_hit_rate: Option<f64>,
}

pub fn summarize(records: &[RunRecord]) -> StudySummary {
    let hits: Vec<f64> = records.iter().filter(|r| !r.failed).filter_map(|r| r.hit_rate).collect();
    StudySummary {
        runs: records.len(),
        failed: records.iter().filter(|r| r.failed).count(),
        regenerations: records.iter().map(|r| r.regenerations).sum(),
        mean_hit_rate: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
    }
}

// ---------------------------------------------------------------------------
// Aggregation and filters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AggRow {
    pub hit_rate: f64,
    pub count: usize,
    pub mean_abs_err: f64,
    pub mean_rel_err: f64,
    pub mean_shd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub n_probes: usize,
    /// One row per observed hit rate, ascending.
    pub rows: Vec<AggRow>,
    /// Failed runs left out of the groups.
    pub excluded_failed: usize,
}

impl Aggregate {
    pub fn histogram(&self) -> Vec<(f64, usize)> {
        self.rows.iter().map(|r| (r.hit_rate, r.count)).collect()
    }
}

/// Groups successful runs by their exact hit rate `k / n_probes`.
pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.failed).collect();
    let first = ok
        .first()
        .ok_or_else(|| Error::invalid("no successful runs to aggregate"))?;
    let n_probes = first.n_probes.unwrap_or(0);
    if n_probes == 0 {
        return Err(Error::invalid("runs without probes cannot be aggregated"));
    }
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in &ok {
        if r.n_probes != Some(n_probes) {
            return Err(Error::invalid(format!(
                "mixed probe counts ({n_probes} and {:?}); aggregate studies separately",
                r.n_probes
            )));
        }
        let (Some(h), Some(_), Some(_), Some(_)) = (r.hit_rate, r.abs_err, r.rel_err, r.shd) else {
            return Err(Error::invalid(format!("run {} lacks metrics", r.run_index)));
        };
        let k = (h * n_probes as f64).round() as usize;
        groups.entry(k).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|(k, rs)| {
            let mean = |f: &dyn Fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            AggRow {
                hit_rate: k as f64 / n_probes as f64,
                count: rs.len(),
                mean_abs_err: mean(&|r| r.abs_err.unwrap_or(0.0)),
                mean_rel_err: mean(&|r| r.rel_err.unwrap_or(0.0)),
                mean_shd: mean(&|r| r.shd.unwrap_or(0) as f64),
            }
        })
        .collect();
    Ok(Aggregate {
        n_probes,
        rows,
        excluded_failed: records.len() - ok.len(),
    })
}

pub fn filter_connected(records: &[RunRecord]) -> Vec<RunRecord> {
    records.iter().filter(|r| r.connected).cloned().collect()
}

/// Runs that passed at least `hit_threshold` of their probes yet missed the
/// target by at least `err_threshold`.
pub fn filter_outliers(records: &[RunRecord], hit_threshold: f64, err_threshold: f64) -> Vec<RunRecord> {
    records
        .iter()
        .filter(|r| {
            !r.failed
                && r.hit_rate.is_some_and(|h| h >= hit_threshold)
                && r.abs_err.is_some_and(|e| e >= err_threshold)
        })
        .cloned()
        .collect()
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman needs equally long samples"));
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman needs at least two points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman needs finite values"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman is undefined for a constant sample"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trend {
    pub abs_err: f64,
    pub shd: f64,
    pub groups: usize,
}

/// Spearman correlation of hit rate against per-group mean absolute error
/// and mean SHD, over groups with at least `min_count` runs.
pub fn trend_stat(agg: &Aggregate, min_count: usize) -> Result<Trend> {
    let rows: Vec<&AggRow> = agg.rows.iter().filter(|r| r.count >= min_count).collect();
    let hit: Vec<f64> = rows.iter().map(|r| r.hit_rate).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.mean_abs_err).collect();
    let shd: Vec<f64> = rows.iter().map(|r| r.mean_shd).collect();
    Ok(Trend {
        abs_err: spearman(&hit, &err)?,
        shd: spearman(&hit, &shd)?,
        groups: rows.len(),
    })
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

pub fn write_runs_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let csv_err = |e: csv::Error| Error::invalid(format!("cannot write CSV: {e}"));
    w.write_record(RUNS_CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.run_index.to_string(),
            r.run_seed.to_string(),
            r.n.to_string(),
            r.p_edge.to_string(),
            r.m.to_string(),
            r.p_hint.to_string(),
            r.p_probe.to_string(),
            r.eps_probe.to_string(),
            cell(&r.target_treatment),
            cell(&r.target_outcome),
            cell(&r.true_ate),
            cell(&r.est_ate),
            cell(&r.abs_err),
            cell(&r.rel_err),
            cell(&r.shd),
            cell(&r.hit_rate),
            cell(&r.n_probes),
            r.connected.to_string(),
            r.failed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("cannot write CSV: {e}")))?;
    Ok(())
}

pub fn runs_csv_string(records: &[RunRecord]) -> String {
    let mut buf = Vec::new();
    write_runs_csv(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

pub fn read_runs_csv<R: std::io::Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv { row: 0, column: String::new(), message: e.to_string() })?
        .clone();
    if header.iter().ne(RUNS_CSV_COLUMNS) {
        return Err(Error::Csv {
            row: 0,
            column: String::new(),
            message: format!("expected header {}", RUNS_CSV_COLUMNS.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Csv { row, column: String::new(), message: e.to_string() })?;
        let get = |c: usize| rec.get(c).unwrap_or("");
        fn req<T: std::str::FromStr>(s: &str, row: usize, col: usize) -> Result<T> {
            s.parse().map_err(|_| Error::Csv {
                row,
                column: RUNS_CSV_COLUMNS[col].to_string(),
                message: format!("invalid value {s:?}"),
            })
        }
        fn opt<T: std::str::FromStr>(s: &str, row: usize, col: usize) -> Result<Option<T>> {
            if s.is_empty() {
                Ok(None)
            } else {
                req(s, row, col).map(Some)
            }
        }
        let text = |c: usize| (!get(c).is_empty()).then(|| get(c).to_string());
        out.push(RunRecord {
            run_index: req(get(0), row, 0)?,
            run_seed: req(get(1), row, 1)?,
            n: req(get(2), row, 2)?,
            p_edge: req(get(3), row, 3)?,
            m: req(get(4), row, 4)?,
            p_hint: req(get(5), row, 5)?,
            p_probe: req(get(6), row, 6)?,
            eps_probe: req(get(7), row, 7)?,
            target_treatment: text(8),
            target_outcome: text(9),
            true_ate: opt(get(10), row, 10)?,
            est_ate: opt(get(11), row, 11)?,
            abs_err: opt(get(12), row, 12)?,
            rel_err: opt(get(13), row, 13)?,
            shd: opt(get(14), row, 14)?,
            hit_rate: opt(get(15), row, 15)?,
            n_probes: opt(get(16), row, 16)?,
            connected: req(get(17), row, 17)?,
            failed: req(get(18), row, 18)?,
            error: None,
            regenerations: 0,
            probes_requested: None,
            true_graph: None,
            discovered_graph: None,
            hints: Vec::new(),
            probes: Vec::new(),
        });
    }
    Ok(out)
}

pub fn read_runs_csv_file(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_runs_csv(std::io::BufReader::new(file))
}

pub fn runs_jsonl_string(records: &[RunRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_runs_jsonl<R: BufRead>(reader: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

pub fn read_runs_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_runs_jsonl(std::io::BufReader::new(file))
}

/// Writes `runs.csv` and `runs.jsonl` into `dir`, each atomically.
pub fn write_study(records: &[RunRecord], dir: &Path) -> Result<()> {
    write_atomic(&dir.join("runs.csv"), runs_csv_string(records).as_bytes())?;
    write_atomic(&dir.join("runs.jsonl"), runs_jsonl_string(records)?.as_bytes())
}

pub fn agg_csv_string(agg: &Aggregate) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(AGG_CSV_COLUMNS).expect("in-memory write");
    for r in &agg.rows {
        w.write_record([
            r.hit_rate.to_string(),
            r.count.to_string(),
            r.mean_abs_err.to_string(),
            r.mean_rel_err.to_string(),
            r.mean_shd.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

pub fn read_agg_csv<R: std::io::Read>(reader: R) -> Result<Vec<AggRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let bad = |row: usize, column: &str, message: String| Error::Csv {
        row,
        column: column.to_string(),
        message,
    };
    let header = rdr.headers().map_err(|e| bad(0, "", e.to_string()))?.clone();
    if header.iter().ne(AGG_CSV_COLUMNS) {
        return Err(bad(0, "", format!("expected header {}", AGG_CSV_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| bad(row, "", e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            let s = rec.get(c).unwrap_or("");
            s.parse()
                .map_err(|_| bad(row, AGG_CSV_COLUMNS[c], format!("invalid value {s:?}")))
        };
        let count = rec.get(1).unwrap_or("");
        out.push(AggRow {
            hit_rate: num(0)?,
            count: count
                .parse()
                .map_err(|_| bad(row, "count", format!("invalid value {count:?}")))?,
            mean_abs_err: num(2)?,
            mean_rel_err: num(3)?,
            mean_shd: num(4)?,
        });
    }
    Ok(out)
}
