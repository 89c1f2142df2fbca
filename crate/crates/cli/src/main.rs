//! `qprobe`: simulation studies, aggregation, plots, the sprinkler demo and
//! probe validation of user data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qprobe::dataset::RawDataset;
use qprobe::discovery::Knowledge;
use qprobe::io::write_atomic;
use qprobe::pipeline::{run_end_to_end, AnalysisConfig, PreprocessStep};
use qprobe::plot::{plot_aggregate, plot_records, PlotKind, PlotSpec, PlotY};
use qprobe::probing::ProbeSpec;
use qprobe::sim::{self, SimParams};
use qprobe::sprinkler;
use qprobe::Error;

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PROBE_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "qprobe", version, about = "Validate causal models with quantitative probes")]
struct Cli {
    /// Seed for every random choice (simulation master seed, demo data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation studies (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study and write runs.csv and runs.jsonl.
    Simulate(SimulateArgs),
    /// Group runs by hit rate and write agg.csv, or list outliers.
    Aggregate(AggregateArgs),
    /// Draw an SVG chart from runs.csv or agg.csv.
    Plot(PlotArgs),
    /// Analyze the sprinkler example with correct or flipped knowledge.
    DemoSprinkler(DemoArgs),
    /// Run the end-to-end analysis on a CSV file and check the probes.
    /// Exits 0 when every probe passes and 3 otherwise.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// `key = value` file with SimParams fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Probability of each directed edge.
    #[arg(long)]
    p_edge: Option<f64>,
    /// Samples per run.
    #[arg(long)]
    m: Option<usize>,
    /// Share of true edges given as required knowledge.
    #[arg(long)]
    p_hint: Option<f64>,
    /// Probes per run as a share of n².
    #[arg(long)]
    p_probe: Option<f64>,
    /// Probe tolerance around the true effect.
    #[arg(long)]
    eps_probe: Option<f64>,
    /// Number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// BIC penalty multiplier.
    #[arg(long)]
    penalty: Option<f64>,
}

#[derive(Args)]
struct AggregateArgs {
    /// runs.csv from `simulate`.
    runs: PathBuf,
    /// Keep only runs whose true graph is connected.
    #[arg(long)]
    connected_only: bool,
    /// List runs with a high hit rate but a large target error instead of
    /// aggregating.
    #[arg(long)]
    outliers: bool,
    /// Minimum hit rate of an outlier.
    #[arg(long, default_value_t = 1.0)]
    hit_threshold: f64,
    /// Minimum absolute target error of an outlier.
    #[arg(long, default_value_t = 0.2)]
    err_threshold: f64,
    /// Output file (default: <out-dir>/agg.csv).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// runs.csv or agg.csv.
    input: PathBuf,
    /// scatter, means or histogram.
    #[arg(long)]
    kind: PlotKind,
    /// abs_err, rel_err, shd or count (histograms only).
    #[arg(long)]
    y: Option<PlotY>,
    /// Keep only runs whose true graph is connected (runs.csv input).
    #[arg(long)]
    connected_only: bool,
    /// Output file (default: <out-dir>/<kind>-<y>.svg).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Use the edge-reversed knowledge set.
    #[arg(long)]
    flip_knowledge: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV with a header row.
    data: PathBuf,
    /// Knowledge file with `require a -> b` / `forbid a -> b` lines.
    #[arg(long)]
    knowledge: Option<PathBuf>,
    /// Probes file with `probe t -> o expect ...` lines.
    #[arg(long)]
    probes: PathBuf,
    /// Target effect as `treatment,outcome`.
    #[arg(long)]
    target: String,
    /// Preprocessing step, applied in the given order:
    /// `drop:COL`, `binarize:COL:ZERO:ONE` or `filter:COL:V1,V2`.
    #[arg(long = "step")]
    steps: Vec<String>,
    /// BIC penalty multiplier.
    #[arg(long, default_value_t = 1.0)]
    penalty: f64,
    /// Also write the JSON report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.root() {
            Error::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(|e| Failure::Io(e.to_string()))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> CmdResult {
    let mut p = SimParams::default();
    if let Some(path) = &args.config {
        p.apply_config(&read_text(path)?)?;
    }
    p.n = args.n.unwrap_or(p.n);
    p.p_edge = args.p_edge.unwrap_or(p.p_edge);
    p.m = args.m.unwrap_or(p.m);
    p.p_hint = args.p_hint.unwrap_or(p.p_hint);
    p.p_probe = args.p_probe.unwrap_or(p.p_probe);
    p.eps_probe = args.eps_probe.unwrap_or(p.eps_probe);
    p.n_runs = args.runs.unwrap_or(p.n_runs);
    p.penalty = args.penalty.unwrap_or(p.penalty);
    p.master_seed = cli.seed.unwrap_or(p.master_seed);
    p.validate()?;
    if !cli.out_dir.is_dir() {
        return Err(Failure::Io(format!("output directory {} does not exist", cli.out_dir.display())));
    }
    let records = sim::run_study(&p, cli.threads)?;
    sim::write_study(&records, &cli.out_dir).map_err(Failure::from)?;
    let s = sim::summarize(&records);
    println!("runs: {}", s.runs);
    println!("failed: {}", s.failed);
    println!("regenerated networks: {}", s.regenerations);
    match s.mean_hit_rate {
        Some(h) => println!("mean hit rate: {h:.4}"),
        None => println!("mean hit rate: n/a"),
    }
    println!("wrote {}", cli.out_dir.join("runs.csv").display());
    println!("wrote {}", cli.out_dir.join("runs.jsonl").display());
    Ok(ExitCode::SUCCESS)
}

/// Loads runs.csv, taking graphs and probe detail from a runs.jsonl next to
/// it when one exists.
fn load_runs(path: &Path) -> Result<Vec<sim::RunRecord>, Failure> {
    let records = sim::read_runs_csv_file(path)?;
    let sidecar = path.with_extension("jsonl");
    if !sidecar.is_file() {
        return Ok(records);
    }
    let detailed = sim::read_runs_jsonl_file(&sidecar)?;
    Ok(records
        .into_iter()
        .map(|mut r| {
            if let Some(d) = detailed
                .iter()
                .find(|d| d.run_index == r.run_index && d.run_seed == r.run_seed)
            {
                r.error = d.error.clone();
                r.regenerations = d.regenerations;
                r.probes_requested = d.probes_requested;
                r.true_graph = d.true_graph.clone();
                r.discovered_graph = d.discovered_graph.clone();
                r.hints = d.hints.clone();
                r.probes = d.probes.clone();
            }
            r
        })
        .collect())
}

fn aggregate(cli: &Cli, args: &AggregateArgs) -> CmdResult {
    let mut records = load_runs(&args.runs)?;
    if args.connected_only {
        records = sim::filter_connected(&records);
    }
    if args.outliers {
        let out = sim::filter_outliers(&records, args.hit_threshold, args.err_threshold);
        println!("{} outlier run(s)", out.len());
        for r in &out {
            println!(
                "run {} (seed {}): target {} -> {}, true {:.4}, estimate {:.4}, hit rate {:.4}, shd {}",
                r.run_index,
                r.run_seed,
                r.target_treatment.as_deref().unwrap_or("?"),
                r.target_outcome.as_deref().unwrap_or("?"),
                r.true_ate.unwrap_or(f64::NAN),
                r.est_ate.unwrap_or(f64::NAN),
                r.hit_rate.unwrap_or(f64::NAN),
                r.shd.map(|d| d.to_string()).unwrap_or_default(),
            );
            for (name, graph) in [("true", &r.true_graph), ("discovered", &r.discovered_graph)] {
                match graph {
                    Some(text) => {
                        println!("  {name} graph:");
                        for line in text.lines() {
                            println!("    {line}");
                        }
                    }
                    None => println!("  {name} graph: unavailable (no runs.jsonl)"),
                }
            }
        }
        return Ok(ExitCode::SUCCESS);
    }
    let agg = sim::aggregate(&records)?;
    let output = args.output.clone().unwrap_or_else(|| cli.out_dir.join("agg.csv"));
    write_file(&output, sim::agg_csv_string(&agg).as_bytes())?;
    let mut table = String::new();
    let _ = writeln!(table, "{:>9} {:>6} {:>13} {:>13} {:>9}", "hit_rate", "count", "mean_abs_err", "mean_rel_err", "mean_shd");
    for r in &agg.rows {
        let _ = writeln!(
            table,
            "{:>9.4} {:>6} {:>13.4} {:>13.4} {:>9.3}",
            r.hit_rate, r.count, r.mean_abs_err, r.mean_rel_err, r.mean_shd
        );
    }
    print!("{table}");
    if agg.excluded_failed > 0 {
        println!("excluded failed runs: {}", agg.excluded_failed);
    }
    match sim::trend_stat(&agg, 5) {
        Ok(t) => println!(
            "spearman over {} groups with >= 5 runs: abs_err {:.3}, shd {:.3}",
            t.groups, t.abs_err, t.shd
        ),
        Err(e) => println!("trend unavailable: {e}"),
    }
    println!("wrote {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn plot(cli: &Cli, args: &PlotArgs) -> CmdResult {
    let y = match (args.kind, args.y) {
        (_, Some(y)) => y,
        (PlotKind::Histogram, None) => PlotY::Count,
        (_, None) => return Err(Failure::Usage("--y is required for scatter and means plots".into())),
    };
    let spec = PlotSpec::new(args.kind, y)?;
    let text = read_text(&args.input)?;
    let header = text.lines().next().unwrap_or("");
    let svg = if header.starts_with("run_index") {
        let mut records = sim::read_runs_csv(text.as_bytes())?;
        if args.connected_only {
            records = sim::filter_connected(&records);
        }
        plot_records(spec, &records)?
    } else if header.starts_with("hit_rate") {
        if args.connected_only {
            return Err(Failure::Usage("--connected-only needs runs.csv input".into()));
        }
        plot_aggregate(spec, &sim::read_agg_csv(text.as_bytes())?)?
    } else {
        return Err(Failure::Usage(format!(
            "{} is neither runs.csv nor agg.csv",
            args.input.display()
        )));
    };
    let y_name = match y {
        PlotY::AbsErr => "abs_err",
        PlotY::RelErr => "rel_err",
        PlotY::Shd => "shd",
        PlotY::Count => "count",
    };
    let kind_name = match args.kind {
        PlotKind::Scatter => "scatter",
        PlotKind::Means => "means",
        PlotKind::Histogram => "histogram",
    };
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| cli.out_dir.join(format!("{kind_name}-{y_name}.svg")));
    write_file(&output, svg.as_bytes())?;
    println!("wrote {}", output.display());
    Ok(ExitCode::SUCCESS)
}

fn demo(cli: &Cli, args: &DemoArgs) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(42));
    let out = sprinkler::run_demo(args.flip_knowledge, &mut rng)?;
    if args.json {
        let mut j = out.result.to_json();
        j["true_target_ate"] = serde_json::json!(out.true_target_ate);
        j["shd_to_fixture"] = serde_json::json!(out.shd);
        println!("{}", serde_json::to_string_pretty(&j).expect("JSON value serializes"));
    } else {
        println!(
            "knowledge: {}",
            if args.flip_knowledge { "flipped" } else { "correct" }
        );
        println!(
            "rows: {} drawn, {} after keeping winter and spring",
            out.raw_rows, out.analyzed_rows
        );
        print!("{}", out.result.render_text());
        println!("true target effect: {:.4}", out.true_target_ate);
        println!("SHD to the generating graph: {}", out.shd);
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_step(s: &str) -> Result<PreprocessStep, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Failure::Usage(format!("bad --step {s:?}; use drop:COL, binarize:COL:ZERO:ONE or filter:COL:V1,V2"));
    match parts.as_slice() {
        ["drop", col] => Ok(PreprocessStep::DropColumns { columns: vec![col.to_string()] }),
        ["binarize", col, zero, one] => Ok(PreprocessStep::Binarize {
            column: col.to_string(),
            zero_label: zero.to_string(),
            one_label: one.to_string(),
        }),
        ["filter", col, values] => Ok(PreprocessStep::FilterRows {
            column: col.to_string(),
            keep: values.split(',').map(str::to_string).collect(),
        }),
        _ => Err(bad()),
    }
}

fn analyze(args: &AnalyzeArgs) -> CmdResult {
    let (t, o) = args
        .target
        .split_once(',')
        .map(|(t, o)| (t.trim(), o.trim()))
        .filter(|(t, o)| !t.is_empty() && !o.is_empty())
        .ok_or_else(|| Failure::Usage(format!("--target must be `treatment,outcome`, got {:?}", args.target)))?;
    let mut cfg = AnalysisConfig::new(t, o);
    cfg.penalty = args.penalty;
    cfg.preprocessing = args.steps.iter().map(|s| parse_step(s)).collect::<Result<_, _>>()?;
    if let Some(path) = &args.knowledge {
        cfg.knowledge = Knowledge::parse(&read_text(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    cfg.probes = ProbeSpec::parse_file(&read_text(&args.probes)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.probes.display())))?;
    let data = RawDataset::read_csv(&args.data)?;
    let result = run_end_to_end(&data, &cfg)?;
    let json = serde_json::to_string_pretty(&result.to_json()).expect("JSON value serializes");
    if let Some(path) = &args.report {
        write_file(path, format!("{json}\n").as_bytes())?;
    }
    if args.json {
        println!("{json}");
    } else {
        print!("{}", result.render_text());
    }
    if result.report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_PROBE_FAILED))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Aggregate(a) => aggregate(&cli, a),
        Command::Plot(a) => plot(&cli, a),
        Command::DemoSprinkler(a) => demo(&cli, a),
        Command::Analyze(a) => analyze(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}
