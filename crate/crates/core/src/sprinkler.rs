//! The sprinkler example: a five-variable network where the season drives
//! both the sprinkler and the rain, either one wets the grass, and wet grass
//! is slippery. The CPD values are fixture choices.

use rand::Rng;

use crate::bayesnet::Cbn;
use crate::dataset::RawDataset;
use crate::discovery::Knowledge;
use crate::error::Result;
use crate::graph::{shd, Dag};
use crate::pipeline::{run_end_to_end, AnalysisConfig, AnalysisResult, PreprocessStep};
use crate::probing::{Expectation, ProbeSpec};

pub const NODES: [&str; 5] = ["Season", "Sprinkler", "Rain", "Wet", "Slippery"];
pub const TARGET: (&str, &str) = ("Sprinkler", "Slippery");
pub const DEMO_ROWS: usize = 10_000;

const SEASONS: [&str; 4] = ["Winter", "Spring", "Summer", "Autumn"];
// p(Sprinkler = 1) and p(Rain = 1) per season.
const SPRINKLER: [f64; 4] = [0.2, 0.6, 0.8, 0.3];
const RAIN: [f64; 4] = [0.7, 0.3, 0.1, 0.6];
const WET: [f64; 4] = [0.05, 0.8, 0.85, 0.95];
const SLIPPERY: [f64; 2] = [0.05, 0.85];

pub fn sprinkler_dag() -> Dag {
    Dag::from_named_edges(
        &NODES,
        &[
            ("Season", "Sprinkler"),
            ("Season", "Rain"),
            ("Sprinkler", "Wet"),
            ("Rain", "Wet"),
            ("Wet", "Slippery"),
        ],
    )
    .expect("fixture graph is valid")
}

/// The network over the binarized season (Winter = 0, Spring = 1).
pub fn sprinkler_cbn() -> Cbn {
    Cbn::from_tables(
        sprinkler_dag(),
        vec![
            vec![0.5],
            SPRINKLER[..2].to_vec(),
            RAIN[..2].to_vec(),
            WET.to_vec(),
            SLIPPERY.to_vec(),
        ],
    )
    .expect("fixture tables are valid")
}

/// Draws raw observations with a categorical season. Rows from winter and
/// spring follow [`sprinkler_cbn`] exactly.
pub fn raw_observations<R: Rng + ?Sized>(m: usize, rng: &mut R) -> RawDataset {
    let rows = (0..m)
        .map(|_| {
            let season = rng.gen_range(0..SEASONS.len());
            let sprinkler = rng.gen::<f64>() < SPRINKLER[season];
            let rain = rng.gen::<f64>() < RAIN[season];
            let wet = rng.gen::<f64>() < WET[2 * sprinkler as usize + rain as usize];
            let slippery = rng.gen::<f64>() < SLIPPERY[wet as usize];
            let bit = |b: bool| if b { "1" } else { "0" }.to_string();
            vec![
                SEASONS[season].to_string(),
                bit(sprinkler),
                bit(rain),
                bit(wet),
                bit(slippery),
            ]
        })
        .collect();
    RawDataset::new(NODES.iter().map(|s| s.to_string()).collect(), rows)
        .expect("generated table is rectangular")
}

fn node_rules(k: &mut Knowledge) {
    for other in NODES.iter().filter(|&&v| v != "Slippery") {
        k.forbid("Slippery", *other);
    }
    for other in NODES.iter().filter(|&&v| v != "Season") {
        k.forbid(*other, "Season");
    }
}

/// What an analyst would know: slippery grass causes nothing, nothing causes
/// the season, the sprinkler does not make it rain, the season does not wet
/// the grass directly, and both sprinkler and rain wet the grass.
pub fn correct_knowledge() -> Knowledge {
    let mut k = Knowledge::new();
    node_rules(&mut k);
    k.forbid("Sprinkler", "Rain")
        .forbid("Season", "Wet")
        .require("Sprinkler", "Wet")
        .require("Rain", "Wet");
    k
}

/// The pairwise statements of [`correct_knowledge`] reversed; the rules about
/// what Slippery and Season may cause or be caused by are kept.
pub fn flipped_knowledge() -> Knowledge {
    let mut k = Knowledge::new();
    node_rules(&mut k);
    k.forbid("Rain", "Sprinkler")
        .forbid("Wet", "Season")
        .require("Wet", "Sprinkler")
        .require("Wet", "Rain");
    k
}

/// Both known effects are expected to be positive.
pub fn probes() -> Vec<ProbeSpec> {
    let positive = Expectation::GreaterThan { threshold: 0.0 };
    vec![
        ProbeSpec::new("Sprinkler", "Wet", positive).expect("valid probe"),
        ProbeSpec::new("Wet", "Slippery", positive).expect("valid probe"),
    ]
}

pub fn demo_config(flip_knowledge: bool) -> AnalysisConfig {
    let mut cfg = AnalysisConfig::new(TARGET.0, TARGET.1);
    cfg.preprocessing = vec![PreprocessStep::Binarize {
        column: "Season".into(),
        zero_label: "Winter".into(),
        one_label: "Spring".into(),
    }];
    cfg.knowledge = if flip_knowledge {
        flipped_knowledge()
    } else {
        correct_knowledge()
    };
    cfg.probes = probes();
    cfg
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub result: AnalysisResult,
    /// Exact effect of the target pair in the fixture network.
    pub true_target_ate: f64,
    /// Structural Hamming distance between the discovered and fixture graphs.
    pub shd: usize,
    pub raw_rows: usize,
    /// Rows left after binarizing the season.
    pub analyzed_rows: usize,
}

pub fn run_demo<R: Rng + ?Sized>(flip_knowledge: bool, rng: &mut R) -> Result<DemoOutcome> {
    let raw = raw_observations(DEMO_ROWS, rng);
    let result = run_end_to_end(&raw, &demo_config(flip_knowledge))?;
    let cbn = sprinkler_cbn();
    let g = cbn.graph();
    let t = g.index_of(TARGET.0).expect("fixture node");
    let o = g.index_of(TARGET.1).expect("fixture node");
    Ok(DemoOutcome {
        true_target_ate: cbn.true_ate(t, o)?,
        shd: shd(&result.discovered, g)?,
        raw_rows: raw.n_rows(),
        analyzed_rows: raw.binarize("Season", "Winter", "Spring")?.n_rows(),
        result,
    })
}
