use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qprobe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_every_flag() {
    let cases: [(&str, &[&str]); 5] = [
        ("simulate", &["--config", "--n", "--p-edge", "--m", "--p-hint", "--p-probe", "--eps-probe", "--runs", "--penalty"]),
        ("aggregate", &["--connected-only", "--outliers", "--hit-threshold", "--err-threshold", "--output"]),
        ("plot", &["--kind", "--y", "--connected-only", "--output"]),
        ("demo-sprinkler", &["--flip-knowledge", "--json"]),
        ("analyze", &["--knowledge", "--probes", "--target", "--step", "--penalty", "--report", "--json"]),
    ];
    for (cmd, flags) in cases {
        let out = qprobe(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        for flag in flags.iter().chain(&["--seed", "--threads", "--out-dir"]) {
            assert!(text.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
    assert_eq!(code(&qprobe(&["--version"])), 0);
    assert_eq!(code(&qprobe(&["simulate", "--bogus"])), 2);
}

#[test]
fn simulate_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let out = qprobe(&["--out-dir", d, "simulate", "--runs", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("run_index,run_seed,n,p_edge,m,p_hint,p_probe,eps_probe,target_treatment"));

    let out = qprobe(&["--out-dir", d, "--seed", "3", "simulate", "--runs", "4", "--n", "5"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("runs: 4"));
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(fs::read_to_string(dir.path().join("runs.jsonl")).unwrap().lines().count(), 4);

    let missing = dir.path().join("nope");
    assert_eq!(code(&qprobe(&["--out-dir", path(&missing), "simulate", "--runs", "1"])), 1);
    assert_eq!(code(&qprobe(&["--out-dir", d, "simulate", "--p-edge", "2"])), 2);
    assert_eq!(code(&qprobe(&["--out-dir", d, "simulate", "--p-probe", "0"])), 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.conf");
    fs::write(&cfg, "# small study\nn = 4\nn_runs = 3\nm = 300\n").unwrap();
    let out = qprobe(&["--out-dir", path(dir.path()), "simulate", "--config", path(&cfg), "--runs", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().contains(",4,0.1,300,"));
    fs::write(&cfg, "nodes = 4\n").unwrap();
    assert_eq!(code(&qprobe(&["--out-dir", path(dir.path()), "simulate", "--config", path(&cfg)])), 2);
}

const HEADER: &str = "run_index,run_seed,n,p_edge,m,p_hint,p_probe,eps_probe,target_treatment,target_outcome,true_ate,est_ate,abs_err,rel_err,shd,hit_rate,n_probes,connected,failed";

#[test]
fn aggregate_and_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs.csv");
    let rows = [
        "0,1,7,0.1,1000,0.3,0.5,0.1,x0,x1,0.5,0.25,0.25,0.5,1,1,24,true,false",
        "1,2,7,0.1,1000,0.3,0.5,0.1,x0,x2,0.5,0.45,0.05,0.1,0,1,24,false,false",
        "2,3,7,0.1,1000,0.3,0.5,0.1,x1,x2,0.5,0.1,0.4,0.8,3,0.5,24,true,false",
        "3,4,7,0.1,1000,0.3,0.5,0.1,,,,,,,,,,false,true",
    ];
    fs::write(&runs, format!("{HEADER}\n{}\n", rows.join("\n"))).unwrap();

    let out = qprobe(&["--out-dir", path(dir.path()), "aggregate", path(&runs)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let agg = fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert_eq!(
        agg,
        "hit_rate,count,mean_abs_err,mean_rel_err,mean_shd\n0.5,1,0.4,0.8,3\n1,2,0.15,0.3,0.5\n"
    );
    assert!(stdout(&out).contains("excluded failed runs: 1"));

    let out = qprobe(&["--out-dir", path(dir.path()), "aggregate", path(&runs), "--connected-only"]);
    assert_eq!(code(&out), 0);
    let agg = fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
    assert!(agg.contains("\n1,1,0.25,0.5,1\n"));

    let out = qprobe(&["aggregate", path(&runs), "--outliers"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("1 outlier run(s)"));
    assert!(text.contains("run 0 (seed 1)"));
    assert!(text.contains("unavailable"));

    fs::write(&runs, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&qprobe(&["aggregate", path(&runs)])), 2);
    assert_eq!(code(&qprobe(&["aggregate", path(&dir.path().join("none.csv"))])), 1);
}

#[test]
fn outliers_show_graphs_from_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&qprobe(&["--out-dir", d, "--seed", "42", "simulate", "--runs", "60"])), 0);
    let out = qprobe(&["aggregate", path(&dir.path().join("runs.csv")), "--outliers", "--err-threshold", "0"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("true graph:\n    nodes: x0, x1"), "{text}");
    assert!(!text.contains("unavailable"));
}

#[test]
fn plots_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(code(&qprobe(&["--out-dir", d, "simulate", "--runs", "30"])), 0);
    let runs = dir.path().join("runs.csv");
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    for target in [&a, &b] {
        let out = qprobe(&["plot", path(&runs), "--kind", "scatter", "--y", "abs_err", "--output", path(target)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let svg = fs::read(&a).unwrap();
    assert_eq!(svg, fs::read(&b).unwrap());
    assert!(String::from_utf8(svg).unwrap().contains("hit rate"));

    assert_eq!(code(&qprobe(&["--out-dir", d, "plot", path(&runs), "--kind", "histogram"])), 0);
    assert!(dir.path().join("histogram-count.svg").is_file());
    assert_eq!(code(&qprobe(&["--out-dir", d, "aggregate", path(&runs)])), 0);
    let agg = dir.path().join("agg.csv");
    assert_eq!(code(&qprobe(&["--out-dir", d, "plot", path(&agg), "--kind", "means", "--y", "shd"])), 0);
    assert!(dir.path().join("means-shd.svg").is_file());

    assert_eq!(code(&qprobe(&["plot", path(&runs), "--kind", "histogram", "--y", "shd"])), 2);
    assert_eq!(code(&qprobe(&["plot", path(&runs), "--kind", "pie", "--y", "shd"])), 2);
    fs::write(&runs, format!("{HEADER}\n")).unwrap();
    assert_eq!(code(&qprobe(&["plot", path(&runs), "--kind", "histogram"])), 2);
}

#[test]
fn sprinkler_demo() {
    let a = qprobe(&["--seed", "7", "demo-sprinkler", "--json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&qprobe(&["--seed", "7", "demo-sprinkler", "--json"])));
    let j: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(j["hit_rate"], 1.0);
    assert_eq!(j["shd_to_fixture"], 0);
    let flipped = qprobe(&["--seed", "7", "demo-sprinkler", "--flip-knowledge", "--json"]);
    let j: serde_json::Value = serde_json::from_str(&stdout(&flipped)).unwrap();
    assert_eq!(j["hit_rate"], 0.5);
    assert_eq!(j["target"]["estimate"], 0.0);
    assert_eq!(j["target"]["method"], "trivial-zero");
    let text = stdout(&qprobe(&["demo-sprinkler"]));
    assert!(text.contains("[PASS] Wet -> Slippery expect > 0"));
}

fn analysis_inputs(dir: &Path) -> (String, String, String) {
    let data = dir.join("data.csv");
    let mut csv = String::from("Season,Sprinkler,Rain,Wet,Slippery\n");
    let raw = qprobe::sprinkler::raw_observations(4000, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1));
    for row in raw.rows() {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(&data, csv).unwrap();
    let knowledge = dir.join("knowledge.txt");
    fs::write(&knowledge, qprobe::sprinkler::correct_knowledge().to_text()).unwrap();
    let probes = dir.join("probes.txt");
    fs::write(&probes, "# known effects\nprobe Sprinkler -> Wet expect > 0\nprobe Wet -> Slippery expect in [0.5, 1]\n").unwrap();
    (path(&data).into(), path(&knowledge).into(), path(&probes).into())
}

#[test]
fn analyze_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, knowledge, probes) = analysis_inputs(dir.path());
    let report = dir.path().join("report.json");
    let base = [
        "analyze", &data, "--knowledge", &knowledge, "--target", "Sprinkler,Slippery",
        "--step", "binarize:Season:Winter:Spring",
    ];
    let mut args = base.to_vec();
    args.extend(["--probes", &probes, "--report", path(&report)]);
    let out = qprobe(&args);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("hit rate: 2/2"));
    let j: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(j["target"]["pair"], serde_json::json!(["Sprinkler", "Slippery"]));
    assert_eq!(j["probes"][1]["expectation"], "in [0.5, 1]");

    let failing = dir.path().join("failing.txt");
    fs::write(&failing, "probe Sprinkler -> Wet expect < 0\nprobe Wet -> Slippery expect > 0\n").unwrap();
    let mut args = base.to_vec();
    args.extend(["--probes", path(&failing), "--json"]);
    let out = qprobe(&args);
    assert_eq!(code(&out), 3);
    let j: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(j["hit_rate"], 0.5);

    let unknown = dir.path().join("unknown.txt");
    fs::write(&unknown, "probe Sprinkler -> Mud expect > 0\n").unwrap();
    let mut args = base.to_vec();
    args.extend(["--probes", path(&unknown)]);
    let out = qprobe(&args);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("\"Mud\""), "{}", stderr(&out));

    // Without binarization the season column is not binary.
    let out = qprobe(&["analyze", &data, "--probes", &probes, "--target", "Sprinkler,Slippery"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Season"));
    let out = qprobe(&["analyze", &data, "--probes", &probes, "--target", "Sprinkler"]);
    assert_eq!(code(&out), 2);
    let out = qprobe(&["analyze", &data, "--probes", &probes, "--target", "a,b", "--step", "squash:x"]);
    assert_eq!(code(&out), 2);
}
