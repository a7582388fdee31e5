use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hippo::data::{blocks_to_dataset, serialize_libsvm, synth_least_squares};
use hippo::graph_io::read_edge_list;
use hippo::output::parse_trace_csv;

fn hippo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hippo")).args(args).output().unwrap()
}

fn configs() -> String {
    format!("{}/../../configs", env!("CARGO_MANIFEST_DIR"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 4
seeds = [0, 1]
iterations = 150
tolerance = 0.0

[data]
dim = 3
rows = 120

[graph]
agents = 6
p = 0.5

[hyper]
mu_theta = 2.0

[activation]
kind = "fraction"
fraction = 0.5

[sweep]
newton_fraction = [0.0, 1.0]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_verify_config_passes() {
    let o = hippo(&["verify", "--config", &format!("{}/verify.toml", configs())]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("PASS engine equivalence"));
    assert!(out.contains("PASS expected contraction"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn run_writes_every_artifact_and_the_aggregate_matches_the_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = hippo(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("observed fitted rate"));
    for f in ["aggregate.csv", "loss_vs_rounds.svg", "loss_vs_cost.svg", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let meta = fs::read_to_string(out.join("traces/HIPPO-100_C0.5_seed1.meta")).unwrap();
    assert!(meta.contains("config=seed = 4"));
    assert!(meta.contains("M_f="));

    let traces: Vec<Vec<f64>> = ["HIPPO-0_C0.5_seed0", "HIPPO-0_C0.5_seed1"]
        .iter()
        .map(|s| {
            let text = fs::read_to_string(out.join(format!("traces/{s}.csv"))).unwrap();
            parse_trace_csv(&text).unwrap().iter().map(|r| r.rel_loss).collect()
        })
        .collect();
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    let rows: Vec<Vec<&str>> =
        agg.lines().skip(1).map(|l| l.split(',').collect::<Vec<_>>()).filter(|r| r[0] == "HIPPO-0_C0.5").collect();
    assert_eq!(rows.len(), 151);
    for r in rows {
        let t: usize = r[3].parse().unwrap();
        let mean = (traces[0][t] + traces[1][t]) / 2.0;
        assert_eq!(r[4].parse::<f64>().unwrap(), mean);
    }
}

#[test]
fn empty_sweep_gives_a_single_trace() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("seeds = [0, 1]", "seeds = [3]").replace("[sweep]\nnewton_fraction = [0.0, 1.0]\n", "");
    let cfg = write_config(dir.path(), "one.toml", &text);
    let out = dir.path().join("out");
    assert!(hippo(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let names: Vec<_> = fs::read_dir(out.join("traces")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "{names:?}");
    assert!(out.join("traces/HIPPO-0_C0.5_seed3.csv").is_file());
}

#[test]
fn seed_override_replaces_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = hippo(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed-override", "9"]);
    assert!(o.status.success());
    assert!(out.join("traces/HIPPO-0_C0.5_seed9.csv").is_file());
    assert!(!out.join("traces/HIPPO-0_C0.5_seed0.csv").exists());
}

#[test]
fn libsvm_input_and_edge_list_graph() {
    let dir = tempfile::tempdir().unwrap();
    let ds = blocks_to_dataset(&synth_least_squares(1, 3, 60, 0.1, 2).blocks);
    fs::write(dir.path().join("train.svm"), serialize_libsvm(&ds)).unwrap();
    let g = hippo(&["gen-graph", "--agents", "5", "--p", "0.6", "--seed", "3"]);
    assert!(g.status.success());
    let topo = read_edge_list(&stdout(&g)).unwrap();
    assert_eq!(topo.agents(), 5);
    fs::write(dir.path().join("net.txt"), stdout(&g)).unwrap();
    let text = "seed = 1\niterations = 50\n[data]\npath = \"train.svm\"\ndim = 3\n\
                [graph]\nagents = 5\npath = \"net.txt\"\n[hyper]\nmu_theta = 1.0\n";
    let cfg = write_config(dir.path(), "file.toml", text);
    let o = hippo(&["solve-oracle", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("x* = ["));
    let out = dir.path().join("out");
    assert!(hippo(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let meta = fs::read_to_string(out.join("traces/HIPPO-0_seed0.meta")).unwrap();
    assert!(meta.contains("data_source=libsvm:train.svm"));
    assert!(meta.contains(&format!("edges={}", topo.edge_count())));
}

#[test]
fn exit_codes_follow_the_failure_category() {
    let dir = tempfile::tempdir().unwrap();

    let bad = SMALL.replace("mu_theta = 2.0", "mu_theta = 2.0\nmu_z = 3.0\ntheorem_mode = true");
    let o = hippo(&["inspect-config", "--config", &write_config(dir.path(), "bad.toml", &bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hyper.mu_z"), "{}", stderr(&o));

    let typo = SMALL.replace("mu_theta", "mu_thetaa");
    let o = hippo(&["run", "--config", &write_config(dir.path(), "typo.toml", &typo)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mu_thetaa"));

    let missing = SMALL.replace("dim = 3", "dim = 3\npath = \"nope.svm\"");
    let o = hippo(&["run", "--config", &write_config(dir.path(), "missing.toml", &missing)]);
    assert_eq!(o.status.code(), Some(2));

    let malformed = dir.path().join("broken.svm");
    fs::write(&malformed, "1.0 1:0.5\n2.0 0:1.0\n").unwrap();
    let text = SMALL.replace("dim = 3", "dim = 3\npath = \"broken.svm\"");
    let o = hippo(&["run", "--config", &write_config(dir.path(), "broken.toml", &text)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = hippo(&["verify", "--config", &format!("{}/fig1.toml", configs())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("limited to 6 agents"));

    let diverging = SMALL.replace("mu_theta = 2.0", "mu_theta = 0.01\nepsilon = 0.0");
    let o = hippo(&[
        "run",
        "--config",
        &write_config(dir.path(), "div.toml", &diverging),
        "--out",
        dir.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn inspect_config_lists_sweep_points() {
    let o = hippo(&["inspect-config", "--config", &format!("{}/fig1.toml", configs())]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("sweep points: HIPPO-0_C1, HIPPO-20_C1, HIPPO-50_C1, HIPPO-100_C1"));
}
