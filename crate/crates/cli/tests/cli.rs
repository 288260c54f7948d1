use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eigensep"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_NET: [&str; 6] = ["--set", "batch_size=256", "--set", "hidden=64,64", "--set", "k_nn=15"];

#[test]
fn gen_writes_requested_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--kind", "moon", "--n", "3000", "--ambient", "10", "--seed", "7", "-o", "moon.csv"]);
    let text = std::fs::read_to_string(dir.path().join("moon.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 10);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3000);
    assert!(rows.iter().all(|r| r.split(',').count() == 10));
    let manifest = json(dir.path().join("moon.csv.manifest.json"));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn moon_pipeline_recovers_both_eigenvectors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[
        "gen", "--kind", "moon", "--n", "1200", "--ambient", "10", "--seed", "3", "-o", "train.csv",
        "--test-frac", "0.2", "--test-out", "test.csv",
    ]);
    let mut train = vec!["train", "--data", "train.csv", "--seed", "3", "-o", "trained.json"];
    train.extend(SMALL_NET);
    ok(d, &train);
    ok(d, &["separate", "--model", "trained.json", "--data", "train.csv", "-o", "model.json"]);
    ok(d, &["eval", "--model", "model.json", "--train", "train.csv", "--test", "test.csv", "-o", "eval.json"]);
    let report = json(d.join("eval.json"));
    for key in ["sin2_per_vector", "sin2_per_vector_test"] {
        let v = report[key].as_array().unwrap();
        assert_eq!(v.len(), 2);
        for s in v {
            assert!(s.as_f64().unwrap() < 0.1, "{key}: {report}");
        }
    }
    assert!(report["grassmann"].as_f64().unwrap() < 0.05);
    for key in ["gs", "pearson_eigs"] {
        assert!(report[key].is_number(), "{key} missing: {report}");
    }
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--kind", "two_circles", "--n", "300", "--ambient", "3", "--seed", "1", "-o", "x.csv"]);
    let mut outputs: Vec<Vec<Vec<u8>>> = Vec::new();
    for round in 0..2 {
        let tag = |s: &str| format!("{round}_{s}");
        let (trained, model, emb, nm, nemb) =
            (tag("trained.json"), tag("model.json"), tag("emb.csv"), tag("numap.json"), tag("nemb.csv"));
        let mut train = vec!["train", "--data", "x.csv", "--seed", "5", "-o", &trained, "--set", "max_epochs=15"];
        train.extend(SMALL_NET);
        ok(d, &train);
        ok(d, &["separate", "--model", &trained, "--data", "x.csv", "-o", &model]);
        ok(d, &["embed", "--model", &model, "--data", "x.csv", "-o", &emb]);
        let mut numap = vec![
            "numap", "train", "--data", "x.csv", "--seed", "5", "-o", &nm, "--set", "numap_epochs=10",
            "--set", "numap_hidden=16,16", "--set", "max_epochs=10", "--set", "numap_se_k=3",
        ];
        numap.extend(SMALL_NET);
        ok(d, &numap);
        ok(d, &["numap", "embed", "--model", &nm, "--data", "x.csv", "-o", &nemb]);
        outputs.push(
            [trained, model, emb, nm, nemb]
                .iter()
                .map(|f| std::fs::read(d.join(f)).unwrap())
                .collect(),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
    // The UMAP embedding carries the labels and uses x,y columns.
    let head = String::from_utf8(outputs[0][4].clone()).unwrap();
    assert!(head.starts_with("x,y,label\n"), "{}", &head[..20]);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--kind", "line", "--n", "200", "--seed", "0", "-o", "line.csv"]);

    // Usage: missing mandatory seed, unknown subcommand, unknown config key.
    assert_eq!(run(d, &["train", "--data", "line.csv", "-o", "m.json"]).status.code(), Some(1));
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(1));
    let bad_key = run(d, &["train", "--data", "line.csv", "--seed", "0", "--set", "nope=1", "-o", "m.json"]);
    assert_eq!(bad_key.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_key.stderr).contains("nope"));
    assert_eq!(run(d, &["bench", "-o", "b.json"]).status.code(), Some(1));

    // Data: missing file, malformed CSV.
    assert_eq!(run(d, &["train", "--data", "missing.csv", "--seed", "0", "-o", "m.json"]).status.code(), Some(2));
    std::fs::write(d.join("bad.csv"), "x0,x1\n1.0,2.0\n3.0,oops\n").unwrap();
    let bad = run(d, &["train", "--data", "bad.csv", "--seed", "0", "-o", "m.json"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("row 3"));

    // Numerical: identical points give a rank-deficient network output.
    let same: String = std::iter::once("x0,x1\n".to_string())
        .chain((0..60).map(|_| "0.5,0.5\n".to_string()))
        .collect();
    std::fs::write(d.join("same.csv"), same).unwrap();
    let num = run(d, &["train", "--data", "same.csv", "--seed", "0", "--set", "hidden=8", "--set", "k_nn=5", "-o", "m.json"]);
    assert_eq!(num.status.code(), Some(3), "{}", String::from_utf8_lossy(&num.stderr));
}

#[test]
fn config_file_is_applied_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--kind", "moon", "--n", "300", "--ambient", "4", "--seed", "2", "-o", "x.csv"]);
    std::fs::write(d.join("run.cfg"), "# small network\nhidden = 16\nbatch_size = 100\nk_nn = 8\nmax_epochs = 5\n").unwrap();
    ok(d, &["train", "--data", "x.csv", "--seed", "4", "--config", "run.cfg", "--set", "k=3", "-o", "t.json"]);
    let manifest = json(d.join("t.json.manifest.json"));
    assert_eq!(manifest["config"]["hidden"], "16");
    assert_eq!(manifest["config"]["k"], "3");
    assert_eq!(manifest["config"]["seed"], "4");
    assert!(manifest["timings"]["train"].as_f64().unwrap() > 0.0);
    let trained = json(d.join("t.json"));
    assert_eq!(trained["arch"]["layer_sizes"], serde_json::json!([4, 16, 4]));
}

#[test]
fn apps_write_fiedler_and_diffusion_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--kind", "line", "--n", "150", "--seed", "1", "-o", "line.csv"]);
    let out = ok(d, &["apps", "fiedler", "--data", "line.csv", "--set", "k_nn=10", "-o", "f.csv"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fiedler value"));
    let manifest = json(d.join("f.csv.manifest.json"));
    assert!(manifest["results"]["fiedler_value"].as_f64().unwrap() > 0.0);
    let f = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert!(f.starts_with("fiedler,label\n"));
    assert_eq!(f.lines().count(), 151);

    ok(d, &["apps", "diffuse", "--data", "line.csv", "--set", "k_nn=10", "--t", "0", "--k", "3", "-o", "d0.csv"]);
    ok(d, &["apps", "diffuse", "--data", "line.csv", "--set", "k_nn=10", "--t", "4", "--k", "3", "-o", "d4.csv"]);
    let read = |name: &str| -> Vec<Vec<f64>> {
        std::fs::read_to_string(d.join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(3).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (d0, d4) = (read("d0.csv"), read("d4.csv"));
    let norm = |m: &Vec<Vec<f64>>, j: usize| m.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
    for j in 0..3 {
        assert!(norm(&d4, j) <= norm(&d0, j) + 1e-12);
    }
}

#[test]
fn bench_reports_every_size() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &[
        "bench", "--seed", "0", "--sizes", "200,400", "--repeats", "2", "--epochs", "1", "--set", "hidden=8",
        "--set", "batch_size=64", "--set", "k_nn=5", "-o", "bench.json",
    ]);
    let b = json(d.join("bench.json"));
    let points = b["points"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[1]["n"], 400);
    assert_eq!(points[0]["seeds"], serde_json::json!([0, 1]));
    assert!(b["ratio_largest_to_smallest"].as_f64().unwrap() > 0.0);
}
