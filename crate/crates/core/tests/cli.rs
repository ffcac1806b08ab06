//! Runs the `rloco` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

use rloco::cli::ingest_csv;
use rloco::Task;

fn rloco(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rloco"));
    c.args(args).env_remove("RLOCO_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    rloco(args).output().expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn out_dir(tmp: &tempfile::TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_theorem1_writes_manifest_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "v");
    let o = run(&["verify", "--suite", "theorem1", "--trials", "20", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "verify");
    assert_eq!(m["seed_source"], "default");
    assert!(m["timings"]["total"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["versions"]["rloco"], env!("CARGO_PKG_VERSION"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("theorem1.json")).unwrap()).unwrap();
    assert!(report["max_discrepancy"].as_f64().unwrap() < 1e-9);
}

#[test]
fn bench_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |o: &Path| {
        vec![
            "bench".to_string(),
            "--model".into(),
            "first-order".into(),
            "--runs".into(),
            "2".into(),
            "--n".into(),
            "300".into(),
            "--n-trees".into(),
            "5".into(),
            "--methods".into(),
            "LOCO,R-LOCO,R-LOCO_TC,L-SV".into(),
            "--seed".into(),
            "7".into(),
            "-o".into(),
            o.to_str().unwrap().to_string(),
        ]
    };
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    for d in [&a, &b] {
        let o = Command::new(env!("CARGO_BIN_EXE_rloco")).args(args(d)).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ta = std::fs::read(a.join("table.tsv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("table.tsv")).unwrap());
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("Method\tTP\tFP\tNI mean\tNI q0.1\tNI q0.95\n"));
    assert_eq!(text.lines().count(), 5);
    assert_eq!(manifest(&a)["seed"], 7);
}

#[test]
fn explain_reports_cluster_and_undecidable_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = out_dir(&tmp, "s");
    let o = run(&["synth", "--model", "first-order", "--n", "400", "--seed", "2", "-o", s(&synth)]);
    assert_eq!(o.status.code(), Some(0));
    let csv = synth.join("data.csv");
    assert_eq!(ingest_csv(&csv, "y", Task::Regression).unwrap().n(), 400);

    let out = out_dir(&tmp, "e");
    let o = run(&[
        "explain", "--method", "rloco", "--input", s(&csv), "--target", "y", "--point-index", "12", "--n-trees", "10",
        "-o", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let e: Value = serde_json::from_str(&std::fs::read_to_string(out.join("explanation.json")).unwrap()).unwrap();
    assert_eq!(e["point_index"], 12);
    assert!(e["cluster"].as_u64().unwrap() < e["n_clusters"].as_u64().unwrap());
    assert!(e["undecidable"].is_boolean());
    assert_eq!(e["scores"].as_array().unwrap().len(), 6);
    let shares: f64 = e["normalized"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-12);
    assert!(std::fs::read_to_string(out.join("explanation.svg")).unwrap().starts_with("<svg"));

    for method in ["loco", "lime", "lsv"] {
        let out = out_dir(&tmp, method);
        let o = run(&[
            "explain", "--method", method, "--input", s(&csv), "--point-index", "3", "--n-trees", "5", "-o", s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{method}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn ingest_failures_have_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [("1,2,3\n4,5,6\n", 3), ("a,b,y\n1,2,3\n4,NaN,6\n", 4), ("a,b,c\n1,2,3\n", 5)];
    for (i, (contents, code)) in cases.iter().enumerate() {
        let csv = tmp.path().join(format!("bad{i}.csv"));
        std::fs::write(&csv, contents).unwrap();
        let out = out_dir(&tmp, &format!("o{i}"));
        let o = run(&["explain", "--input", s(&csv), "--target", "y", "--point-index", "0", "-o", s(&out)]);
        assert_eq!(o.status.code(), Some(*code), "{contents:?}");
        let m = manifest(&out);
        assert_eq!(m["status"], "failed");
        assert_eq!(m["exit_code"], *code);
    }
    let err = String::from_utf8(
        run(&["explain", "--input", s(&tmp.path().join("bad1.csv")), "--point-index", "0", "-o", s(&out_dir(&tmp, "x"))])
            .stderr,
    )
    .unwrap();
    assert!(err.contains("line 3") && err.contains("'b'"), "{err}");
}

#[test]
fn invalid_configuration_exits_two_with_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["explain", "--input", "missing.csv", "-o", s(&out_dir(&tmp, "a"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--point-index") && err.contains("Usage"), "{err}");

    assert_eq!(run(&["bench", "--runs", "many"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[bench]\nrunz = 3\n").unwrap();
    assert_eq!(run(&["bench", "--config", s(&cfg)]).status.code(), Some(2));

    let o = rloco(&["verify", "--suite", "theorem1", "-o", s(&out_dir(&tmp, "b"))]).env("RLOCO_SEED", "x").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one_with_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("tiny.csv");
    std::fs::write(&csv, "a,b,y\n1,2,3\n4,5,6\n").unwrap();
    let out = out_dir(&tmp, "o");
    let o = run(&["explain", "--input", s(&csv), "--point-index", "0", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("rows"));
    assert!(m["timings"]["ingest"].is_number());
}

#[test]
fn seed_sources_and_config_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n[verify]\nsuite = \"lime\"\ntrials = 3\nn = 400\n").unwrap();

    let a = out_dir(&tmp, "a");
    assert_eq!(run(&["verify", "--config", s(&cfg), "-o", s(&a)]).status.code(), Some(0));
    let m = manifest(&a);
    assert_eq!((m["seed"].as_u64(), m["seed_source"].as_str()), (Some(5), Some("config")));
    assert_eq!(m["config"]["trials"], 3);
    assert!(a.join("lime.json").exists() && !a.join("theorem1.json").exists());

    let b = out_dir(&tmp, "b");
    let o = rloco(&["verify", "--config", s(&cfg), "--trials", "2", "-o", s(&b)]).env("RLOCO_SEED", "9").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&b);
    assert_eq!((m["seed"].as_u64(), m["seed_source"].as_str()), (Some(9), Some("env:RLOCO_SEED")));
    assert_eq!(m["config"]["trials"], 2);

    let c = out_dir(&tmp, "c");
    let o = rloco(&["verify", "--config", s(&cfg), "--seed", "1", "-o", s(&c)]).env("RLOCO_SEED", "9").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&c)["seed_source"], "flag");
}

#[test]
fn mask_eval_on_synthetic_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(&tmp, "m");
    let o = run(&["mask-eval", "--n", "400", "--n-trees", "10", "--methods", "rloco,loco,random", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(out.join("masking.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 3 * 7);
    for line in tsv.lines().filter(|l| l.split('\t').nth(1) == Some("0")) {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!((f[2], f[3]), ("0.000000", "0.000000"), "{line}");
    }
    assert!(out.join("masking.svg").exists());
    assert_eq!(run(&["mask-eval", "--k-grid", "0,9", "-o", s(&out)]).status.code(), Some(2));
}

#[test]
fn housing_sized_csv_ingests_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("housing.csv");
    let cols = ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup", "Latitude", "Longitude"];
    let mut text = format!("{},MedHouseVal\n", cols.join(","));
    for i in 0..20640u64 {
        let row: Vec<String> = (0..9u64).map(|j| format!("{:.6}", ((i * 31 + j * 17) % 1000) as f64 / 7.0)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&csv, &text).unwrap();
    let t = Instant::now();
    let d = ingest_csv(&csv, "MedHouseVal", Task::Regression).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let lines = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(d.n(), lines - 1);
    assert_eq!(d.p(), 8);
    assert!(elapsed < 2.0, "{elapsed} s");
}
