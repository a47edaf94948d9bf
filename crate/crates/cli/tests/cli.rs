use std::path::Path;
use std::process::{Command, Output};

use csranker_cli::manifest::sha256_hex;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csranker"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> String {
    let out = dir.join("synth");
    let o = run(&[
        "synth",
        "--out",
        s(&out),
        "--set",
        "synth.n_target=200",
        "--set",
        "synth.n_decoy=200",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("dataset.tsv").display().to_string()
}

#[test]
fn manifest_digests_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("train");
    assert_eq!(
        code(&run(&[
            "train",
            "--data",
            &data,
            "--out",
            s(&out),
            "--seed",
            "3"
        ])),
        0
    );
    let m = manifest(&out);
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["converged"], true);
    assert!(m["kkt_violation"].as_f64().unwrap() <= 1e-3);
    for key in ["load", "train", "total"] {
        assert!(m["timings"][key].as_f64().unwrap() >= 0.0);
    }
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 1);
    for o in outputs {
        let bytes = std::fs::read(out.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        assert_eq!(o["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nseed = 5\nC1 = 3\nonline.mu_safe = 0.1\n").unwrap();
    let out = tmp.path().join("s");
    let o = run(&[
        "synth",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--out",
        s(&out),
        "--set",
        "synth.n_target=50",
    ]);
    assert_eq!(code(&o), 0);
    let m = manifest(&out);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["C1"], "3");
    assert_eq!(m["config"]["synth.n_target"], "50");
    assert_eq!(m["ignored_keys"][0], "online.mu_safe");
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "C1 = 2\nnot_a_key = 1\n").unwrap();
    let o = run(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2: unknown key"));
    assert_eq!(
        code(&run(&["train", "--set", "C1=0.5", "--set", "C2=1"])),
        2
    );
    assert_eq!(code(&run(&["train", "--fdr", "0.05,abc"])), 2);
    assert_eq!(code(&run(&["train"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["train", "--data", "/nonexistent.tsv"])), 3);
    let bad = tmp.path().join("bad.tsv");
    std::fs::write(&bad, "id\tlabel\nx\tmaybe\n").unwrap();
    assert_eq!(
        code(&run(&[
            "train",
            "--data",
            s(&bad),
            "--out",
            s(&tmp.path().join("o"))
        ])),
        3
    );
}

#[test]
fn unconverged_training_exits_4_with_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("t");
    let o = run(&[
        "train",
        "--data",
        &data,
        "--out",
        s(&out),
        "--solver",
        "batch",
        "--set",
        "batch.max_outer=1",
        "--set",
        "batch.max_inner_sweeps=1",
    ]);
    assert_eq!(code(&o), 4);
    let m = manifest(&out);
    assert_eq!(m["converged"], false);
    assert!(!m["warnings"].as_array().unwrap().is_empty());
    assert!(out.join("model.tsv").exists());
}

#[test]
fn full_pipeline_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let t = tmp.path().join("t");
    let sc = tmp.path().join("sc");
    let ev = tmp.path().join("ev");
    assert_eq!(code(&run(&["train", "--data", &data, "--out", s(&t)])), 0);
    let model = t.join("model.tsv");
    assert_eq!(
        code(&run(&[
            "score",
            "--data",
            &data,
            "--model",
            s(&model),
            "--out",
            s(&sc)
        ])),
        0
    );
    let scores = sc.join("scores.tsv");
    let o = run(&[
        "eval",
        "--scores",
        s(&scores),
        "--scores",
        s(&scores),
        "--fdr",
        "0,0.05",
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0);
    let report = std::fs::read_to_string(ev.join("fdr_report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    assert!(report.starts_with("target_fdr\tthreshold\taccepted_targets"));
    let overlap = std::fs::read_to_string(ev.join("overlap.tsv")).unwrap();
    let row: Vec<&str> = overlap.lines().nth(2).unwrap().split('\t').collect();
    assert_eq!(row[1], row[4], "a file overlaps itself completely");
    let m = manifest(&ev);
    let files: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["file"].as_str().unwrap())
        .collect();
    assert_eq!(
        files,
        ["fdr_report.tsv", "roc.tsv", "roc_oracle.tsv", "overlap.tsv"]
    );
}

#[test]
fn bench_keeps_wall_times_out_of_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path());
    let out = tmp.path().join("b");
    let o = run(&[
        "bench",
        "--data",
        &data,
        "--out",
        s(&out),
        "--set",
        "bench.trials=1",
        "--set",
        "bench.solvers=online",
    ]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out.join("stability_online.tsv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "trial\tseed\taccepted_total");
    assert_eq!(text.lines().count(), 2);
    assert!(manifest(&out)["timings"]["online_train_total"]
        .as_f64()
        .is_some());
}
