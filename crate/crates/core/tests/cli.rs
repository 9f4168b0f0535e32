use std::path::Path;
use std::process::{Command, Output};

use pdex::datasets::{read_dataset, read_samples_csv};

fn pdex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdex"))
        .args(args)
        .env_remove("PDEX_THREADS")
        .output()
        .expect("spawn pdex")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small heat discovery that runs in well under a second.
fn tiny_config(dir: &Path) -> String {
    format!(
        r#"{{
  "dataset": {{ "generate": {{ "equation": "heat", "ic": "sine", "nx": 41, "nt": 41 }} }},
  "noise": 0.05,
  "n_data": 400,
  "u_widths": [2, 10, 10, 1],
  "n_hidden": [10],
  "train": {{ "n_coll": 200, "adam_epochs": 20, "adam_lr": 0.01, "lbfgs_epochs": 3, "order": 2 }},
  "degree": 2,
  "n_extract": 500,
  "seed": 3,
  "output_dir": {:?}
}}"#,
        p(dir)
    )
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&pdex(&[])), 2);
    assert_eq!(code(&pdex(&["frobnicate"])), 2);
    assert_eq!(code(&pdex(&["generate", "wave", "--out", "/tmp/never.pdrd"])), 2);
    assert_eq!(code(&pdex(&["discover"])), 2);
    let out = pdex(&["discover", "--preset", "no-such-preset"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("heat-desk"), "{}", stderr(&out));
    assert_eq!(code(&pdex(&["verify", "--suite", "7"])), 2);
}

#[test]
fn missing_dataset_path_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let text = tiny_config(dir.path()).replace(
        r#"{ "generate": { "equation": "heat", "ic": "sine", "nx": 41, "nt": 41 } }"#,
        r#"{ "path": "/nonexistent/data.pdrd" }"#,
    );
    std::fs::write(&cfg, text).unwrap();
    let out = pdex(&["discover", "--config", p(&cfg)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pdrd");
    let out = pdex(&["corrupt", "--input", p(&missing), "--noise", "0.1", "--out", p(&dir.path().join("o.pdrd"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let junk = dir.path().join("junk.pdrd");
    std::fs::write(&junk, b"PDRD1 but truncated").unwrap();
    let out = pdex(&["subsample", "--input", p(&junk), "-n", "5", "--out", p(&dir.path().join("s.csv"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn thread_variable_is_validated() {
    let run = |value: &str| {
        Command::new(env!("CARGO_BIN_EXE_pdex"))
            .args(["verify", "--suite", "2"])
            .env("PDEX_THREADS", value)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("zero")), 2);
    assert_eq!(code(&run("0")), 2);
    let ok = run("2");
    assert_eq!(code(&ok), 0);
    assert!(String::from_utf8_lossy(&ok.stdout).contains("[PASS] suite 2"));
}

#[test]
fn generate_corrupt_subsample_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("heat.pdrd");
    let noisy = dir.path().join("noisy.pdrd");
    let csv = dir.path().join("samples.csv");
    let out = pdex(&["generate", "heat", "--alpha", "0.05", "--ic", "sine", "--nx", "51", "--nt", "21", "--out", p(&clean)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ds = read_dataset(&clean).unwrap();
    assert_eq!((ds.t.len(), ds.x.len()), (21, 51));
    assert_eq!(ds.meta.equation, "heat");

    assert_eq!(code(&pdex(&["corrupt", "-i", p(&clean), "--noise", "0.5", "--seed", "4", "-o", p(&noisy)])), 0);
    let nd = read_dataset(&noisy).unwrap();
    assert_eq!(nd.meta.noise_level, 0.5);
    assert_ne!(nd.values, ds.values);

    assert_eq!(code(&pdex(&["subsample", "-i", p(&noisy), "-n", "100", "--seed", "1", "-o", p(&csv)])), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x,u\n"));
    assert_eq!(read_samples_csv(&csv).unwrap().len(), 100);

    let out = pdex(&["subsample", "-i", p(&noisy), "-n", "99999", "-o", p(&csv)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn burgers_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.pdrd");
    let out = pdex(&["generate", "burgers", "--nu", "0.1", "--ic", "sine", "--out", p(&path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ds = read_dataset(&path).unwrap();
    assert_eq!((ds.x.len(), ds.t.len()), (256, 201));
}

fn discover_into(dir: &Path) -> Output {
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, tiny_config(&dir.join("run"))).unwrap();
    pdex(&["discover", "--config", p(&cfg)])
}

#[test]
fn discover_is_deterministic_and_writes_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = discover_into(a.path());
    assert_eq!(code(&out_a), 0, "{}", stderr(&out_a));
    let out_b = discover_into(b.path());
    assert_eq!(code(&out_b), 0);
    assert_eq!(out_a.stdout, out_b.stdout);
    assert!(String::from_utf8_lossy(&out_a.stdout).contains("1. D_t U = "));

    let run = a.path().join("run");
    for f in [
        "config.json",
        "dataset.pdrd",
        "dataset.pdrd.json",
        "samples.csv",
        "train_log.ndjson",
        "u.json",
        "n.json",
        "report.json",
        "report.txt",
        "run_info.json",
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let report = |d: &Path| std::fs::read(d.join("run/report.json")).unwrap();
    assert_eq!(report(a.path()), report(b.path()));
    let log = std::fs::read_to_string(run.join("train_log.ndjson")).unwrap();
    // 20 Adam epochs plus at most 3 L-BFGS iterations.
    assert!((21..=23).contains(&log.lines().count()));
}

#[test]
fn report_matches_json_schema() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&discover_into(dir.path())), 0);
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();

    let mut schemas = boon::Schemas::new();
    let mut compiler = boon::Compiler::new();
    compiler.add_resource("report.schema.json", schema).unwrap();
    let id = compiler.compile("report.schema.json", &mut schemas).unwrap();
    if let Err(e) = schemas.validate(&report, id) {
        panic!("report.json violates schema: {e:#}");
    }

    let mut broken = report.clone();
    broken["candidates"][0]["ratio_percent"] = serde_json::json!(-1.0);
    assert!(schemas.validate(&broken, id).is_err());

    // Names in the text report are exactly the library's term names.
    let text = std::fs::read_to_string(dir.path().join("run/report.txt")).unwrap();
    for term in report["candidates"][0]["terms"].as_array().unwrap() {
        assert!(text.contains(term.as_str().unwrap()));
    }
}

#[test]
fn export_plots_writes_consistent_grids() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&discover_into(dir.path())), 0);
    let run = dir.path().join("run");
    let plots = dir.path().join("plots");
    let out = pdex(&["export-plots", "--run", p(&run), "--out", p(&plots)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let read = |name: &str| -> Vec<[f64; 3]> {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,value"));
        lines
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect()
    };
    let data = read("noisy_data.csv");
    let learned = read("learned_u.csv");
    let err = read("abs_error.csv");
    let res = read("pde_residual.csv");
    assert_eq!(data.len(), 41 * 41);
    for grid in [&learned, &err, &res] {
        assert_eq!(grid.len(), data.len());
    }
    let ds = read_dataset(&run.join("dataset.pdrd")).unwrap();
    for k in 0..data.len() {
        assert_eq!(data[k][2], ds.values[(k / 41, k % 41)]);
        assert!((err[k][2] - (learned[k][2] - data[k][2]).abs()).abs() <= 1e-12);
        assert!(res[k][2] >= 0.0);
        assert_eq!((data[k][0], data[k][1]), (res[k][0], res[k][1]));
    }

    // Not a run directory: bad argument. Run with a missing checkpoint: runtime failure.
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&pdex(&["export-plots", "--run", p(empty.path())])), 2);
    std::fs::remove_file(run.join("u.json")).unwrap();
    assert_eq!(code(&pdex(&["export-plots", "--run", p(&run)])), 1);
}
