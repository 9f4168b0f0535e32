//! End-to-end acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! The full-scale KdV run is multi-hour and is `#[ignore]`d; run it with
//! `cargo test --release -p pdex --test acceptance -- --ignored`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pdex::datasets::{read_dataset, write_dataset};
use pdex::experiment::{discover, DatasetSource, Equation, ExperimentConfig, GeneratorSpec};
use pdex::network::RationalNetwork;
use pdex::regression::RankedCandidate;
use pdex::verify;

struct Outcome {
    passed: bool,
    detail: String,
}

/// Writes past the test harness's output capture so the lines always show.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn report_line(id: u8, name: &str, clock: Instant, outcome: &Outcome) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    emit(&format!(
        "criterion {id:>2} [{status}] {name}: {} ({:.1}s)",
        outcome.detail,
        clock.elapsed().as_secs_f64()
    ));
}

fn suite(id: u8) -> Outcome {
    match verify::run_suite(id) {
        Ok(r) => Outcome {
            passed: r.passed,
            detail: r.detail,
        },
        Err(e) => Outcome {
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn top(cfg: &ExperimentConfig) -> Result<RankedCandidate, String> {
    let run = discover(cfg).map_err(|e| format!("discovery failed: {e}"))?;
    Ok(run.report.candidates[0].clone())
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn generator(cfg: &ExperimentConfig) -> &GeneratorSpec {
    match &cfg.dataset {
        DatasetSource::Generate(g) => g,
        DatasetSource::Path(p) => panic!("preset uses a file dataset {}", p.display()),
    }
}

fn heat_desk() -> Outcome {
    let cfg = ExperimentConfig::preset("heat-desk").unwrap();
    let g = generator(&cfg);
    assert_eq!((g.equation, g.ic.as_deref(), cfg.noise, cfg.n_data), (Equation::Heat, Some("sine"), 0.0, 5000));
    assert_eq!(cfg.u_widths, [2, 30, 30, 30, 1]);
    assert_eq!((cfg.train.adam_epochs, cfg.train.lbfgs_epochs), (1000, 0));
    assert_eq!((cfg.order(), cfg.degree), (2, 2));

    let want = -std::f64::consts::PI.powi(2) * 0.05;
    match top(&cfg) {
        Ok(c) => {
            let err = if c.terms == ["(U)"] { rel(c.coefficients[0], want) } else { f64::INFINITY };
            Outcome {
                passed: err < 0.15,
                detail: format!("top: {} (want ({want:.4})(U), rel err {:.1}%)", c.equation, 100.0 * err),
            }
        }
        Err(detail) => Outcome { passed: false, detail },
    }
}

fn burgers_desk() -> Outcome {
    let cfg = ExperimentConfig::preset("burgers-desk").unwrap();
    let g = generator(&cfg);
    assert_eq!((g.equation, g.ic.as_deref(), cfg.noise, cfg.n_data), (Equation::Burgers, Some("gaussian"), 0.1, 4000));
    assert_eq!(cfg.u_widths, [2, 50, 50, 50, 50, 50, 1]);
    assert_eq!((cfg.train.adam_epochs, cfg.train.lbfgs_epochs), (1500, 20));
    assert_eq!((cfg.order(), cfg.degree), (2, 2));

    match top(&cfg) {
        Ok(c) => {
            let support: BTreeSet<&str> = c.terms.iter().map(String::as_str).collect();
            let coeff = |name: &str| c.terms.iter().position(|t| t == name).map(|i| c.coefficients[i]);
            let passed = match (support == BTreeSet::from(["(D_x^2 U)", "(U) (D_x U)"]), coeff("(D_x^2 U)"), coeff("(U) (D_x U)")) {
                (true, Some(diff), Some(adv)) => diff > 0.0 && adv < 0.0 && rel(diff, 0.1) < 0.3 && rel(adv, -1.0) < 0.3,
                _ => false,
            };
            Outcome {
                passed,
                detail: format!("top: {} (want (0.1)(D_x^2 U) - (1.0)(U) (D_x U) within 30%)", c.equation),
            }
        }
        Err(detail) => Outcome { passed: false, detail },
    }
}

fn tiny_config(out: &Path) -> String {
    format!(
        r#"{{
  "dataset": {{ "generate": {{ "equation": "burgers", "ic": "gaussian", "nx": 64, "nt": 26 }} }},
  "noise": 0.1,
  "n_data": 500,
  "u_widths": [2, 12, 12, 1],
  "n_hidden": [12],
  "train": {{ "n_coll": 300, "adam_epochs": 25, "adam_lr": 0.005, "lbfgs_epochs": 3, "order": 2 }},
  "degree": 2,
  "n_extract": 1000,
  "seed": 17,
  "output_dir": {:?}
}}"#,
        out.to_str().unwrap()
    )
}

fn determinism_and_formats() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    let mut passed = true;

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let cfg_path = dir.path().join(format!("{run}.json"));
        std::fs::write(&cfg_path, tiny_config(&dir.path().join(run))).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_pdex"))
            .args(["discover", "--config", cfg_path.to_str().unwrap()])
            .output()
            .unwrap();
        passed &= out.status.success();
        reports.push(std::fs::read(dir.path().join(run).join("report.json")).unwrap_or_default());
    }
    let same = !reports[0].is_empty() && reports[0] == reports[1];
    passed &= same;
    notes.push(format!("report.json identical across runs: {same}"));

    let ds = read_dataset(&dir.path().join("a/dataset.pdrd")).unwrap();
    write_dataset(&ds, &dir.path().join("copy.pdrd")).unwrap();
    let back = read_dataset(&dir.path().join("copy.pdrd")).unwrap();
    let bits = |v: &mut dyn Iterator<Item = &f64>| v.map(|f| f.to_bits()).collect::<Vec<_>>();
    let ds_ok = bits(&mut ds.values.iter()) == bits(&mut back.values.iter())
        && bits(&mut ds.x.iter()) == bits(&mut back.x.iter())
        && bits(&mut ds.t.iter()) == bits(&mut back.t.iter())
        && ds.meta == back.meta;
    passed &= ds_ok;
    notes.push(format!("dataset round trip: {ds_ok}"));

    let u = RationalNetwork::load(&dir.path().join("a/u.json")).unwrap();
    u.save(&dir.path().join("u2.json")).unwrap();
    let u2 = RationalNetwork::load(&dir.path().join("u2.json")).unwrap();
    let ck_ok = bits(&mut u.params().iter()) == bits(&mut u2.params().iter())
        && u.input_normalization() == u2.input_normalization()
        && u.widths() == u2.widths();
    passed &= ck_ok;
    notes.push(format!("checkpoint round trip: {ck_ok}"));

    let out = Command::new(env!("CARGO_BIN_EXE_pdex")).arg("verify").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let green = out.status.success() && stdout.matches("[PASS]").count() == verify::SUITES.len();
    passed &= green;
    notes.push(format!("verify green: {green}"));
    Outcome {
        passed,
        detail: notes.join(", "),
    }
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    let mut check = |id: u8, name: &str, f: &dyn Fn() -> Outcome| {
        let clock = Instant::now();
        let outcome = f();
        report_line(id, name, clock, &outcome);
        if !outcome.passed {
            failed.push(id);
        }
    };
    check(1, "differentiation exactness", &|| suite(1));
    check(2, "parameter counts", &|| suite(2));
    check(3, "library counts", &|| suite(3));
    check(4, "elimination theorem", &|| suite(4));
    check(5, "planted recovery", &|| suite(5));
    check(6, "heat non-uniqueness (desk)", &heat_desk);
    check(7, "Burgers support (desk)", &burgers_desk);
    emit("criterion  8 [SKIP] KdV large library: multi-hour, run the ignored test `kdv_full_scale`");
    check(9, "noise calibration", &|| suite(9));
    check(10, "determinism and formats", &determinism_and_formats);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
#[ignore = "multi-hour full-scale KdV run"]
fn kdv_full_scale() {
    let clock = Instant::now();
    let cfg = ExperimentConfig::preset("kdv-full").unwrap();
    assert_eq!((cfg.noise, cfg.order(), cfg.degree), (0.1, 3, 5));
    let outcome = match top(&cfg) {
        Ok(c) => {
            let support: BTreeSet<&str> = c.terms.iter().map(String::as_str).collect();
            let coeff = |name: &str| c.terms.iter().position(|t| t == name).map(|i| c.coefficients[i]);
            let passed = match (support == BTreeSet::from(["(D_x^3 U)", "(U) (D_x U)"]), coeff("(D_x^3 U)"), coeff("(U) (D_x U)")) {
                (true, Some(disp), Some(adv)) => rel(disp, -0.993144) < 0.1 && rel(adv, -0.983580) < 0.1,
                _ => false,
            };
            Outcome {
                passed,
                detail: format!("top: {} (want -(0.993144)(D_x^3 U) - (0.983580)(U) (D_x U) within 10%)", c.equation),
            }
        }
        Err(detail) => Outcome { passed: false, detail },
    };
    report_line(8, "KdV large library", clock, &outcome);
    assert!(outcome.passed);
}
