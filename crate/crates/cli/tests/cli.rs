use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use evsched::mdp::{read_policy, read_values};
use evsched::policies::radical_policy;
use evsched::{SystemState, TransformedAction};
use evsched_cli::{cmd_audit, cmd_simulate, cmd_solve, ConfigSource};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn evsched(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_evsched")).args(args).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn simulate_writes_summary_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("zero_arrivals.cfg");
    let o = evsched(&["simulate", cfg.to_str().unwrap(), "--out-dir", out, "--horizon", "20000", "--override", "simulate.trace=true"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let head = r.headers().unwrap().clone();
    let row = r.records().next().unwrap().unwrap();
    let col = |name: &str| &row[head.iter().position(|h| h == name).unwrap()];
    assert_eq!(col("horizon"), "20000");
    assert_eq!(col("cost"), "0");
    assert_eq!(col("clamps"), "0");
    assert_eq!(csv_rows(&dir.path().join("trace.csv")).len(), 20_000);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let src = ConfigSource::from_path(&config("fig3_m8.cfg")).unwrap().with_overrides(&[
        "simulate.horizon=10000",
        "simulate.sweep_values=[2, 4, 6]",
        "simulate.curves=[\"model.e_max=100\", \"model.e_max=inf\"]",
    ]);
    let rows = cmd_simulate(&src, dir.path()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(csv_rows(&dir.path().join("sweep.csv")).len(), 6);
    assert_eq!(csv_rows(&dir.path().join("summary.csv")).len(), 6);
    assert_eq!(rows[3].curve, "model.e_max=inf");
    assert_eq!(rows[3].sweep_value, "2");
}

#[test]
fn invalid_config_lists_every_failing_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("tiny.cfg"))
        .unwrap()
        .replace("charge_points = 2", "charge_points = 0")
        .replace("alpha = 0.9", "alpha = 1.5");
    let path = dir.path().join("bad.cfg");
    fs::write(&path, text).unwrap();
    let o = evsched(&["simulate", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("charge_points") && err.contains("alpha"), "{err}");

    let unknown = fs::read_to_string(config("tiny.cfg")).unwrap().replace("[model]", "[model]\ncolour = 3");
    assert!(ConfigSource::from_str(&unknown).unwrap().resolve().is_err());
}

#[test]
fn solve_then_audit_is_clean_and_perturbation_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let src = ConfigSource::from_path(&config("tiny.cfg")).unwrap().with_overrides(&["simulate.horizon=10000"]);
    let solved = cmd_solve(&src, dir.path()).unwrap();
    assert!(solved.files.iter().any(|f| f.ends_with("policy.csv")));
    let (policy, values) = (dir.path().join("policy.csv"), dir.path().join("values.csv"));
    let report = cmd_audit(&src, &policy, &values, &dir.path().join("audit")).unwrap();
    assert_eq!(report.overflow_violations, 0);
    assert_eq!(report.sandwich_violations, 0);
    assert!(report.defined_checks > 0);

    let cfg = src.resolve().unwrap();
    let dims = cfg.model().unwrap().dims();
    let mut table = read_policy(&policy, dims).unwrap();
    let x = SystemState { q: 2, a: 0, e_b: 2, e_a: 1, p: 1 };
    let t = table.get(&x);
    table.set(&x, TransformedAction { u: t.u + 1, eta: 2 });
    let bad = dir.path().join("bad_policy.csv");
    evsched::mdp::write_policy(&bad, &table).unwrap();

    let o = evsched(&[
        "audit",
        config("tiny.cfg").to_str().unwrap(),
        "--policy",
        bad.to_str().unwrap(),
        "--values",
        values.to_str().unwrap(),
        "--out-dir",
        dir.path().join("audit_bad").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let flagged = csv_rows(&dir.path().join("audit_bad/audit.csv"))
        .iter()
        .filter(|r| &r[7] == "overflow" && &r[11] == "violated")
        .count();
    assert_eq!(flagged, 1);
}

#[test]
fn audit_without_queue_has_nothing_to_check() {
    let dir = tempfile::tempdir().unwrap();
    let src = ConfigSource::from_path(&config("zero_arrivals.cfg")).unwrap().with_overrides(&["model.q_max=0"]);
    cmd_solve(&src, dir.path()).unwrap();
    let r = cmd_audit(&src, &dir.path().join("policy.csv"), &dir.path().join("values.csv"), dir.path()).unwrap();
    assert_eq!((r.overflow_violations, r.sandwich_violations, r.defined_checks), (0, 0, 0));
}

#[test]
fn zero_arrivals_cost_nothing_at_an_empty_queue() {
    let dir = tempfile::tempdir().unwrap();
    let src = ConfigSource::from_path(&config("zero_arrivals.cfg")).unwrap();
    cmd_solve(&src, dir.path()).unwrap();
    let dims = src.resolve().unwrap().model().unwrap().dims();
    let v = read_values::<f64>(&dir.path().join("values.csv"), dims).unwrap();
    for x in (0..dims.n_states()).map(|i| dims.state(i)) {
        if x.q == 0 {
            assert_eq!(v.get(&x), 0.0);
        } else {
            assert!(v.get(&x) >= x.q as f64);
        }
    }
}

#[test]
fn free_energy_policy_serves_like_the_radical_policy() {
    let dir = tempfile::tempdir().unwrap();
    let src = ConfigSource::from_path(&config("tiny.cfg")).unwrap().with_overrides(&["model.beta=0", "simulate.horizon=10000"]);
    cmd_solve(&src, dir.path()).unwrap();
    let cfg = src.resolve().unwrap();
    let model = cfg.model().unwrap();
    let table = read_policy(&dir.path().join("policy.csv"), model.dims()).unwrap();
    let mut covered = 0;
    for x in model.states() {
        let k = x.q.min(model.params.charge_points);
        if x.e_b >= k * model.params.block_energy {
            covered += 1;
            assert_eq!(table.action(&x), radical_policy(&x, &model.params), "at {x}");
        }
    }
    assert!(covered > 0);
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let src = ConfigSource::from_path(&config("fig5.cfg")).unwrap().with_overrides(&["simulate.horizon=10000"]);
    cmd_simulate(&src, a.path()).unwrap();
    cmd_simulate(&src, b.path()).unwrap();
    for f in ["summary.csv", "sweep.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
}
