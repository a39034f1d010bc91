use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use optdes::glmm::BlockDesign;
use optdes::io::{self, DesignDocument};
use optdes::priors::EcdfSummary;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_optdes"));
    c.env_remove("OPTDES_THREADS");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(name: &str, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config(name)).arg("--out").arg(out).args(extra).output().unwrap()
}

fn read(dir: &Path, f: &str) -> String {
    fs::read_to_string(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&read(dir, "report.json")).unwrap()
}

#[test]
fn canonical_logistic_design() {
    let t = tempfile::tempdir().unwrap();
    let o = run("canonical_logistic.json", t.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = io::design_from_csv(&read(t.path(), "design.csv")).unwrap();
    assert_eq!(d.support_size(), 2);
    let mut xs: Vec<f64> = d.points().iter().map(|x| x[0]).collect();
    xs.sort_by(f64::total_cmp);
    assert!((xs[0] + 1.5434).abs() < 1e-4 && (xs[1] - 1.5434).abs() < 1e-4, "{xs:?}");
    assert!(d.weights().iter().all(|w| (w - 0.5).abs() < 1e-6));
    assert_eq!(report(t.path())["equivalence"]["pass"], Value::Bool(true));
    let sens = read(t.path(), "sensitivity.csv");
    assert!(sens.starts_with("x_1,psi\n"));
    assert!(sens.lines().count() > 100);
}

#[test]
fn poisson_minimal_support_design() {
    let t = tempfile::tempdir().unwrap();
    let o = run("poisson_minimal.json", t.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = read(t.path(), "design.csv");
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert_eq!(report(t.path())["equivalence"]["pass"], Value::Bool(true));
}

#[test]
fn written_files_round_trip_byte_for_byte() {
    let t = tempfile::tempdir().unwrap();
    for name in ["canonical_logistic.json", "bayes_logistic_exact.json", "poisson_effdist.json", "block_poisson.json"] {
        let dir = t.path().join(name);
        assert_eq!(run(name, &dir, &[]).status.code(), Some(0), "{name}");
        for (f, bytes) in files(&dir) {
            let text = String::from_utf8(bytes).unwrap();
            let again = match f.as_str() {
                "design.csv" => io::design_to_csv(&io::design_from_csv(&text).unwrap()),
                "design.json" => {
                    let doc: DesignDocument = io::from_json(&text, "design").unwrap();
                    doc.design().unwrap();
                    io::to_json(&doc)
                }
                "exact.csv" => io::exact_to_csv(&io::exact_from_csv(&text).unwrap()),
                "block.csv" => io::block_to_csv(&io::block_from_csv(&text).unwrap()),
                "block.json" => io::to_json(&io::from_json::<BlockDesign>(&text, "block design").unwrap()),
                "ecdf.json" => io::to_json(&io::from_json::<EcdfSummary>(&text, "ecdf").unwrap()),
                "ecdf.csv" => {
                    let rows = io::ecdf_from_csv(&text).unwrap();
                    assert_eq!(rows.len(), 200);
                    let mut s = String::from(text.lines().next().unwrap());
                    s.push('\n');
                    for (i, (theta, e)) in rows.iter().enumerate() {
                        let cells: Vec<String> = theta.iter().chain([e]).map(|v| io::fmt_f64(*v)).collect();
                        s.push_str(&format!("{i},{}\n", cells.join(",")));
                    }
                    s
                }
                "sensitivity.csv" => {
                    let mut lines = text.lines();
                    let mut s = format!("{}\n", lines.next().unwrap());
                    for l in lines {
                        let cells: Vec<String> = l.split(',').map(|c| io::fmt_f64(c.parse().unwrap())).collect();
                        s.push_str(&format!("{}\n", cells.join(",")));
                    }
                    s
                }
                _ => {
                    let v: Value = serde_json::from_str(&text).unwrap();
                    io::to_json(&v)
                }
            };
            assert_eq!(again, text, "{name}/{f}");
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    for name in ["bayes_logistic_exact.json", "poisson_effdist.json", "block_poisson.json", "canonical_logistic.json"] {
        let a = t.path().join(format!("{name}-a"));
        let b = t.path().join(format!("{name}-b"));
        let c = t.path().join(format!("{name}-c"));
        assert_eq!(run(name, &a, &["--threads", "1"]).status.code(), Some(0));
        assert_eq!(run(name, &b, &["--threads", "4"]).status.code(), Some(0));
        let o = bin().arg("run").arg(config(name)).arg("--out").arg(&c).env("OPTDES_THREADS", "3").output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(files(&a), files(&b), "{name}");
        assert_eq!(files(&a), files(&c), "{name}");
    }
}

#[test]
fn seed_override_changes_random_output() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    run("poisson_effdist.json", &a, &[]);
    run("poisson_effdist.json", &b, &["--set", "seed=4"]);
    assert_ne!(read(&a, "ecdf.csv"), read(&b, "ecdf.csv"));
}

#[test]
fn weights_not_summing_to_one_exit_2() {
    let t = tempfile::tempdir().unwrap();
    let o = run("check_b1.json", t.path(), &["--set", "task.design.weights=[0.2,0.2,0.3,0.2]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sum to 1"));
}

#[test]
fn failing_precondition_exits_4_with_report() {
    let t = tempfile::tempdir().unwrap();
    let o = run("gamma_ofaat.json", t.path(), &["--set", "prior.theta=[1,0.5,0.5]"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(report(t.path())["condition"]["violations"].as_array().is_some_and(|v| !v.is_empty()));
}

#[test]
fn config_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    for extra in [["--set", "bogus=1"], ["--set", "task.grid.seed=1"], ["--set", "prior.theta=[0,1,2]"]] {
        let o = run("canonical_logistic.json", t.path(), &extra);
        assert_eq!(o.status.code(), Some(2), "{extra:?}");
    }
    let o = bin().args(["run", "/nonexistent.json"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_tables() {
    let t = tempfile::tempdir().unwrap();
    let o = bin().args(["reproduce", "nope", "--out"]).arg(t.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    for id in ["logistic-1d-efficiency", "gamma-first-order", "block-poisson", "logistic-unbounded"] {
        let o = bin().args(["reproduce", id, "--out"]).arg(t.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{id}: {}", String::from_utf8_lossy(&o.stdout));
        let csv = read(t.path(), &format!("{id}.csv"));
        assert!(csv.starts_with("label,computed,stored,diff,check,pass\n"));
        assert!(!csv.contains(",false\n"));
        let v: Value = serde_json::from_str(&read(t.path(), &format!("{id}.json"))).unwrap();
        assert_eq!(v["pass"], Value::Bool(true));
    }
    let csv = read(t.path(), "logistic-1d-efficiency.csv");
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn schema_matches_accepted_configs() {
    let o = bin().arg("schema").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let schema: Value = serde_json::from_slice(&o.stdout).unwrap();
    let top: BTreeSet<&str> = schema["properties"].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(top, BTreeSet::from(["model", "prior", "sample", "seed", "task", "output"]));
    let kinds: Vec<&str> = schema["$defs"]["task"]["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["properties"]["kind"]["const"].as_str().unwrap())
        .collect();
    assert_eq!(
        kinds,
        ["optimize", "optimize-exact", "check", "closed-form", "efficiency", "effdist", "block-optimize", "block-check"]
    );
    let mut seen = BTreeSet::new();
    for e in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")).unwrap() {
        let v: Value = serde_json::from_str(&fs::read_to_string(e.unwrap().path()).unwrap()).unwrap();
        let kind = v["task"]["kind"].as_str().unwrap().to_string();
        assert!(kinds.contains(&kind.as_str()));
        seen.insert(kind);
    }
    assert!(seen.len() >= 5);
}

#[test]
fn version_and_list() {
    let o = bin().arg("version").output().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("optdes "));
    let o = bin().args(["reproduce", "--list"]).output().unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 10);
}
