use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linbandit::harness::emit::{read_manifest, AGGREGATE_FILE, RUNS_DIR};

const TINY: &str = r#"
[experiment]
horizon = 25
replicates = 2
seed = 3

[environment]
kind = "sphere"
dim = 3
theta_norm = 2.0

[[policy]]
kind = "OFUL"

[[policy]]
kind = "Greedy_MR"
mu = 3.0
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linbandit"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("4 runs"));
    assert!(out.join(AGGREGATE_FILE).exists());
    assert_eq!(fs::read_dir(out.join(RUNS_DIR)).unwrap().count(), 4);

    let o = bin().args(["verify", "--traces"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("over 4 runs"));
}

#[test]
fn overrides_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--runs", "3", "--seed", "99", "--threads", "2", "--geometry-every", "5"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_manifest(&out).unwrap();
    assert_eq!((m.replicates, m.master_seed, m.runs.len()), (3, 99, 6));
    assert!(m.config.unwrap().contains("geometry_every = 5"));
    assert!(m.version.starts_with('v'));
}

#[test]
fn invalid_config_exits_one_and_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let bad = TINY.replace("horizon = 25", "horizon = 0").replace("mu = 3.0", "mu = -1.0");
    let cfg = write_config(dir.path(), &bad);
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("horizon") && err.contains("mu"), "{err}");

    let cfg = write_config(dir.path(), &TINY.replace("seed = 3", "seed = 3\nsed = 4"));
    let o = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));

    let cfg = write_config(dir.path(), TINY);
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .args(["--threads", "0"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_files_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("nope.cfg"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
    let o = bin().args(["verify", "--traces"]).arg(dir.path().join("absent")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn dataset_check_on_shipped_sample() {
    let o = bin().args(["dataset-check", "--csv"]).arg(configs_dir().join("sample_classes.csv")).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("classes 3") && text.contains("self-consistency: PASS"), "{text}");
}

#[test]
fn dataset_check_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "a,b,label\n1,2,0\n1,x,1\n").unwrap();
    let o = bin().args(["dataset-check", "--csv"]).arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn shipped_configs_validate() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("cfg") {
            continue;
        }
        let cfg = linbandit::harness::ExperimentConfig::load(&p).unwrap();
        cfg.validate().unwrap();
        cfg.build_environment().unwrap();
        seen += 1;
    }
    assert!(seen >= 5);
}
