use diraclab_cli::catalog::{entries, list_experiments};
use diraclab_cli::config::{parse_config, parse_config_str, Experiment, ExperimentConfig};
use diraclab_cli::manifest::{RunManifest, RunStatus, MANIFEST_FILE};
use diraclab_cli::{execute, load, run, EXIT_CHECK, EXIT_CONFIG};
use std::fs;
use std::path::Path;

fn errors(text: &str) -> Vec<String> {
    parse_config_str(text).expect_err("config should be rejected").0
}

#[test]
fn empty_config_fills_defaults() {
    let cfg = parse_config_str("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let cfg = parse_config_str("experiment = \"verify-algebra\"\n").unwrap();
    assert_eq!(cfg.experiment, Some(Experiment::VerifyAlgebra));
    assert_eq!(cfg.algebra.samples, 100);
}

#[test]
fn unknown_keys_are_named() {
    let e = errors("gamma = 1.0\n");
    assert!(e.iter().any(|m| m.contains("gamma")), "{e:?}");
    let e = errors("[collide]\ngamma = 2\n[grid]\nwidth = 3\n");
    assert!(e.iter().any(|m| m.contains("collide.gamma")), "{e:?}");
    assert!(e.iter().any(|m| m.contains("grid.width")), "{e:?}");
}

#[test]
fn zero_coefficient_is_rejected() {
    let e = errors("[collide]\nscenario = \"explicit\"\nk = [1.0, 0.0, 1.0]\n");
    assert!(e.iter().any(|m| m.contains("k_j ≠ 0")), "{e:?}");
}

#[test]
fn non_admissible_direction_is_rejected() {
    // a + b + c = 1 but a² + b² + c² ≠ 1
    let e = errors("[collide]\nxi0 = [0.5, 0.25, 0.25]\n");
    assert!(!e.is_empty());
    let e = errors("[reconstruct]\ndirections = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8]]\n");
    assert!(!e.is_empty(), "{e:?}");
}

#[test]
fn all_errors_are_reported() {
    let e = errors("bogus = 1\n[grid]\nn = 7\n[solver]\nsteps = 0\n");
    assert!(e.len() >= 3, "{e:?}");
}

#[test]
fn model_names_resolve() {
    let e = errors("[model]\nname = \"no-such-model\"\n");
    assert!(e.iter().any(|m| m.contains("no-such-model")), "{e:?}");
    assert!(parse_config_str("[[compare.model_2]]\nname = \"soler\"\n[[compare.model_2]]\nname = \"quintic\"\n").is_ok());
}

#[test]
fn config_round_trips() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 17;
    cfg.experiment = Some(Experiment::Collide);
    cfg.collide.c_exponents = [2, 6];
    let text = cfg.to_toml();
    assert_eq!(parse_config_str(&text).unwrap(), cfg);
    assert_eq!(parse_config_str(&parse_config_str(&text).unwrap().to_toml()).unwrap().to_toml(), text);
}

#[test]
fn missing_file_is_a_config_error() {
    assert!(parse_config(Path::new("/nonexistent/run.toml")).is_err());
    assert_eq!(run(Experiment::VerifyAlgebra, Path::new("/nonexistent/run.toml"), None, None), EXIT_CONFIG);
}

#[test]
fn experiment_key_must_match_command() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    fs::write(&path, "experiment = \"collide\"\n").unwrap();
    assert!(load(Experiment::Expand, &path, None, None).is_err());
    let cfg = load(Experiment::Collide, &path, Some(dir.path().join("o")), Some(9)).unwrap();
    assert_eq!(cfg.seed, 9);
}

fn run_in(dir: &Path, exp: Experiment, text: &str) -> RunManifest {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    let out = dir.join("out");
    let cfg = load(exp, &path, Some(out.clone()), None).unwrap();
    let report = execute(exp, &cfg).unwrap();
    let m = RunManifest::read(&out).unwrap();
    assert_eq!(m, report.manifest);
    m
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_in(dir.path(), Experiment::VerifyAlgebra, "");
    assert_eq!(m.status, RunStatus::Passed);
    assert!(m.checks.iter().all(|c| c.passed));
    let out = dir.path().join("out");
    assert!(m.verify(&out).unwrap().is_empty());
    let mut listed: Vec<&str> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
    listed.push(MANIFEST_FILE);
    listed.sort_unstable();
    let mut on_disk: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    on_disk.sort_unstable();
    assert_eq!(listed, on_disk);
    fs::write(out.join("checks.csv"), "tampered\n").unwrap();
    assert_eq!(m.verify(&out).unwrap(), vec!["checks.csv".to_string()]);
    // the echo parses back to the config that ran
    let echo = parse_config(&out.join("config.toml")).unwrap();
    assert_eq!(serde_json::to_value(&echo).unwrap(), m.config);
}

#[test]
fn csv_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = "seed = 4\n[transport]\nrays = 12\n";
    let ma = run_in(a.path(), Experiment::Transport, text);
    let mb = run_in(b.path(), Experiment::Transport, text);
    // the config echo differs only in the output directory
    let data = |m: &RunManifest| m.artifacts.iter().filter(|a| a.file != "config.toml").cloned().collect::<Vec<_>>();
    assert_eq!(data(&ma).len(), 2);
    assert_eq!(data(&ma), data(&mb));
    let csv = fs::read_to_string(a.path().join("out/rays.csv")).unwrap();
    assert!(csv.starts_with("trial,model,"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 13);
    let other = run_in(b.path(), Experiment::Transport, "seed = 5\n[transport]\nrays = 12\n");
    assert_ne!(data(&ma), data(&other));
}

#[test]
fn failing_check_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    // an unattainable target for the collision slope
    fs::write(&path, "[collide]\nslope_target = 3.0\nc_exponents = [3, 5]\n").unwrap();
    let code = run(Experiment::Collide, &path, Some(dir.path().join("out")), None);
    assert_eq!(code, EXIT_CHECK);
    let m = RunManifest::read(&dir.path().join("out")).unwrap();
    assert_eq!(m.status, RunStatus::CheckFailure);
    assert!(m.checks.iter().any(|c| c.name == "collision slope" && !c.passed));
}

#[test]
fn compare_reports_two_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_in(dir.path(), Experiment::Compare, "");
    assert_eq!(m.status, RunStatus::Passed);
    let csv = fs::read_to_string(dir.path().join("out/compare.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",same") && rows[1].ends_with(",different"), "{csv}");
}

#[test]
fn catalog_has_six_stable_entries() {
    let e = entries();
    assert_eq!(e.len(), 6);
    let names: Vec<&str> = e.iter().map(|e| e.experiment.name()).collect();
    assert_eq!(names, ["verify-algebra", "expand", "transport", "collide", "reconstruct", "compare"]);
    assert!(e.iter().all(|e| !e.topic.is_empty()));
    let text = list_experiments();
    assert_eq!(text, list_experiments());
    for n in names {
        assert!(text.contains(n));
    }
    assert!(text.contains("slope_min = 3.7"));
}
