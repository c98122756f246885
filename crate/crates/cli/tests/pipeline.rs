use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flagtune_cli::commands::{self, DATASET, SELECTED_FLAGS, TRIAL_LOG};
use flagtune_cli::Project;
use flagtune_core::tuners::Algorithm;
use serde_json::Value;

/// Ten continuous flags; the target depends on the first three, with
/// centers at the cube faces so each has a strong linear trend.
fn write_project(dir: &Path, extra: &str) -> PathBuf {
    let mut s = String::from("seed = 3\nout_dir = \"out\"\n\n");
    for i in 0..10 {
        s.push_str(&format!(
            "[[flags.flag]]\nname = \"F{i}\"\nkind = \"continuous\"\nrange = [0.0, 10.0]\ndefault = 5.0\n\n"
        ));
    }
    s.push_str(
        "[target]\nkind = \"virtual\"\nnoise_sd = 0.0\nbase = 1.0\nrelevant = [0, 1, 2]\ncenters = [0.0, 1.0, 0.0]\nweights = [2.0, 1.5, 1.0]\n\n",
    );
    s.push_str("[objective]\nmetric = \"time\"\n\n[al]\ncandidates = 200\n\n[tune]\nbudget = 6\ninit_size = 4\n\n");
    s.push_str(extra);
    let p = dir.join("project.toml");
    std::fs::write(&p, s).unwrap();
    p
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flagtune")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_ok(args: &[&str]) {
    let o = cli(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

#[test]
fn dataset_rows_match_loop_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let p = Project::load(&write_project(dir.path(), "")).unwrap();
    let out = commands::datagen(&p).unwrap();
    let r = &out.report;
    let acquired: usize = r.rounds.iter().map(|x| x.batch.len()).sum();
    assert_eq!(out.rows, r.seed_size + r.test_size + acquired);
    let text = std::fs::read_to_string(&out.dataset).unwrap();
    assert_eq!(text.lines().count(), out.rows + 1);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 11);
    assert_eq!(header[0], "F0");
    assert_eq!(header[10], "time");
    let log = std::fs::read_to_string(p.out_dir.join(TRIAL_LOG)).unwrap();
    assert_eq!(log.lines().count(), out.trials);
}

#[test]
fn datagen_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let proj = write_project(dir.path(), "");
    let proj = proj.to_str().unwrap();
    run_ok(&["datagen", "--project", proj]);
    let out = dir.path().join("out");
    let first = std::fs::read(out.join(DATASET)).unwrap();
    let first_log = std::fs::read(out.join(TRIAL_LOG)).unwrap();
    run_ok(&["datagen", "--project", proj]);
    assert_eq!(first, std::fs::read(out.join(DATASET)).unwrap());
    assert_eq!(first_log, std::fs::read(out.join(TRIAL_LOG)).unwrap());

    let other = dir.path().join("other");
    run_ok(&["datagen", "--project", proj, "--seed", "4", "--out", other.to_str().unwrap()]);
    assert_ne!(first, std::fs::read(other.join(DATASET)).unwrap());
}

#[test]
fn missing_target_binary_leaves_no_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let text = "seed = 1\n[[flags.flag]]\nname = \"A\"\nkind = \"boolean\"\ndefault = true\n\
                [target]\nkind = \"process\"\ncommand = [\"./no-such-benchmark\", \"{flags}\"]\nprobes = [\"time\"]\n\
                [objective]\nmetric = \"time\"\n";
    let proj = dir.path().join("p.toml");
    std::fs::write(&proj, text).unwrap();
    let o = cli(&["datagen", "--project", proj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error[target]: target not found"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!dir.path().join("out").join(DATASET).exists());
}

#[test]
fn selection_covers_true_support() {
    let dir = tempfile::tempdir().unwrap();
    let p = Project::load(&write_project(dir.path(), "")).unwrap();
    commands::datagen(&p).unwrap();
    let r = commands::select(&p).unwrap();
    for f in ["F0", "F1", "F2"] {
        assert!(r.selected.iter().any(|s| s == f), "{f} missing from {:?}", r.selected);
    }
    let names: BTreeSet<String> = p.space.names().into_iter().collect();
    assert!(r.selected.iter().all(|s| names.contains(s)));
    let listed = std::fs::read_to_string(p.out_dir.join(SELECTED_FLAGS)).unwrap();
    assert_eq!(listed.lines().collect::<Vec<_>>(), r.selected);
}

#[test]
fn selection_with_grid_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p = Project::load(&write_project(dir.path(), "[selection]\ngrid = [0.001, 0.01, 0.1]\nfolds = 4\n")).unwrap();
    commands::datagen(&p).unwrap();
    let a = commands::select(&p).unwrap();
    let b = commands::select(&p).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.grid.as_ref().unwrap().scores.len(), 3);
}

#[test]
fn missing_metric_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let proj = write_project(dir.path(), "");
    let p = Project::load(&proj).unwrap();
    commands::datagen(&p).unwrap();
    let text = std::fs::read_to_string(&proj).unwrap().replace("metric = \"time\"", "metric = \"throughput\"");
    std::fs::write(&proj, text).unwrap();
    let o = cli(&["select", "--project", proj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[data]:") && err.contains("`throughput`"), "{err}");
}

#[test]
fn warm_start_and_regression_need_datagen() {
    let dir = tempfile::tempdir().unwrap();
    let proj = write_project(dir.path(), "");
    let proj = proj.to_str().unwrap();
    for alg in ["bo-warm", "rbo"] {
        let o = cli(&["tune", "--project", proj, "--algorithm", alg, "--all-flags"]);
        assert_eq!(o.status.code(), Some(3), "{alg}");
        let err = stderr(&o);
        assert!(err.starts_with("error[dependency]:") && err.contains("datagen"), "{err}");
    }
    let o = cli(&["tune", "--project", proj, "--algorithm", "bo"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("--all-flags"));
    let o = cli(&["report", "--project", proj]);
    assert_eq!(o.status.code(), Some(3));
}

fn summary_field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in summary"))
        .parse()
        .unwrap()
}

fn keys(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let path = format!("{prefix}.{k}");
                out.insert(path.clone());
                if k != "best_config" && k != "config" {
                    keys(x, &path, out);
                }
            }
        }
        Value::Array(a) => {
            for x in a {
                keys(x, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn tuners_share_artifact_schema() {
    let dir = tempfile::tempdir().unwrap();
    let proj = write_project(dir.path(), "");
    let proj = proj.to_str().unwrap();
    let out = dir.path().join("out");
    run_ok(&["datagen", "--project", proj]);
    run_ok(&["select", "--project", proj]);
    let mut schemas = Vec::new();
    for alg in [Algorithm::Bo, Algorithm::Sa] {
        run_ok(&["tune", "--project", proj, "--algorithm", alg.as_str()]);
        let summary = std::fs::read_to_string(out.join(commands::summary_name(alg))).unwrap();
        let (d, b, s) =
            (summary_field(&summary, "default value"), summary_field(&summary, "best value"), summary_field(&summary, "speedup"));
        assert!((s - d / b).abs() <= 1e-9 * s.abs(), "{s} vs {}", d / b);
        assert!(summary.lines().any(|l| l.starts_with("best flags: -XX:F0=")));

        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(commands::tuning_report_name(alg))).unwrap()).unwrap();
        let mut k = BTreeSet::new();
        keys(&report, "", &mut k);
        let traj = std::fs::read_to_string(out.join(commands::trajectory_name(alg))).unwrap();
        let labels: Vec<String> = summary.lines().map(|l| l.split(':').next().unwrap().to_string()).collect();
        schemas.push((k, traj.lines().next().unwrap().to_string(), labels));
    }
    let strip = |k: &BTreeSet<String>| -> BTreeSet<String> {
        k.iter().filter(|p| !p.starts_with(".hyperparameters[]")).cloned().collect()
    };
    assert_eq!(strip(&schemas[0].0), strip(&schemas[1].0));
    assert_eq!(schemas[0].1, schemas[1].1);
    assert_eq!(schemas[0].2, schemas[1].2);

    run_ok(&["report", "--project", proj]);
    let csv = std::fs::read_to_string(out.join(commands::COMPARISON_CSV)).unwrap();
    let algs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(algs, vec!["bo", "sa"]);
}

#[test]
fn later_phases_do_not_touch_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = Project::load(&write_project(dir.path(), "")).unwrap();
    commands::datagen(&p).unwrap();
    let data = std::fs::read(p.out_dir.join(DATASET)).unwrap();
    commands::select(&p).unwrap();
    let sel = std::fs::read(p.out_dir.join(SELECTED_FLAGS)).unwrap();
    commands::tune(&p, Algorithm::BoWarm, false).unwrap();
    commands::tune(&p, Algorithm::Rbo, false).unwrap();
    assert_eq!(data, std::fs::read(p.out_dir.join(DATASET)).unwrap());
    assert_eq!(sel, std::fs::read(p.out_dir.join(SELECTED_FLAGS)).unwrap());
    std::fs::remove_file(p.out_dir.join(commands::tuning_report_name(Algorithm::BoWarm))).unwrap();
    std::fs::remove_file(p.out_dir.join(SELECTED_FLAGS)).unwrap();
    let again = commands::select(&p).unwrap();
    assert_eq!(sel, format!("{}\n", again.selected.join("\n")).into_bytes());
    let rows = commands::report(&p).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].algorithm, Algorithm::Rbo);
}

#[test]
fn usage_errors_exit_one() {
    let o = cli(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[usage]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);

    let o = cli(&["tune", "--project", "x.toml", "--algorithm", "grid"]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(cli(&["--help"]).status.code(), Some(0));

    let o = cli(&["select", "--project", "/nonexistent/project.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[io]:"));
}
