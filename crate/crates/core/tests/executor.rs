use std::collections::BTreeMap;

use flagtune_core::executor::{
    aggregate_heap, heap_usage_sample, run_trial, synthetic_eval, Evaluator, HeapSample, ProcessExecutor, TargetSpec,
    TrialLog, TrialStatus, VirtualExecutor, VirtualTarget, FLAGS_PLACEHOLDER,
};
use flagtune_core::flagspace::{FlagSpace, FlagSpec, FlagValue, RenderStyle};
use proptest::prelude::*;

fn sh(script: &str) -> Vec<String> {
    vec!["sh".into(), "-c".into(), script.into(), "target".into(), FLAGS_PLACEHOLDER.into()]
}

fn space() -> FlagSpace {
    FlagSpace::new(vec![FlagSpec::integer("level", 0, 10, 3).unwrap().with_render(RenderStyle::Gnu)]).unwrap()
}

#[test]
fn sleep_two_seconds_is_timed() {
    let mut spec = TargetSpec::new(sh("sleep 2"), vec!["time".into()]);
    spec.timeout_s = 60.0;
    let ex = ProcessExecutor::new(spec, space()).unwrap();
    let r = run_trial(&ex, &space().default_config()).unwrap();
    assert_eq!(r.status, TrialStatus::Ok);
    assert!((2.0..=2.5).contains(&r.wall_clock_s), "{}", r.wall_clock_s);
    assert_eq!(r.metric("time"), Some(r.wall_clock_s));
}

#[test]
fn slow_target_times_out() {
    let mut spec = TargetSpec::new(sh("sleep 10"), vec!["time".into()]);
    spec.timeout_s = 1.0;
    let ex = ProcessExecutor::new(spec, space()).unwrap();
    let t = std::time::Instant::now();
    let r = run_trial(&ex, &space().default_config()).unwrap();
    assert_eq!(r.status, TrialStatus::Timeout);
    assert_eq!(r.wall_clock_s, 1.0);
    assert!(t.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn repeat_launches_that_many_processes_and_averages() {
    let dir = tempfile::tempdir().unwrap();
    let counter = dir.path().join("runs");
    let script = format!(
        "echo run >> {}; n=$(wc -l < {}); echo \"FLAGTUNE_METRIC score=$((n * 10))\"; echo \"$1\" > {}",
        counter.display(),
        counter.display(),
        dir.path().join("args").display()
    );
    let mut spec = TargetSpec::new(sh(&script), vec!["score".into()]);
    spec.repeat = 3;
    let ex = ProcessExecutor::new(spec, space()).unwrap();
    let cfg = space().default_config().with("level", FlagValue::Int(7));
    let r = run_trial(&ex, &cfg).unwrap();
    assert_eq!(r.status, TrialStatus::Ok);
    assert_eq!(std::fs::read_to_string(&counter).unwrap().lines().count(), 3);
    assert_eq!(r.run_wall_clock_s.len(), 3);
    assert_eq!(r.metric("score"), Some(20.0));
    assert_eq!(std::fs::read_to_string(dir.path().join("args")).unwrap().trim(), "--level=7");
}

#[test]
fn nonzero_exit_and_missing_metric_crash() {
    let ex = ProcessExecutor::new(TargetSpec::new(sh("exit 3"), vec!["time".into()]), space()).unwrap();
    assert_eq!(run_trial(&ex, &space().default_config()).unwrap().status, TrialStatus::Crashed);
    let ex = ProcessExecutor::new(TargetSpec::new(sh("true"), vec!["score".into()]), space()).unwrap();
    assert_eq!(run_trial(&ex, &space().default_config()).unwrap().status, TrialStatus::Crashed);
}

#[test]
fn environment_is_injected() {
    let mut spec = TargetSpec::new(sh("echo FLAGTUNE_METRIC v=$KNOB"), vec!["v".into()]);
    spec.env = BTreeMap::from([("KNOB".to_string(), "4.5".to_string())]);
    let ex = ProcessExecutor::new(spec, space()).unwrap();
    assert_eq!(run_trial(&ex, &space().default_config()).unwrap().metric("v"), Some(4.5));
}

#[test]
fn heap_probe_uses_sampler_output() {
    let jstat = "S0C S1C S0U S1U EC EU OC OU\\n20 20 10 0 100 30 200 60";
    let mut spec = TargetSpec::new(sh("true"), vec!["heap".into()]);
    spec.heap.sampler = vec!["sh".into(), "-c".into(), format!("printf '{jstat}\\n'")];
    let ex = ProcessExecutor::new(spec, space()).unwrap();
    let r = run_trial(&ex, &space().default_config()).unwrap();
    assert_eq!(r.status, TrialStatus::Ok);
    assert!((r.metric("heap").unwrap() - 100.0 / 340.0 * 100.0).abs() < 1e-9);
}

#[test]
fn virtual_trial_equals_synthetic_eval_and_logs_round_trip() {
    let s = FlagSpace::new((0..3).map(|i| FlagSpec::continuous(format!("x{i}"), 0.0, 1.0, 0.5).unwrap()).collect())
        .unwrap();
    let vt = VirtualTarget::random(3, 2, 0.5, 2.0, 0.1, 1.0, 4).unwrap();
    let ex = VirtualExecutor::new(vt.clone(), s.clone(), "time").unwrap();
    let cfg = s.decode(&[0.2, 0.7, 0.9]).unwrap();
    let r = ex.evaluate(&cfg, 17).unwrap();
    assert_eq!(r.metric("time").unwrap(), synthetic_eval(&vt, &s.encode(&cfg).unwrap(), 17).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let log = TrialLog::new(dir.path().join("trials.jsonl"));
    log.append(&r).unwrap();
    log.append(&ex.evaluate(&cfg, 18).unwrap()).unwrap();
    let back = TrialLog::read(&dir.path().join("trials.jsonl")).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0], r);
}

proptest! {
    #[test]
    fn heap_usage_is_a_percentage(
        caps in prop::collection::vec(0.0f64..1e6, 4),
        fracs in prop::collection::vec(0.0f64..=1.0, 4),
    ) {
        prop_assume!(caps.iter().sum::<f64>() > 0.0);
        let u: Vec<f64> = caps.iter().zip(&fracs).map(|(c, f)| c * f).collect();
        let s = HeapSample { S0C: caps[0], S1C: caps[1], EC: caps[2], OC: caps[3], S0U: u[0], S1U: u[1], EU: u[2], OU: u[3] };
        let hu = heap_usage_sample(&s).unwrap();
        prop_assert!((0.0..=100.0).contains(&hu));
    }

    #[test]
    fn aggregate_within_range(v in prop::collection::vec(0.0f64..100.0, 1..20)) {
        let m = aggregate_heap(&v).unwrap();
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
    }

    #[test]
    fn noiseless_target_ignores_irrelevant_dims(
        x in prop::collection::vec(0.0f64..=1.0, 6),
        y in prop::collection::vec(0.0f64..=1.0, 6),
        seed in any::<u64>(),
    ) {
        let vt = VirtualTarget::random(6, 2, 0.5, 2.0, 0.0, 1.0, seed).unwrap();
        let mut z = y.clone();
        for &i in &vt.relevant {
            z[i] = x[i];
        }
        prop_assert_eq!(synthetic_eval(&vt, &x, 1).unwrap(), synthetic_eval(&vt, &z, 2).unwrap());
    }
}
