use std::collections::BTreeSet;

use flagtune_core::active::{run_al_loop, AlSettings, BatchStrategy, StopReason, TrialRole};
use flagtune_core::executor::{Evaluator, TrialLog, TrialRecord, VirtualExecutor, VirtualTarget};
use flagtune_core::flagspace::{FlagSpace, FlagSpec};
use flagtune_core::linreg::SgdParams;

fn exec(d: usize, k: usize, noise: f64, seed: u64) -> VirtualExecutor {
    let space =
        FlagSpace::new((0..d).map(|i| FlagSpec::continuous(format!("x{i}"), 0.0, 1.0, 0.5).unwrap()).collect()).unwrap();
    VirtualExecutor::new(VirtualTarget::random(d, k, 0.5, 2.0, noise, 1.0, seed).unwrap(), space, "time").unwrap()
}


#[test]
fn bemcm_beats_random_at_equal_labels() {
    let mut wins = 0;
    for seed in 0..10 {
        let ev = exec(20, 4, 0.05, seed);
        let mut s = AlSettings { sgd: SgdParams { lr: 0.1, epochs: 1000, ..SgdParams::default() }, ..AlSettings::default() };
        s.budget.rel_rmse_eps = 0.0;
        let al = run_al_loop(&ev, "time", &s, seed, None).unwrap();
        let random = run_al_loop(&ev, "time", &AlSettings { strategy: BatchStrategy::Random, ..s.clone() }, seed, None).unwrap();
        assert_eq!(al.dataset().count(), random.dataset().count());
        wins += usize::from(al.report.final_rmse() <= random.report.final_rmse());
    }
    assert!(wins >= 8, "{wins}/10");
}

#[test]
fn loop_invariants_hold() {
    let ev = exec(6, 2, 0.05, 1);
    let s = AlSettings { candidates: 200, ..AlSettings::default() };
    let out = run_al_loop(&ev, "time", &s, 3, None).unwrap();
    let r = &out.report;
    assert_eq!((r.seed_size, r.test_size, r.pool_size), (20, 40, 140));
    assert_eq!(r.batch_size, 5);

    let enc = |t: &TrialRecord| ev.space().encode(&t.config).unwrap();
    let xs: Vec<Vec<f64>> = out.trials.iter().map(|(_, t)| enc(t)).collect();
    let unique: BTreeSet<Vec<u64>> = xs.iter().map(|x| x.iter().map(|v| v.to_bits()).collect()).collect();
    assert_eq!(unique.len(), xs.len(), "a configuration was labeled twice");

    assert_eq!(r.rounds[0].labeled, 20);
    for w in r.rounds.windows(2) {
        assert_eq!(w[1].labeled - w[0].labeled, w[1].batch.len());
        assert_eq!(w[1].batch.len(), 5);
    }
    let acquired = out.trials.iter().filter(|(role, _)| *role == TrialRole::Acquired).count();
    assert_eq!(acquired, r.rounds.iter().map(|x| x.batch.len()).sum::<usize>());
    let test_x: Vec<Vec<f64>> = out.trials.iter().filter(|(role, _)| *role == TrialRole::Test).map(|(_, t)| enc(t)).collect();
    let (ty, preds): (Vec<f64>, Vec<f64>) = out
        .trials
        .iter()
        .filter(|(role, _)| *role == TrialRole::Test)
        .zip(&test_x)
        .map(|((_, t), x)| (t.metric("time").unwrap(), out.model.predict(x).unwrap()))
        .unzip();
    let rmse = (ty.iter().zip(&preds).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ty.len() as f64).sqrt();
    assert!((rmse - r.final_rmse()).abs() < 1e-12);
}

#[test]
fn stopping_rule_extremes() {
    let ev = exec(5, 2, 0.05, 2);
    let mut s = AlSettings { candidates: 150, ..AlSettings::default() };
    s.budget.rel_rmse_eps = f64::INFINITY;
    let one = run_al_loop(&ev, "time", &s, 1, None).unwrap();
    assert_eq!(one.report.rounds.len(), 2);
    assert_eq!(one.report.stop_reason, StopReason::RmseConverged);

    s.budget.rel_rmse_eps = 0.0;
    s.budget.max_rounds = 4;
    let all = run_al_loop(&ev, "time", &s, 1, None).unwrap();
    assert_eq!(all.report.rounds.len(), 5);
    assert_eq!(all.report.stop_reason, StopReason::MaxRounds);

    s.budget.max_rounds = 1;
    let single = run_al_loop(&ev, "time", &s, 1, None).unwrap();
    let acquired = single.trials.iter().filter(|(r, _)| *r == TrialRole::Acquired).count();
    assert_eq!(acquired, single.report.batch_size);

    s.budget.max_rounds = 0;
    assert!(run_al_loop(&ev, "time", &s, 1, None).is_err());
}

#[test]
fn identical_seeds_give_identical_datasets_and_logs() {
    let ev = exec(6, 3, 0.0, 4);
    let s = AlSettings { candidates: 120, ..AlSettings::default() };
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let a = run_al_loop(&ev, "time", &s, 9, Some(&TrialLog::new(&pa))).unwrap();
    let b = run_al_loop(&ev, "time", &s, 9, Some(&TrialLog::new(&pb))).unwrap();
    assert_eq!(a.trials, b.trials);
    assert_eq!(a.report, b.report);
    assert_eq!(a.model, b.model);
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(TrialLog::read(&pa).unwrap().len(), a.trials.len());
    let c = run_al_loop(&ev, "time", &s, 10, None).unwrap();
    assert_ne!(a.trials, c.trials);
    assert!(ev.is_virtual());
}
