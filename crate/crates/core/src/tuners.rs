//! Search drivers over a (usually lasso-selected) flag subspace.
//!
//! All drivers work on the unit-cube encoding of the tuned flags. Flags
//! outside the subspace stay at their defaults. Every run measures the
//! default configuration once and keeps it as an incumbent candidate, so a
//! report never recommends something that measured worse than default.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::Evaluator;
use crate::flagspace::{Configuration, FlagSpace};
use crate::linreg::LinearModel;
use crate::rng;
use crate::surrogate::{gp_fit, lhs, maximize_ei, AcqSettings, Direction, GpHyper, GpSettings, SobolSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bo,
    BoWarm,
    Rbo,
    Sa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Bo, Algorithm::BoWarm, Algorithm::Rbo, Algorithm::Sa];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Bo => "bo",
            Algorithm::BoWarm => "bo-warm",
            Algorithm::Rbo => "rbo",
            Algorithm::Sa => "sa",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected bo, bo-warm, rbo or sa)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaSettings {
    pub lhs_init: usize,
    /// Initial temperature; `None` uses the sample sd of the LHS values.
    pub t0: Option<f64>,
    pub alpha: f64,
    pub step_sd: f64,
}

impl Default for SaSettings {
    fn default() -> Self {
        Self { lhs_init: 8, t0: None, alpha: 0.95, step_sd: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSettings {
    pub budget: usize,
    pub init_size: usize,
    pub confirm_runs: usize,
    /// Likelihood restarts for GP refits after the first one, which start
    /// from the previous hyperparameters.
    pub refit_restarts: usize,
    pub gp: GpSettings,
    pub acq: AcqSettings,
    pub sa: SaSettings,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            budget: 20,
            init_size: 8,
            confirm_runs: 1,
            refit_restarts: 1,
            gp: GpSettings::default(),
            acq: AcqSettings::default(),
            sa: SaSettings::default(),
        }
    }
}

impl TuneSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.init_size < 2 {
            return bad("init_size must be at least 2");
        }
        if self.sa.lhs_init == 0 {
            return bad("lhs_init must be at least 1");
        }
        if !(self.sa.alpha > 0.0 && self.sa.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.sa.step_sd > 0.0 && self.sa.step_sd.is_finite()) {
            return bad("step_sd must be positive");
        }
        if self.sa.t0.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
            return bad("t0 must be non-negative");
        }
        if !(self.acq.xi >= 0.0 && self.acq.xi.is_finite()) {
            return bad("xi must be finite and non-negative");
        }
        Ok(())
    }
}

/// One tuning problem: which flags to search, how to score them, and the
/// evaluator that runs the full configuration.
pub struct TuneTask<'a> {
    pub evaluator: &'a dyn Evaluator,
    pub space: FlagSpace,
    pub metric: String,
    pub direction: Direction,
    pub seed: u64,
    pub settings: TuneSettings,
}

impl<'a> TuneTask<'a> {
    pub fn new(
        evaluator: &'a dyn Evaluator,
        space: FlagSpace,
        metric: impl Into<String>,
        direction: Direction,
        seed: u64,
    ) -> Result<Self> {
        let metric = metric.into();
        if !evaluator.metrics().contains(&metric) {
            return Err(Error::MissingMetric(metric));
        }
        if space.dim() == 0 {
            return Err(Error::Empty("tuned flag set"));
        }
        let full = evaluator.space();
        for name in space.names() {
            if full.spec(&name).is_none_or(|f| !full.is_active(f)) {
                return Err(Error::UnknownFlag(name));
            }
        }
        Ok(Self { evaluator, space, metric, direction, seed, settings: TuneSettings::default() })
    }

    pub fn with_settings(mut self, settings: TuneSettings) -> Self {
        self.settings = settings;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Default,
    Init,
    Search,
    Confirm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: usize,
    pub phase: Phase,
    /// Assignment of the tuned flags only.
    pub config: Configuration,
    /// Observed (or predicted) metric; `None` for a failed trial.
    pub value: Option<f64>,
    /// True when `value` came from the regression model, not a run.
    pub predicted: bool,
    /// Best value in the trajectory so far.
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub algorithm: Algorithm,
    pub metric: String,
    pub direction: Direction,
    pub seed: u64,
    pub budget: usize,
    pub init_size: usize,
    pub tuned_flags: Vec<String>,
    /// Full configuration, untuned flags at their defaults.
    pub best_config: Configuration,
    pub best_value: f64,
    pub default_value: f64,
    pub speedup: f64,
    pub predicted_value: Option<f64>,
    pub confirmed_value: Option<f64>,
    /// Best value in the data the first surrogate was fit on.
    pub initial_incumbent: Option<f64>,
    pub real_executions: usize,
    pub failed_trials: usize,
    pub trajectory: Vec<TrajectoryPoint>,
    pub hyperparameters: Vec<GpHyper<f64>>,
}

impl TuningReport {
    /// Relative gain over default in percent, positive when better.
    pub fn improvement_pct(&self) -> f64 {
        improvement_pct(self.direction, self.default_value, self.best_value)
    }

    /// `iteration,value,incumbent`; failed trials leave `value` empty.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iteration,value,incumbent\n");
        for p in &self.trajectory {
            let v = p.value.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!("{},{},{:.16e}\n", p.iteration, v, p.incumbent));
        }
        out
    }
}

/// `default / best` when minimizing, `best / default` when maximizing.
pub fn speedup(direction: Direction, default_value: f64, best_value: f64) -> f64 {
    match direction {
        Direction::Minimize => default_value / best_value,
        Direction::Maximize => best_value / default_value,
    }
}

pub fn improvement_pct(direction: Direction, default_value: f64, best_value: f64) -> f64 {
    let gain = direction.to_max(best_value) - direction.to_max(default_value);
    gain / default_value.abs() * 100.0
}

/// Metropolis rule for a move that is worse by `delta` (in objective units).
pub fn accept_probability(delta: f64, temperature: f64) -> f64 {
    if delta <= 0.0 {
        1.0
    } else if temperature > 0.0 {
        (-delta / temperature).exp()
    } else {
        0.0
    }
}

/// Encodes full-space configurations onto the tuned subspace, dropping the
/// other flags.
pub fn project_configs(space: &FlagSpace, configs: &[Configuration]) -> Result<Vec<Vec<f64>>> {
    configs
        .iter()
        .map(|c| {
            let kept: Configuration =
                c.iter().filter(|(n, _)| space.index_of(n).is_some()).map(|(n, v)| (n.to_string(), v.clone())).collect();
            space.encode(&space.complete(&kept)?)
        })
        .collect()
}

enum Oracle<'m> {
    Real,
    Model(&'m LinearModel<f64>),
}

struct Obs {
    x: Vec<f64>,
    value: Option<f64>,
}

struct Run<'t, 'a> {
    task: &'t TuneTask<'a>,
    trajectory: Vec<TrajectoryPoint>,
    real: usize,
    failed: usize,
    best: Option<(Configuration, f64)>,
    default_value: f64,
    initial_incumbent: Option<f64>,
    hyper: Vec<GpHyper<f64>>,
}

impl<'t, 'a> Run<'t, 'a> {
    fn start(task: &'t TuneTask<'a>) -> Result<Self> {
        task.settings.validate()?;
        let mut run = Self {
            task,
            trajectory: Vec::new(),
            real: 0,
            failed: 0,
            best: None,
            default_value: f64::NAN,
            initial_incumbent: None,
            hyper: Vec::new(),
        };
        let sub = task.space.default_config();
        let full = task.evaluator.space().complete(&sub)?;
        let v = run.execute(&full)?.ok_or_else(|| Error::DefaultRunFailed(task.metric.clone()))?;
        run.default_value = v;
        run.push(Phase::Default, sub, Some(v), false);
        run.offer(full, v);
        Ok(run)
    }

    fn direction(&self) -> Direction {
        self.task.direction
    }

    fn execute(&mut self, full: &Configuration) -> Result<Option<f64>> {
        let seed = rng::derive(self.task.seed, self.real as u64);
        self.real += 1;
        let rec = self.task.evaluator.evaluate(full, seed)?;
        let v = if rec.is_ok() { rec.metric(&self.task.metric).filter(|v| v.is_finite()) } else { None };
        if v.is_none() {
            self.failed += 1;
            log::warn!("trial {} failed ({:?})", self.real, rec.status);
        }
        Ok(v)
    }

    fn push(&mut self, phase: Phase, config: Configuration, value: Option<f64>, predicted: bool) {
        let prev = self.trajectory.last().map(|p| p.incumbent);
        let incumbent = match (prev, value) {
            (Some(p), Some(v)) if self.direction().better(v, p) => v,
            (Some(p), _) => p,
            (None, Some(v)) => v,
            (None, None) => f64::NAN,
        };
        let iteration = self.trajectory.len();
        self.trajectory.push(TrajectoryPoint { iteration, phase, config, value, predicted, incumbent });
    }

    fn offer(&mut self, full: Configuration, v: f64) {
        if self.best.as_ref().is_none_or(|(_, b)| self.direction().better(v, *b)) {
            self.best = Some((full, v));
        }
    }

    fn snap(&self, x: &[f64]) -> Result<(Vec<f64>, Configuration)> {
        let x: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let sub = self.task.space.decode(&x)?;
        Ok((self.task.space.encode(&sub)?, sub))
    }

    fn eval(&mut self, x: &[f64], phase: Phase, oracle: &Oracle) -> Result<Obs> {
        let (snapped, sub) = self.snap(x)?;
        let full = self.task.evaluator.space().complete(&sub)?;
        let value = match oracle {
            Oracle::Real => {
                let v = self.execute(&full)?;
                if let Some(v) = v {
                    self.offer(full, v);
                }
                v
            }
            Oracle::Model(m) => {
                let enc = self.task.evaluator.space().encode(&full)?;
                Some(m.predict(&enc)?).filter(|v| v.is_finite())
            }
        };
        self.push(phase, sub, value, matches!(oracle, Oracle::Model(_)));
        Ok(Obs { x: snapped, value })
    }

    /// GP training data on the maximization scale; failures get the worst
    /// value seen so far pushed half its magnitude further down.
    fn gp_data(&self, obs: &[Obs]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let dir = self.direction();
        let worst = obs.iter().filter_map(|o| o.value).map(|v| dir.to_max(v)).fold(f64::INFINITY, f64::min);
        if !worst.is_finite() {
            return Err(Error::AllInitialTrialsFailed);
        }
        let penalty = worst - 0.5 * worst.abs();
        let xs = obs.iter().map(|o| o.x.clone()).collect();
        let ys = obs.iter().map(|o| o.value.map_or(penalty, |v| dir.to_max(v))).collect();
        Ok((xs, ys))
    }

    fn bo_loop(&mut self, obs: &mut Vec<Obs>, oracle: &Oracle) -> Result<()> {
        let s = &self.task.settings;
        let seed = self.task.seed;
        let mut gp_settings = s.gp.clone();
        let dir = self.direction();
        self.initial_incumbent = obs.iter().filter_map(|o| o.value).reduce(|a, b| if dir.better(b, a) { b } else { a });
        for i in 0..s.budget {
            let (xs, ys) = self.gp_data(obs)?;
            let gp = gp_fit(&xs, &ys, &gp_settings, rng::derive(seed, 2_000 + i as u64))?;
            let h = gp.hyper();
            self.hyper.push(h);
            gp_settings.warm_start = Some(h);
            gp_settings.restarts = s.refit_restarts.max(1);
            let f_best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (x, _) = maximize_ei(&gp, f_best, Direction::Maximize, &s.acq, rng::derive(seed, 3_000 + i as u64))?;
            let o = self.eval(&x, Phase::Search, oracle)?;
            obs.push(o);
        }
        Ok(())
    }

    fn sobol_init(&mut self, oracle: &Oracle) -> Result<Vec<Obs>> {
        let mut seq = SobolSequence::shifted(self.task.space.dim(), rng::derive(self.task.seed, 1))?;
        let mut obs = Vec::with_capacity(self.task.settings.init_size);
        for _ in 0..self.task.settings.init_size {
            let x: Vec<f64> = seq.next_point();
            obs.push(self.eval(&x, Phase::Init, oracle)?);
        }
        if obs.iter().all(|o| o.value.is_none()) {
            return Err(Error::AllInitialTrialsFailed);
        }
        Ok(obs)
    }

    fn finish(self, algorithm: Algorithm, predicted_value: Option<f64>, confirmed_value: Option<f64>) -> TuningReport {
        let task = self.task;
        let (best_config, best_value) = self.best.expect("default run always recorded");
        TuningReport {
            algorithm,
            metric: task.metric.clone(),
            direction: task.direction,
            seed: task.seed,
            budget: task.settings.budget,
            init_size: task.settings.init_size,
            tuned_flags: task.space.names(),
            best_config,
            best_value,
            default_value: self.default_value,
            speedup: speedup(task.direction, self.default_value, best_value),
            predicted_value,
            confirmed_value,
            initial_incumbent: self.initial_incumbent,
            real_executions: self.real,
            failed_trials: self.failed,
            trajectory: self.trajectory,
            hyperparameters: self.hyper,
        }
    }
}

/// GP Bayesian optimization from a Sobol initial design.
pub fn tune_bo(task: &TuneTask) -> Result<TuningReport> {
    let mut run = Run::start(task)?;
    let mut obs = run.sobol_init(&Oracle::Real)?;
    run.bo_loop(&mut obs, &Oracle::Real)?;
    Ok(run.finish(Algorithm::Bo, None, None))
}

/// BO whose first surrogate is fit on previously collected data (encoded
/// on the tuned subspace) instead of a fresh initial design.
pub fn tune_bo_warm(task: &TuneTask, xs: &[Vec<f64>], ys: &[f64]) -> Result<TuningReport> {
    if xs.is_empty() {
        return Err(Error::Empty("warm-start dataset"));
    }
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    let d = task.space.dim();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if ys.iter().chain(xs.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("warm-start dataset"));
    }
    let mut run = Run::start(task)?;
    let mut obs: Vec<Obs> = xs.iter().zip(ys).map(|(x, &y)| Obs { x: x.clone(), value: Some(y) }).collect();
    run.bo_loop(&mut obs, &Oracle::Real)?;
    Ok(run.finish(Algorithm::BoWarm, None, None))
}

/// BO against a regression model of the full flag space; only the default
/// and the confirmation runs touch the real target.
pub fn tune_rbo(task: &TuneTask, model: &LinearModel<f64>) -> Result<TuningReport> {
    let full_dim = task.evaluator.space().dim();
    if model.input_dim() != full_dim {
        return Err(Error::DimensionMismatch { expected: full_dim, got: model.input_dim() });
    }
    task.settings.validate()?;
    let mut run = Run::start(task)?;
    let oracle = Oracle::Model(model);
    let mut obs = run.sobol_init(&oracle)?;
    run.bo_loop(&mut obs, &oracle)?;

    let dir = run.direction();
    let best = obs
        .iter()
        .filter_map(|o| o.value.map(|v| (o, v)))
        .fold(None::<(&Obs, f64)>, |acc, (o, v)| match acc {
            Some((_, b)) if !dir.better(v, b) => acc,
            _ => Some((o, v)),
        })
        .ok_or(Error::AllInitialTrialsFailed)?;
    let (x, predicted) = (best.0.x.clone(), best.1);
    let (_, sub) = run.snap(&x)?;
    let full = task.evaluator.space().complete(&sub)?;
    let mut runs = Vec::new();
    for _ in 0..task.settings.confirm_runs {
        let v = run.execute(&full)?;
        run.push(Phase::Confirm, sub.clone(), v, false);
        runs.extend(v);
    }
    let confirmed = (!runs.is_empty()).then(|| runs.iter().sum::<f64>() / runs.len() as f64);
    match (confirmed, task.settings.confirm_runs) {
        (Some(c), _) => run.offer(full, c),
        (None, 0) => run.offer(full, predicted),
        (None, _) => {}
    }
    Ok(run.finish(Algorithm::Rbo, Some(predicted), confirmed))
}

/// Simulated annealing started from the best point of a Latin hypercube.
pub fn tune_sa(task: &TuneTask) -> Result<TuningReport> {
    let mut run = Run::start(task)?;
    let s = &task.settings;
    let dir = task.direction;
    let d = task.space.dim();

    let design: Vec<Vec<f64>> = lhs(s.sa.lhs_init, d, rng::derive(task.seed, 5));
    let mut values = Vec::with_capacity(design.len());
    for x in &design {
        values.push(run.eval(x, Phase::Init, &Oracle::Real)?.value);
    }
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllInitialTrialsFailed);
    }
    let mut worst = ok.iter().map(|&v| dir.to_max(v)).fold(f64::INFINITY, f64::min);
    let (start, mut cur) = design
        .iter()
        .zip(&values)
        .filter_map(|(x, v)| v.map(|v| (x, dir.to_max(v))))
        .fold(None::<(&Vec<f64>, f64)>, |acc, (x, v)| match acc {
            Some((_, b)) if v <= b => acc,
            _ => Some((x, v)),
        })
        .expect("at least one successful design point");
    let mut x = start.clone();
    let mut temp = s.sa.t0.unwrap_or_else(|| sample_sd(&ok));

    let mut r = rng::sub_rng(task.seed, 6);
    let step = Normal::new(0.0, s.sa.step_sd).map_err(|e| Error::Config(e.to_string()))?;
    for _ in 0..s.budget {
        let j = r.random_range(0..d);
        let mut y = x.clone();
        y[j] = (y[j] + step.sample(&mut r)).clamp(0.0, 1.0);
        let o = run.eval(&y, Phase::Search, &Oracle::Real)?;
        let new = match o.value {
            Some(v) => {
                worst = worst.min(dir.to_max(v));
                dir.to_max(v)
            }
            None => worst - 0.5 * worst.abs(),
        };
        let u: f64 = r.random();
        if u < accept_probability(cur - new, temp) {
            x = y;
            cur = new;
        }
        temp *= s.sa.alpha;
    }
    Ok(run.finish(Algorithm::Sa, None, None))
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{VirtualExecutor, VirtualTarget};
    use crate::flagspace::FlagSpec;

    fn target(noise: f64) -> VirtualExecutor {
        let flags = (0..4).map(|i| FlagSpec::continuous(format!("f{i}"), 0.0, 1.0, 0.9).unwrap()).collect();
        let space = FlagSpace::new(flags).unwrap();
        let vt = VirtualTarget::new(4, vec![0, 2], vec![0.3, 0.6], vec![1.0, 2.0], noise, 1.0).unwrap();
        VirtualExecutor::new(vt, space, "time").unwrap()
    }

    fn small(budget: usize, init: usize) -> TuneSettings {
        TuneSettings { budget, init_size: init, ..TuneSettings::default() }
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(accept_probability(0.0, 1.0), 1.0);
        assert_eq!(accept_probability(-3.0, 0.0), 1.0);
        assert_eq!(accept_probability(1e-9, 0.0), 0.0);
        assert!((accept_probability(1.0, 2.0) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bo_accounting_and_monotone_incumbent() {
        let ev = target(0.0);
        let task = TuneTask::new(&ev, ev.space().clone(), "time", Direction::Minimize, 1).unwrap().with_settings(small(1, 2));
        let rep = tune_bo(&task).unwrap();
        assert_eq!(rep.real_executions, 4);
        assert_eq!(rep.trajectory.len(), 4);
        assert!(rep.trajectory.windows(2).all(|w| w[1].incumbent <= w[0].incumbent));
        assert!(rep.best_value <= rep.default_value);
        assert_eq!(rep.speedup, rep.default_value / rep.best_value);
    }

    #[test]
    fn warm_start_spends_no_initial_runs() {
        let ev = target(0.0);
        let task = TuneTask::new(&ev, ev.space().clone(), "time", Direction::Minimize, 2).unwrap().with_settings(small(3, 4));
        let xs: Vec<Vec<f64>> = lhs(12, 4, 7);
        let ys: Vec<f64> = xs.iter().map(|x| ev.target.mean_value(x).unwrap()).collect();
        let warm = tune_bo_warm(&task, &xs, &ys).unwrap();
        let cold = tune_bo(&task).unwrap();
        assert_eq!(warm.real_executions, 4);
        assert_eq!(warm.real_executions, cold.real_executions - 4);
        let lowest = ys.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(warm.initial_incumbent, Some(lowest));
        assert!(matches!(tune_bo_warm(&task, &[vec![0.5]], &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(tune_bo_warm(&task, &[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn sa_guard_and_accounting() {
        let ev = target(0.05);
        let mut s = small(5, 2);
        s.sa.lhs_init = 3;
        let task = TuneTask::new(&ev, ev.space().clone(), "time", Direction::Minimize, 3).unwrap().with_settings(s);
        let rep = tune_sa(&task).unwrap();
        assert_eq!(rep.real_executions, 3 + 5 + 1);
        assert!(rep.best_value <= rep.default_value);
        assert_eq!(tune_sa(&task).unwrap(), rep);
    }

    #[test]
    fn settings_validation() {
        let ev = target(0.0);
        let task = TuneTask::new(&ev, ev.space().clone(), "time", Direction::Minimize, 3).unwrap().with_settings(small(0, 2));
        assert!(matches!(tune_bo(&task), Err(Error::Config(_))));
        assert!(TuneTask::new(&ev, ev.space().clone(), "heap", Direction::Minimize, 3).is_err());
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{a}\""));
        }
        assert!("hill".parse::<Algorithm>().is_err());
    }

    #[test]
    fn speedup_conventions() {
        assert_eq!(speedup(Direction::Minimize, 100.0, 80.0), 1.25);
        assert_eq!(improvement_pct(Direction::Minimize, 40.0, 20.0), 50.0);
        assert_eq!(speedup(Direction::Maximize, 10.0, 20.0), 2.0);
    }
}
