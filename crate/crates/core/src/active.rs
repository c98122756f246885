//! Batch-mode expected model change maximization (BEMCM).
//!
//! A pool of random configurations is characterized by labeling, round by
//! round, the batch whose ensemble-estimated SGD gradient norm is largest.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{Evaluator, TrialLog, TrialRecord};
use crate::linreg::{bootstrap_ensemble, fit_sgd, FeatureMap, LinearModel, ModelEnsemble, SgdParams};
use crate::rng;
use crate::scalar::{dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlBudget {
    /// Batch size as a fraction of the initial pool.
    pub batch_fraction: f64,
    pub max_rounds: usize,
    /// Stop once the relative change in test RMSE drops below this.
    pub rel_rmse_eps: f64,
    pub ensemble_z: usize,
    pub max_wall_clock_s: Option<f64>,
}

impl Default for AlBudget {
    fn default() -> Self {
        Self { batch_fraction: 0.03, max_rounds: 10, rel_rmse_eps: 0.01, ensemble_z: 8, max_wall_clock_s: None }
    }
}

impl AlBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.batch_fraction > 0.0 && self.batch_fraction < 1.0) {
            return Err(Error::Config("batch_fraction must lie in (0, 1)".into()));
        }
        if self.max_rounds < 1 {
            return Err(Error::Config("max_rounds must be at least 1".into()));
        }
        if !(self.rel_rmse_eps >= 0.0) {
            return Err(Error::Config("rel_rmse_eps must be non-negative".into()));
        }
        if self.ensemble_z < 2 {
            return Err(Error::Config("ensemble_z must be at least 2".into()));
        }
        Ok(())
    }
}

/// How each batch is chosen from the pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchStrategy {
    /// Greedy picks with a pseudo SGD update between picks.
    #[default]
    Greedy,
    /// The k highest single-point scores.
    TopK,
    /// Uniform random picks; the passive-learning baseline.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlSettings {
    pub budget: AlBudget,
    /// Size of the random candidate set split into seed (10%), test (20%)
    /// and pool (70%).
    pub candidates: usize,
    /// Overrides the pool share with an explicit number of unlabeled
    /// candidates; seed and test sizes still follow `candidates`.
    pub pool_size: Option<usize>,
    pub degree: u8,
    pub interactions: bool,
    pub sgd: SgdParams<f64>,
    pub strategy: BatchStrategy,
}

impl Default for AlSettings {
    fn default() -> Self {
        Self {
            budget: AlBudget::default(),
            candidates: 300,
            pool_size: None,
            degree: 2,
            interactions: false,
            sgd: SgdParams::default(),
            strategy: BatchStrategy::Greedy,
        }
    }
}

/// `(1/Z) Σ_z ‖(f(x) − y_z)·φ(x)‖₂` where `y_z` is member `z`'s prediction,
/// all on the main model's standardized scale.
pub fn expected_model_change<F: Real>(model: &LinearModel<F>, ensemble: &ModelEnsemble<F>, x: &[F]) -> Result<F> {
    let phi = model.features(x)?;
    let f = dot(model.weights(), &phi);
    let norm = dot(&phi, &phi).sqrt();
    let preds = ensemble.predictions(x)?;
    let total: F = preds.iter().map(|&y| (f - model.standardize(y)).abs() * norm).sum();
    Ok(total / F::from_usize_lossy(preds.len()))
}

struct Candidate<F> {
    phi: Vec<F>,
    norm: F,
    member_std: Vec<F>,
    mean_std: F,
}

fn score<F: Real>(w: &[F], c: &Candidate<F>) -> F {
    let f = dot(w, &c.phi);
    let s: F = c.member_std.iter().map(|&y| (f - y).abs()).sum();
    s * c.norm / F::from_usize_lossy(c.member_std.len())
}

/// Picks `k` pool indices. The greedy strategy scores every remaining point,
/// takes the argmax (lowest index on ties), then applies one SGD step with
/// the ensemble-mean pseudo-label to a scratch copy of the model before the
/// next pick. The model passed in is never modified.
pub fn select_batch<F: Real>(
    model: &LinearModel<F>,
    ensemble: &ModelEnsemble<F>,
    pool: &[Vec<F>],
    k: usize,
    lr: F,
    strategy: BatchStrategy,
    seed: u64,
) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::Empty("unlabeled pool"));
    }
    if k > pool.len() {
        return Err(Error::Config(format!("batch of {k} exceeds pool of {}", pool.len())));
    }
    if strategy == BatchStrategy::Random {
        let mut r = rng::rng(seed);
        return Ok(sample(&mut r, pool.len(), k).into_vec());
    }
    let cands = pool
        .iter()
        .map(|x| {
            let phi = model.features(x)?;
            let norm = dot(&phi, &phi).sqrt();
            let member_std: Vec<F> = ensemble.predictions(x)?.into_iter().map(|y| model.standardize(y)).collect();
            let mean_std = member_std.iter().copied().sum::<F>() / F::from_usize_lossy(member_std.len());
            Ok(Candidate { phi, norm, member_std, mean_std })
        })
        .collect::<Result<Vec<_>>>()?;

    if strategy == BatchStrategy::TopK {
        let scores: Vec<F> = cands.iter().map(|c| score(model.weights(), c)).collect();
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        idx.truncate(k);
        return Ok(idx);
    }

    let mut w = model.weights().to_vec();
    let mut taken = vec![false; pool.len()];
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, F)> = None;
        for (i, c) in cands.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let s = score(&w, c);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (i, _) = best.expect("pool has unpicked points");
        taken[i] = true;
        picked.push(i);
        let c = &cands[i];
        let r = dot(&w, &c.phi) - c.mean_std;
        for (wj, &p) in w.iter_mut().zip(&c.phi) {
            *wj -= lr * r * p;
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialRole {
    Seed,
    Test,
    Acquired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRound {
    /// 0 is the fit on the seed set alone.
    pub round: usize,
    pub labeled: usize,
    pub test_rmse: f64,
    /// Candidate indices labeled in this round (empty for round 0).
    pub batch: Vec<usize>,
    pub cumulative_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    RmseConverged,
    MaxRounds,
    WallClock,
    PoolExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlReport {
    pub metric: String,
    pub seed_size: usize,
    pub test_size: usize,
    pub pool_size: usize,
    pub batch_size: usize,
    pub rounds: Vec<AlRound>,
    pub stop_reason: StopReason,
}

impl AlReport {
    pub fn final_rmse(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.test_rmse)
    }
}

/// Everything the characterization phase produces.
#[derive(Debug, Clone)]
pub struct AlOutcome {
    /// Every executed trial in execution order, failed ones included.
    pub trials: Vec<(TrialRole, TrialRecord)>,
    pub model: LinearModel<f64>,
    pub ensemble: ModelEnsemble<f64>,
    pub report: AlReport,
}

impl AlOutcome {
    /// Successful trials only: the characterization dataset.
    pub fn dataset(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().map(|(_, t)| t).filter(|t| t.is_ok())
    }
}

/// Mutable state of the loop.
#[derive(Debug, Clone)]
pub struct AlState {
    pub labeled_x: Vec<Vec<f64>>,
    pub labeled_y: Vec<f64>,
    /// Unlabeled candidate indices into the candidate list.
    pub pool: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<f64>,
    pub round: usize,
    pub rmse_history: Vec<f64>,
}

/// Deterministic per-candidate trial seed.
pub fn trial_seed(seed: u64, candidate: usize) -> u64 {
    rng::derive(seed, 0xA1_0000 + candidate as u64)
}

/// Uniform random configurations, snapped to legal values and deduplicated.
fn candidate_pool(ev: &dyn Evaluator, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let space = ev.space();
    let d = space.dim();
    let mut r = rng::sub_rng(seed, 0xC0FFEE);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < 20 * n {
        attempts += 1;
        let u: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
        let x = space.encode(&space.decode(&u)?)?;
        if !out.contains(&x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Runs the characterization loop against `ev` for `metric`.
pub fn run_al_loop(
    ev: &dyn Evaluator,
    metric: &str,
    settings: &AlSettings,
    seed: u64,
    log: Option<&TrialLog>,
) -> Result<AlOutcome> {
    settings.budget.validate()?;
    let started = Instant::now();
    let space = ev.space();
    let map = FeatureMap::new(space.dim(), settings.degree, settings.interactions)?;
    let total = settings.candidates;
    let n_seed = ((total as f64 * 0.1).round() as usize).max(2);
    let n_test = ((total as f64 * 0.2).round() as usize).max(1);
    let n_pool = settings.pool_size.unwrap_or(total.saturating_sub(n_seed + n_test));
    let cands = candidate_pool(ev, n_seed + n_test + n_pool, seed)?;
    let n = cands.len();
    if n_pool == 0 || n < n_seed + n_test + 1 {
        return Err(Error::Config(format!("{n} candidates are too few to split")));
    }
    let batch = ((settings.budget.batch_fraction * (n - n_seed - n_test) as f64).ceil() as usize).max(1);

    let mut trials: Vec<(TrialRole, TrialRecord)> = Vec::new();
    let label = |trials: &mut Vec<(TrialRole, TrialRecord)>, i: usize, role: TrialRole| -> Result<Option<f64>> {
        let cfg = space.decode(&cands[i])?;
        let rec = ev.evaluate(&cfg, trial_seed(seed, i))?;
        if let Some(log) = log {
            log.append(&rec)?;
        }
        let y = if rec.is_ok() {
            Some(rec.metric(metric).ok_or_else(|| Error::MissingMetric(metric.to_string()))?)
        } else {
            None
        };
        trials.push((role, rec));
        Ok(y)
    };

    let mut state = AlState {
        labeled_x: Vec::new(),
        labeled_y: Vec::new(),
        pool: (n_seed + n_test..n).collect(),
        test_x: Vec::new(),
        test_y: Vec::new(),
        round: 0,
        rmse_history: Vec::new(),
    };
    for (i, x) in cands.iter().enumerate().take(n_seed) {
        if let Some(y) = label(&mut trials, i, TrialRole::Seed)? {
            state.labeled_x.push(x.clone());
            state.labeled_y.push(y);
        }
    }
    if state.labeled_x.len() < 2 {
        return Err(Error::CannotCharacterize);
    }
    for (i, x) in cands.iter().enumerate().take(n_seed + n_test).skip(n_seed) {
        if let Some(y) = label(&mut trials, i, TrialRole::Test)? {
            state.test_x.push(x.clone());
            state.test_y.push(y);
        }
    }
    if state.test_x.is_empty() {
        return Err(Error::CannotCharacterize);
    }

    let fit = |state: &AlState, round: usize| -> Result<(LinearModel<f64>, ModelEnsemble<f64>, f64)> {
        let params = settings.sgd.with_seed(rng::derive(seed, 0x5EED_0000 + round as u64));
        let model = fit_sgd(&state.labeled_x, &state.labeled_y, map, &params)?;
        let ens = bootstrap_ensemble(
            &state.labeled_x,
            &state.labeled_y,
            settings.budget.ensemble_z,
            map,
            &params,
            rng::derive(seed, 0xB007_0000 + round as u64),
        )?;
        let rmse = model.rmse(&state.test_x, &state.test_y)?;
        Ok((model, ens, rmse))
    };

    let (mut model, mut ensemble, rmse) = fit(&state, 0)?;
    state.rmse_history.push(rmse);
    let mut rounds = vec![AlRound {
        round: 0,
        labeled: state.labeled_x.len(),
        test_rmse: rmse,
        batch: Vec::new(),
        cumulative_trials: trials.len(),
    }];

    let stop_reason = loop {
        if state.round >= settings.budget.max_rounds {
            break StopReason::MaxRounds;
        }
        if settings.budget.max_wall_clock_s.is_some_and(|limit| started.elapsed().as_secs_f64() >= limit) {
            break StopReason::WallClock;
        }
        if state.pool.is_empty() {
            break StopReason::PoolExhausted;
        }
        state.round += 1;
        let pool_x: Vec<Vec<f64>> = state.pool.iter().map(|&i| cands[i].clone()).collect();
        let k = batch.min(pool_x.len());
        let picked = select_batch(
            &model,
            &ensemble,
            &pool_x,
            k,
            settings.sgd.lr,
            settings.strategy,
            rng::derive(seed, 0x5E1E_0000 + state.round as u64),
        )?;
        let chosen: Vec<usize> = picked.iter().map(|&p| state.pool[p]).collect();
        state.pool.retain(|i| !chosen.contains(i));
        for &i in &chosen {
            if let Some(y) = label(&mut trials, i, TrialRole::Acquired)? {
                state.labeled_x.push(cands[i].clone());
                state.labeled_y.push(y);
            }
        }
        let (m, e, rmse) = fit(&state, state.round)?;
        model = m;
        ensemble = e;
        let prev = *state.rmse_history.last().expect("history starts non-empty");
        state.rmse_history.push(rmse);
        rounds.push(AlRound {
            round: state.round,
            labeled: state.labeled_x.len(),
            test_rmse: rmse,
            batch: chosen,
            cumulative_trials: trials.len(),
        });
        let rel = if prev > 0.0 { (prev - rmse).abs() / prev } else { 0.0 };
        if rel < settings.budget.rel_rmse_eps {
            break StopReason::RmseConverged;
        }
    };

    let report = AlReport {
        metric: metric.to_string(),
        seed_size: n_seed,
        test_size: n_test,
        pool_size: n - n_seed - n_test,
        batch_size: batch,
        rounds,
        stop_reason,
    };
    Ok(AlOutcome { trials, model, ensemble, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin(w: Vec<f64>) -> LinearModel<f64> {
        LinearModel::from_weights(w, FeatureMap::linear(1), 0.0, 1.0).unwrap()
    }

    #[test]
    fn emc_zero_when_members_agree() {
        let m = lin(vec![0.3, 1.2]);
        let ens = ModelEnsemble::from_members(vec![m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(expected_model_change(&m, &ens, &[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn emc_two_member_hand_value() {
        // φ(x) = (1, 0) at x = 0; main model predicts 0, members 1 and −1.
        let m = lin(vec![0.0, 0.0]);
        let ens = ModelEnsemble::from_members(vec![lin(vec![1.0, 0.0]), lin(vec![-1.0, 0.0])]).unwrap();
        assert_eq!(expected_model_change(&m, &ens, &[0.0]).unwrap(), 1.0);
        let swapped = ModelEnsemble::from_members(vec![lin(vec![-1.0, 0.0]), lin(vec![1.0, 0.0])]).unwrap();
        assert_eq!(expected_model_change(&m, &swapped, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn emc_matches_gradient_norm_for_coinciding_members() {
        let m = lin(vec![0.2, -0.4]);
        let member = lin(vec![1.0, 0.5]);
        let ens = ModelEnsemble::from_members(vec![member.clone(), member.clone()]).unwrap();
        let x = [0.6];
        let ybar = member.predict(&x).unwrap();
        let g = m.loss_gradient(&x, ybar).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((expected_model_change(&m, &ens, &x).unwrap() - norm).abs() < 1e-12);
    }

    #[test]
    fn select_batch_base_cases() {
        let m = lin(vec![0.0, 0.0]);
        let ens = ModelEnsemble::from_members(vec![lin(vec![0.0, 1.0]), lin(vec![0.0, 2.0])]).unwrap();
        let pool: Vec<Vec<f64>> = [0.1, 0.9, 0.4, 0.6].iter().map(|&v| vec![v]).collect();
        let one = select_batch(&m, &ens, &pool, 1, 0.01, BatchStrategy::Greedy, 0).unwrap();
        let scores: Vec<f64> = pool.iter().map(|x| expected_model_change(&m, &ens, x).unwrap()).collect();
        let argmax = (0..4).max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap()).unwrap();
        assert_eq!(one, vec![argmax]);

        let mut all = select_batch(&m, &ens, &pool, 4, 0.01, BatchStrategy::Greedy, 0).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(select_batch(&m, &ens, &[], 0, 0.01, BatchStrategy::Greedy, 0).is_err());
        assert!(select_batch(&m, &ens, &pool, 5, 0.01, BatchStrategy::Greedy, 0).is_err());
    }

    #[test]
    fn select_batch_ties_take_lowest_index() {
        let m = lin(vec![0.0, 0.0]);
        let ens = ModelEnsemble::from_members(vec![lin(vec![1.0, 0.0]), lin(vec![1.0, 0.0])]).unwrap();
        let pool = vec![vec![0.5], vec![0.5], vec![0.5]];
        let got = select_batch(&m, &ens, &pool, 1, 0.0, BatchStrategy::Greedy, 0).unwrap();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn dominant_candidate_selected_first() {
        // Candidate A (x = 1) has a larger residual and a larger feature norm
        // than B (x = 0.2) under every member.
        let m = lin(vec![0.0, 0.0]);
        let ens = ModelEnsemble::from_members(vec![lin(vec![0.1, 1.0]), lin(vec![0.2, 2.0])]).unwrap();
        let pool = vec![vec![0.2], vec![1.0]];
        for member in ens.members() {
            let single = ModelEnsemble::from_members(vec![member.clone(), member.clone()]).unwrap();
            let a = expected_model_change(&m, &single, &pool[1]).unwrap();
            let b = expected_model_change(&m, &single, &pool[0]).unwrap();
            assert!(a > b);
        }
        let got = select_batch(&m, &ens, &pool, 2, 0.01, BatchStrategy::Greedy, 0).unwrap();
        assert_eq!(got[0], 1);
    }

    #[test]
    fn budget_validation() {
        assert!(AlBudget::default().validate().is_ok());
        assert!(AlBudget { batch_fraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(AlBudget { max_rounds: 0, ..Default::default() }.validate().is_err());
        assert!(AlBudget { rel_rmse_eps: -1.0, ..Default::default() }.validate().is_err());
        assert!(AlBudget { ensemble_z: 1, ..Default::default() }.validate().is_err());
    }
}
