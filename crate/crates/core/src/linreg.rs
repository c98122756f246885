//! Polynomial-feature linear regression trained by minibatch SGD, its
//! per-sample squared-loss gradient, and bootstrap ensembles.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{dot, standardization, Real};

/// Polynomial expansion of an encoded configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub input_dim: usize,
    pub degree: u8,
    pub interactions: bool,
}

impl FeatureMap {
    pub fn new(input_dim: usize, degree: u8, interactions: bool) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        Ok(Self { input_dim, degree, interactions: interactions && degree == 2 })
    }

    /// Degree 2 without cross terms.
    pub fn quadratic(input_dim: usize) -> Self {
        Self { input_dim, degree: 2, interactions: false }
    }

    pub fn linear(input_dim: usize) -> Self {
        Self { input_dim, degree: 1, interactions: false }
    }

    pub fn output_len(&self) -> usize {
        let d = self.input_dim;
        match (self.degree, self.interactions) {
            (1, _) => 1 + d,
            (_, false) => 1 + 2 * d,
            (_, true) => 1 + 2 * d + d * d.saturating_sub(1) / 2,
        }
    }

    pub fn expand<F: Real>(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut phi = Vec::with_capacity(self.output_len());
        phi.push(F::one());
        phi.extend_from_slice(x);
        if self.degree == 2 {
            phi.extend(x.iter().map(|&v| v * v));
            if self.interactions {
                for i in 0..x.len() {
                    for j in i + 1..x.len() {
                        phi.push(x[i] * x[j]);
                    }
                }
            }
        }
        Ok(phi)
    }
}

/// `[1, x]`, then squares for degree 2, then `x_i x_j (i<j)` with interactions.
pub fn poly_features<F: Real>(x: &[F], degree: u8, interactions: bool) -> Result<Vec<F>> {
    FeatureMap::new(x.len(), degree, interactions)?.expand(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real", default)]
pub struct SgdParams<F> {
    pub lr: F,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl<F: Real> Default for SgdParams<F> {
    fn default() -> Self {
        Self { lr: F::lit(0.01), epochs: 200, batch: 32, seed: 0 }
    }
}

impl<F: Real> SgdParams<F> {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `f(x) = W·φ(x)` on standardized targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LinearModel<F> {
    weights: Vec<F>,
    feature_map: FeatureMap,
    y_mean: F,
    y_sd: F,
}

impl<F: Real> LinearModel<F> {
    /// Model with explicit weights and target standardization.
    pub fn from_weights(weights: Vec<F>, feature_map: FeatureMap, y_mean: F, y_sd: F) -> Result<Self> {
        if weights.len() != feature_map.output_len() {
            return Err(Error::DimensionMismatch { expected: feature_map.output_len(), got: weights.len() });
        }
        if !(y_sd > F::zero()) {
            return Err(Error::Config("target sd must be positive".into()));
        }
        Ok(Self { weights, feature_map, y_mean, y_sd })
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim
    }

    pub fn target_standardization(&self) -> (F, F) {
        (self.y_mean, self.y_sd)
    }

    pub fn standardize(&self, y: F) -> F {
        (y - self.y_mean) / self.y_sd
    }

    pub fn destandardize(&self, z: F) -> F {
        z * self.y_sd + self.y_mean
    }

    pub fn features(&self, x: &[F]) -> Result<Vec<F>> {
        self.feature_map.expand(x)
    }

    /// `W·φ(x)` in standardized units.
    pub fn predict_standardized(&self, x: &[F]) -> Result<F> {
        Ok(dot(&self.weights, &self.features(x)?))
    }

    pub fn predict(&self, x: &[F]) -> Result<F> {
        Ok(self.destandardize(self.predict_standardized(x)?))
    }

    /// Gradient of `½(f(x) − y)²` with respect to `W`: `(f(x) − y)·φ(x)`,
    /// with `y_label` given in raw units.
    pub fn loss_gradient(&self, x: &[F], y_label: F) -> Result<Vec<F>> {
        let phi = self.features(x)?;
        Ok(gradient_from_features(&self.weights, &phi, self.standardize(y_label)))
    }

    /// One SGD step on a single example.
    pub fn sgd_step(&mut self, x: &[F], y_label: F, lr: F) -> Result<()> {
        let phi = self.features(x)?;
        let r = dot(&self.weights, &phi) - self.standardize(y_label);
        for (w, p) in self.weights.iter_mut().zip(&phi) {
            *w -= lr * r * *p;
        }
        Ok(())
    }

    pub fn rmse(&self, xs: &[Vec<F>], ys: &[F]) -> Result<F> {
        if xs.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let mut s = F::zero();
        for (x, &y) in xs.iter().zip(ys) {
            let e = self.predict(x)? - y;
            s += e * e;
        }
        Ok((s / F::from_usize_lossy(xs.len())).sqrt())
    }
}

pub(crate) fn gradient_from_features<F: Real>(weights: &[F], phi: &[F], y_std: F) -> Vec<F> {
    let r = dot(weights, phi) - y_std;
    phi.iter().map(|&p| r * p).collect()
}

fn check_data<F: Real>(xs: &[Vec<F>], ys: &[F], map: &FeatureMap) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: xs.len() });
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != map.input_dim) {
        return Err(Error::DimensionMismatch { expected: map.input_dim, got: x.len() });
    }
    Ok(())
}

/// Fits a model by minibatch SGD on squared error, starting from zero
/// weights. Deterministic given `params.seed`.
pub fn fit_sgd<F: Real>(xs: &[Vec<F>], ys: &[F], map: FeatureMap, params: &SgdParams<F>) -> Result<LinearModel<F>> {
    fit_sgd_traced(xs, ys, map, params).map(|(m, _)| m)
}

/// Like [`fit_sgd`], also returning the training loss `½·mean(r²)` after
/// each epoch.
pub fn fit_sgd_traced<F: Real>(
    xs: &[Vec<F>],
    ys: &[F],
    map: FeatureMap,
    params: &SgdParams<F>,
) -> Result<(LinearModel<F>, Vec<F>)> {
    check_data(xs, ys, &map)?;
    if params.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (y_mean, y_sd) = standardization(ys);
    let z: Vec<F> = ys.iter().map(|&y| (y - y_mean) / y_sd).collect();
    let phis = xs.iter().map(|x| map.expand(x)).collect::<Result<Vec<_>>>()?;
    let p = map.output_len();
    let mut w = vec![F::zero(); p];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = rng::rng(params.seed);
    let mut grad = vec![F::zero(); p];
    let mut trace = Vec::with_capacity(params.epochs);
    let half = F::lit(0.5);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch) {
            grad.iter_mut().for_each(|g| *g = F::zero());
            for &i in chunk {
                let r = dot(&w, &phis[i]) - z[i];
                for (g, &f) in grad.iter_mut().zip(&phis[i]) {
                    *g += r * f;
                }
            }
            let step = params.lr / F::from_usize_lossy(chunk.len());
            for (wj, g) in w.iter_mut().zip(&grad) {
                *wj -= step * *g;
            }
        }
        let loss = phis
            .iter()
            .zip(&z)
            .map(|(phi, &zi)| {
                let r = dot(&w, phi) - zi;
                r * r
            })
            .sum::<F>()
            * half
            / F::from_usize_lossy(phis.len());
        trace.push(loss);
    }
    Ok((LinearModel { weights: w, feature_map: map, y_mean, y_sd }, trace))
}

/// Models fit on bootstrap resamples of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ModelEnsemble<F> {
    members: Vec<LinearModel<F>>,
}

impl<F: Real> ModelEnsemble<F> {
    pub fn from_members(members: Vec<LinearModel<F>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config("an ensemble needs at least two members".into()));
        }
        let map = members[0].feature_map;
        if members.iter().any(|m| m.feature_map != map) {
            return Err(Error::Config("ensemble members must share one feature map".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[LinearModel<F>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Raw-unit predictions of every member.
    pub fn predictions(&self, x: &[F]) -> Result<Vec<F>> {
        self.members.iter().map(|m| m.predict(x)).collect()
    }

    pub fn mean_prediction(&self, x: &[F]) -> Result<F> {
        let p = self.predictions(x)?;
        Ok(p.iter().copied().sum::<F>() / F::from_usize_lossy(p.len()))
    }
}

/// Fits `z` members, each on `n` samples drawn with replacement using a
/// member-specific sub-seed of `seed`.
pub fn bootstrap_ensemble<F: Real>(
    xs: &[Vec<F>],
    ys: &[F],
    z: usize,
    map: FeatureMap,
    params: &SgdParams<F>,
    seed: u64,
) -> Result<ModelEnsemble<F>> {
    check_data(xs, ys, &map)?;
    if z < 2 {
        return Err(Error::Config("ensemble size must be at least 2".into()));
    }
    let n = xs.len();
    let members = (0..z as u64)
        .map(|member| {
            let mut r = rng::sub_rng(seed, member);
            let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let bx: Vec<Vec<F>> = idx.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<F> = idx.iter().map(|&i| ys[i]).collect();
            let p = SgdParams { seed: rng::derive(seed, member + 0x1000), ..*params };
            fit_sgd(&bx, &by, map, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelEnsemble::from_members(members)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_feature_examples() {
        assert_eq!(poly_features(&[0.0, 0.0], 2, false).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            poly_features(&[0.5, 1.0], 2, true).unwrap(),
            vec![1.0, 0.5, 1.0, 0.25, 1.0, 0.5]
        );
        assert_eq!(poly_features(&[0.3f32, 0.7], 1, false).unwrap(), vec![1.0, 0.3, 0.7]);
        assert!(matches!(poly_features(&[0.1], 3, false), Err(Error::UnsupportedDegree(3))));
        for d in 0..8 {
            let x = vec![0.5; d];
            assert_eq!(poly_features(&x, 2, true).unwrap().len(), 1 + d + d + d * d.saturating_sub(1) / 2);
        }
    }

    #[test]
    fn predict_hand_set_weights() {
        let m = LinearModel::from_weights(vec![1.0, 2.0], FeatureMap::linear(1), 0.0, 1.0).unwrap();
        assert_eq!(m.predict(&[3.0]).unwrap(), 7.0);
        assert!(matches!(m.predict(&[3.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_weights_predict_mean() {
        let m = LinearModel::from_weights(vec![0.0; 5], FeatureMap::quadratic(2), 4.5, 2.0).unwrap();
        assert_eq!(m.predict(&[0.1, 0.9]).unwrap(), 4.5);
    }

    #[test]
    fn loss_gradient_substitution() {
        // W = (5, 0) with φ = (1, 2) gives f = 5.
        let m = LinearModel::from_weights(vec![5.0, 0.0], FeatureMap::linear(1), 0.0, 1.0).unwrap();
        assert_eq!(m.loss_gradient(&[2.0], 3.0).unwrap(), vec![2.0, 4.0]);
        assert_eq!(m.loss_gradient(&[2.0], 5.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn constant_targets_predict_constant() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let ys = vec![3.25; 10];
        let m = fit_sgd(&xs, &ys, FeatureMap::quadratic(1), &SgdParams::default()).unwrap();
        assert_eq!(m.target_standardization(), (3.25, 1.0));
        for x in &xs {
            assert!((m.predict(x).unwrap() - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_rejects_bad_data() {
        let p = SgdParams::<f64>::default();
        assert!(matches!(
            fit_sgd(&[vec![0.1]], &[1.0], FeatureMap::linear(1), &p),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            fit_sgd(&[vec![0.1], vec![0.2]], &[1.0, f64::NAN], FeatureMap::linear(1), &p),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn ensemble_size_and_determinism() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, (i * 7 % 20) as f64 / 20.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x[0] - 2.0 * x[1]).collect();
        let p = SgdParams::default();
        let a = bootstrap_ensemble(&xs, &ys, 4, FeatureMap::quadratic(2), &p, 11).unwrap();
        let b = bootstrap_ensemble(&xs, &ys, 4, FeatureMap::quadratic(2), &p, 11).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert!(bootstrap_ensemble(&xs, &ys, 1, FeatureMap::quadratic(2), &p, 11).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let m = LinearModel::from_weights(vec![0.5, -1.25, 3.0], FeatureMap::quadratic(1), 2.0, 0.5).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: LinearModel<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
