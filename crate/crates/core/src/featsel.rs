//! Lasso flag selection: cyclic coordinate descent with soft-thresholding,
//! k-fold grid search over the penalty, and flag subset extraction.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::FlagSpace;
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::{standardization, Real};

/// Scaling of the squared-error term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LassoScaling {
    /// `(1/2n)‖y − Xw‖² + λ‖w‖₁`, so λ does not depend on the sample count.
    #[default]
    PerSample,
    /// `‖y − Xw‖² + λ‖w‖₁`.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LassoParams<F> {
    pub lambda: F,
    pub tol: F,
    pub max_sweeps: usize,
    pub scaling: LassoScaling,
}

impl<F: Real> LassoParams<F> {
    pub fn new(lambda: F) -> Self {
        Self { lambda, tol: F::lit(1e-6), max_sweeps: 1000, scaling: LassoScaling::PerSample }
    }
}

impl<F: Real> Default for LassoParams<F> {
    fn default() -> Self {
        Self::new(F::lit(0.01))
    }
}

/// Weights are on the standardized-target scale, for raw (uncentered)
/// feature columns; the intercept is carried by the column and target means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct LassoFit<F> {
    pub weights: Vec<F>,
    pub lambda: F,
    pub n_iter: usize,
    pub converged: bool,
    pub x_means: Vec<F>,
    pub y_mean: F,
    pub y_sd: F,
    /// Objective before the first sweep and after each sweep.
    pub objective_trace: Vec<F>,
}

impl<F: Real> LassoFit<F> {
    pub fn support(&self) -> Vec<usize> {
        self.weights.iter().enumerate().filter(|(_, w)| **w != F::zero()).map(|(i, _)| i).collect()
    }

    pub fn predict(&self, x: &[F]) -> Result<F> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.len() });
        }
        let z: F = self.weights.iter().zip(x).zip(&self.x_means).map(|((w, v), m)| *w * (*v - *m)).sum();
        Ok(self.y_mean + self.y_sd * z)
    }

    /// Weights rescaled to raw target units.
    pub fn raw_weights(&self) -> Vec<F> {
        self.weights.iter().map(|&w| w * self.y_sd).collect()
    }
}

fn soft_threshold<F: Real>(rho: F, lambda: F) -> F {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        F::zero()
    }
}

fn effective_lambda<F: Real>(params: &LassoParams<F>, n: usize) -> F {
    match params.scaling {
        LassoScaling::PerSample => params.lambda,
        LassoScaling::Sum => params.lambda / (F::lit(2.0) * F::from_usize_lossy(n)),
    }
}

struct Prepared<F> {
    xc: Matrix<F>,
    z: Vec<F>,
    x_means: Vec<F>,
    y_mean: F,
    y_sd: F,
}

fn prepare<F: Real>(x: &Matrix<F>, y: &[F]) -> Result<Prepared<F>> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("design matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("targets"));
    }
    let nf = F::from_usize_lossy(n);
    let x_means: Vec<F> = (0..d).map(|j| x.column(j).into_iter().sum::<F>() / nf).collect();
    let xc = Matrix::from_fn(n, d, |i, j| x[(i, j)] - x_means[j]);
    let (y_mean, y_sd) = standardization(y);
    let z = y.iter().map(|&v| (v - y_mean) / y_sd).collect();
    Ok(Prepared { xc, z, x_means, y_mean, y_sd })
}

/// `max_j |X_jᵀ y| / n` on centered columns and standardized targets: the
/// smallest penalty at which every weight is zero.
pub fn lambda_max<F: Real>(x: &Matrix<F>, y: &[F]) -> Result<F> {
    let p = prepare(x, y)?;
    let nf = F::from_usize_lossy(x.rows());
    Ok((0..x.cols())
        .map(|j| (0..x.rows()).map(|i| p.xc[(i, j)] * p.z[i]).sum::<F>().abs() / nf)
        .fold(F::zero(), F::max))
}

/// Cyclic coordinate descent. Converged when the largest weight change in a
/// sweep falls below `tol`.
pub fn fit_lasso<F: Real>(x: &Matrix<F>, y: &[F], params: &LassoParams<F>) -> Result<LassoFit<F>> {
    if !(params.lambda >= F::zero()) {
        return Err(Error::Config("lambda must be non-negative".into()));
    }
    let Prepared { xc, z, x_means, y_mean, y_sd } = prepare(x, y)?;
    let (n, d) = (xc.rows(), xc.cols());
    let nf = F::from_usize_lossy(n);
    let lambda = effective_lambda(params, n);
    let col_sq: Vec<F> = (0..d).map(|j| (0..n).map(|i| xc[(i, j)] * xc[(i, j)]).sum::<F>() / nf).collect();
    // Columns with (numerically) zero variance never enter the model.
    let active: Vec<bool> = col_sq.iter().map(|&c| c > F::epsilon()).collect();

    let mut w = vec![F::zero(); d];
    let mut r = z.clone();
    let half = F::lit(0.5);
    let objective = |r: &[F], w: &[F]| -> F {
        r.iter().map(|&v| v * v).sum::<F>() * half / nf + lambda * w.iter().map(|v| v.abs()).sum::<F>()
    };
    let mut trace = vec![objective(&r, &w)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < params.max_sweeps {
        sweeps += 1;
        let mut max_delta = F::zero();
        for j in 0..d {
            if !active[j] {
                continue;
            }
            let rho = (0..n).map(|i| xc[(i, j)] * r[i]).sum::<F>() / nf + col_sq[j] * w[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - w[j];
            if delta != F::zero() {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= xc[(i, j)] * delta;
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(&r, &w));
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit { weights: w, lambda: params.lambda, n_iter: sweeps, converged, x_means, y_mean, y_sd, objective_trace: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct GridSearch<F> {
    pub best_lambda: F,
    /// `(λ, mean cross-validated MSE)` in grid order.
    pub scores: Vec<(F, F)>,
}

/// k-fold cross-validation over `grid`; folds come from a seeded shuffle.
/// Returns the λ with the lowest mean squared prediction error, preferring
/// the smaller λ on ties.
pub fn grid_search_lambda<F: Real>(
    x: &Matrix<F>,
    y: &[F],
    grid: &[F],
    folds: usize,
    seed: u64,
    base: &LassoParams<F>,
) -> Result<GridSearch<F>> {
    if grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    let n = x.rows();
    if folds < 2 || n < folds {
        return Err(Error::Config(format!("{folds} folds need at least 2 folds and {folds} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % folds;
        }
        f
    };
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let params = LassoParams { lambda, ..*base };
        let mut sse = F::zero();
        for k in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
            let ty: Vec<F> = train.iter().map(|&i| y[i]).collect();
            let fit = fit_lasso(&x.select_rows(&train), &ty, &params)?;
            for &i in &test {
                let e = fit.predict(x.row(i))? - y[i];
                sse += e * e;
            }
        }
        scores.push((lambda, sse / F::from_usize_lossy(n)));
    }
    let best_lambda = scores
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 < best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .map(|(l, _)| l)
        .expect("grid is non-empty");
    Ok(GridSearch { best_lambda, scores })
}

/// Flags kept by selection, in flag-space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSubset {
    pub names: Vec<String>,
    /// True when no weight passed the threshold and the top 10% by
    /// magnitude were kept instead.
    pub fallback: bool,
}

/// Keeps flags with `|w_j| > threshold`. An empty result falls back to the
/// `⌈0.1·d⌉` largest magnitudes.
pub fn select_flags<F: Real>(fit: &LassoFit<F>, space: &FlagSpace, threshold: F) -> Result<FlagSubset> {
    let names = space.names();
    if names.len() != fit.weights.len() {
        return Err(Error::DimensionMismatch { expected: names.len(), got: fit.weights.len() });
    }
    let mut keep: Vec<usize> = (0..names.len()).filter(|&j| fit.weights[j].abs() > threshold).collect();
    let fallback = keep.is_empty();
    if fallback {
        let k = (names.len() as f64 * 0.1).ceil() as usize;
        let mut idx: Vec<usize> = (0..names.len()).collect();
        idx.sort_by(|&a, &b| {
            fit.weights[b]
                .abs()
                .partial_cmp(&fit.weights[a].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        keep = idx.into_iter().take(k.max(1)).collect();
        keep.sort_unstable();
    }
    Ok(FlagSubset { names: keep.into_iter().map(|j| names[j].clone()).collect(), fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flagspace::FlagSpec;

    fn space(d: usize) -> FlagSpace {
        FlagSpace::new((0..d).map(|i| FlagSpec::continuous(format!("f{i}"), 0.0, 1.0, 0.5).unwrap()).collect()).unwrap()
    }

    fn fit_with(weights: Vec<f64>) -> LassoFit<f64> {
        let d = weights.len();
        LassoFit {
            weights,
            lambda: 0.01,
            n_iter: 1,
            converged: true,
            x_means: vec![0.0; d],
            y_mean: 0.0,
            y_sd: 1.0,
            objective_trace: vec![],
        }
    }

    #[test]
    fn select_nonzero_weight() {
        let s = select_flags(&fit_with(vec![0.0, 0.5, 0.0]), &space(3), 0.0).unwrap();
        assert_eq!(s.names, ["f1"]);
        assert!(!s.fallback);
    }

    #[test]
    fn all_zero_weights_fall_back() {
        let s = select_flags(&fit_with(vec![0.0; 25]), &space(25), 0.0).unwrap();
        assert!(s.fallback);
        assert_eq!(s.names, ["f0", "f1", "f2"]);
    }

    #[test]
    fn fallback_keeps_largest_in_space_order() {
        let mut w = vec![0.0; 10];
        w[7] = 0.002;
        let s = select_flags(&fit_with(w), &space(10), 0.01).unwrap();
        assert!(s.fallback);
        assert_eq!(s.names, ["f7"]);
    }

    #[test]
    fn zero_variance_column_gets_zero_weight() {
        let x = Matrix::from_fn(20, 3, |i, j| match j {
            0 => (i as f64 * 0.37).fract(),
            1 => 0.5,
            _ => (i as f64 * 0.71).fract(),
        });
        let y: Vec<f64> = (0..20).map(|i| 2.0 * x[(i, 0)] - x[(i, 2)]).collect();
        let fit = fit_lasso(&x, &y, &LassoParams::new(0.0)).unwrap();
        assert_eq!(fit.weights[1], 0.0);
        assert!(fit.weights[0] > 0.0 && fit.weights[2] < 0.0);
    }

    #[test]
    fn errors() {
        let x = Matrix::from_fn(1, 2, |_, _| 0.5);
        assert!(matches!(fit_lasso(&x, &[1.0], &LassoParams::default()), Err(Error::TooFewSamples { .. })));
        let x = Matrix::from_fn(3, 1, |i, _| if i == 1 { f64::NAN } else { 0.5 });
        assert!(matches!(fit_lasso(&x, &[1.0, 2.0, 3.0], &LassoParams::default()), Err(Error::NonFinite(_))));
        let x = Matrix::from_fn(4, 1, |i, _| i as f64 / 4.0);
        assert!(grid_search_lambda(&x, &[1.0, 2.0, 3.0, 4.0], &[], 2, 0, &LassoParams::default()).is_err());
    }

    #[test]
    fn single_element_grid() {
        let x = Matrix::from_fn(10, 2, |i, j| ((i * (j + 3)) as f64 * 0.13).fract());
        let y: Vec<f64> = (0..10).map(|i| x[(i, 0)]).collect();
        let g = grid_search_lambda(&x, &y, &[0.05], 3, 1, &LassoParams::default()).unwrap();
        assert_eq!(g.best_lambda, 0.05);
    }

    #[test]
    fn sum_scaling_matches_per_sample_with_rescaled_lambda() {
        let x = Matrix::from_fn(30, 3, |i, j| ((i * 7 + j * 13) as f64 * 0.137).fract());
        let y: Vec<f64> = (0..30).map(|i| x[(i, 0)] - 0.5 * x[(i, 1)]).collect();
        let a = fit_lasso(&x, &y, &LassoParams::new(0.02)).unwrap();
        let b = fit_lasso(
            &x,
            &y,
            &LassoParams { lambda: 0.02 * 60.0, scaling: LassoScaling::Sum, ..LassoParams::default() },
        )
        .unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_over_f32() {
        let x = Matrix::from_fn(40, 2, |i, j| ((i * (j + 5)) as f32 * 0.173).fract());
        let y: Vec<f32> = (0..40).map(|i| 3.0 * x[(i, 0)]).collect();
        let fit = fit_lasso(&x, &y, &LassoParams::new(0.01f32)).unwrap();
        assert_eq!(fit.support(), vec![0]);
    }
}
