use flagtune_core::linreg::{bootstrap_ensemble, fit_sgd, fit_sgd_traced, FeatureMap, LinearModel, SgdParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn uniform_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect()
}

#[test]
fn fits_exact_line_like_least_squares() {
    let xs = uniform_points(100, 1, 1);
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] + 1.0).collect();

    let a = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i][0] });
    let b = DVector::from_vec(ys.clone());
    let beta = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * b));
    assert!((beta[0] - 1.0).abs() < 1e-10 && (beta[1] - 2.0).abs() < 1e-10);

    let params = SgdParams { lr: 0.1, epochs: 2000, ..SgdParams::default() };
    let m = fit_sgd(&xs, &ys, FeatureMap::linear(1), &params).unwrap();
    let ols: Vec<f64> = xs.iter().map(|x| beta[0] + beta[1] * x[0]).collect();
    let rmse = (xs.iter().zip(&ols).map(|(x, o)| (m.predict(x).unwrap() - o).powi(2)).sum::<f64>() / 100.0).sqrt();
    assert!(rmse < 1e-2, "rmse {rmse}");
    assert!(m.rmse(&xs, &ys).unwrap() < 1e-2);
}

#[test]
fn same_seed_same_weights() {
    let xs = uniform_points(60, 3, 2);
    let ys: Vec<f64> = xs.iter().map(|x| x[0] - x[1] * x[1] + 0.3 * x[2]).collect();
    let p = SgdParams::default().with_seed(9);
    let a = fit_sgd(&xs, &ys, FeatureMap::quadratic(3), &p).unwrap();
    let b = fit_sgd(&xs, &ys, FeatureMap::quadratic(3), &p).unwrap();
    assert_eq!(a.weights(), b.weights());
    let c = fit_sgd(&xs, &ys, FeatureMap::quadratic(3), &p.with_seed(10)).unwrap();
    assert_ne!(a.weights(), c.weights());
}

#[test]
fn training_loss_non_increasing_on_linear_data() {
    let xs = uniform_points(100, 4, 3);
    let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x[0] - 2.0 * x[1] + 0.5 * x[3]).collect();
    for lr in [0.01, 0.005] {
        let p = SgdParams { lr, ..SgdParams::default() };
        let (_, trace) = fit_sgd_traced(&xs, &ys, FeatureMap::linear(4), &p).unwrap();
        assert_eq!(trace.len(), 200);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }
}

#[test]
fn ensemble_agrees_on_noiseless_data() {
    let xs = uniform_points(80, 2, 4);
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 + x[0] - x[1]).collect();
    let sd = {
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        (ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64).sqrt()
    };
    let p = SgdParams { lr: 0.1, epochs: 500, ..SgdParams::default() };
    let e = bootstrap_ensemble(&xs, &ys, 4, FeatureMap::quadratic(2), &p, 5).unwrap();
    assert_eq!(e.len(), 4);
    for x in &xs {
        let preds = e.predictions(x).unwrap();
        let spread = preds.iter().cloned().fold(f64::MIN, f64::max) - preds.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.1 * sd, "spread {spread} vs sd {sd}");
    }
}

fn half_sq_loss(w: &[f64], map: FeatureMap, x: &[f64], y_std: f64) -> f64 {
    let phi = map.expand(x).unwrap();
    let f: f64 = w.iter().zip(&phi).map(|(a, b)| a * b).sum();
    0.5 * (f - y_std).powi(2)
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences(
        w in prop::collection::vec(-2.0f64..2.0, 7),
        x in prop::collection::vec(0.0f64..1.0, 3),
        y in -3.0f64..3.0,
        mean in -1.0f64..1.0,
        sd in 0.5f64..2.0,
    ) {
        let map = FeatureMap::quadratic(3);
        let m = LinearModel::from_weights(w.clone(), map, mean, sd).unwrap();
        let g = m.loss_gradient(&x, y).unwrap();
        let y_std = (y - mean) / sd;
        let h = 1e-6;
        for j in 0..w.len() {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (half_sq_loss(&up, map, &x, y_std) - half_sq_loss(&dn, map, &x, y_std)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "j={} fd={} g={}", j, fd, g[j]);
        }
    }

    #[test]
    fn prediction_matches_matrix_product(
        w in prop::collection::vec(-2.0f64..2.0, 1 + 4 + 4 + 6),
        x in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let map = FeatureMap::new(4, 2, true).unwrap();
        let m = LinearModel::from_weights(w.clone(), map, 0.0, 1.0).unwrap();
        let phi = DVector::from_vec(map.expand(&x).unwrap());
        let oracle = DVector::from_vec(w).dot(&phi);
        prop_assert!((m.predict(&x).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn standardization_round_trip(mean in -100.0f64..100.0, sd in 0.01f64..50.0, z in -10.0f64..10.0) {
        let m = LinearModel::from_weights(vec![0.0, 0.0], FeatureMap::linear(1), mean, sd).unwrap();
        let y = m.destandardize(z);
        prop_assert!((m.standardize(y) - z).abs() <= 1e-12 * (1.0 + z.abs()));
        prop_assert!((m.destandardize(m.standardize(y)) - y).abs() <= 1e-12 * (1.0 + y.abs()));
    }

    #[test]
    fn prediction_linear_in_weights(
        w1 in prop::collection::vec(-2.0f64..2.0, 4),
        w2 in prop::collection::vec(-2.0f64..2.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        x in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let map = FeatureMap::linear(3);
        let p = |w: Vec<f64>| LinearModel::from_weights(w, map, 0.0, 1.0).unwrap().predict_standardized(&x).unwrap();
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(u, v)| a * u + b * v).collect();
        let lhs = p(mix);
        let rhs = a * p(w1) + b * p(w2);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
