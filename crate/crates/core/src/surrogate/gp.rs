//! Gaussian-process regression with a stationary isotropic kernel.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng;
use crate::scalar::{dot, standardization, Real};

/// Diagonal jitter tried in order until the kernel matrix factorizes.
pub const JITTER_LADDER: [f64; 5] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Matern52,
    SquaredExponential,
}

impl KernelKind {
    /// Correlation at scaled distance `r = ‖a − b‖ / ℓ`.
    pub fn correlation<F: Real>(self, r: F) -> F {
        match self {
            KernelKind::Matern52 => {
                let s5 = F::lit(5.0).sqrt() * r;
                (F::one() + s5 + s5 * s5 / F::lit(3.0)) * (-s5).exp()
            }
            KernelKind::SquaredExponential => (-(r * r) / F::lit(2.0)).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct GpHyper<F> {
    pub length_scale: F,
    pub signal_var: F,
    pub noise_var: F,
}

impl<F: Real> GpHyper<F> {
    pub fn new(length_scale: F, signal_var: F, noise_var: F) -> Self {
        Self { length_scale, signal_var, noise_var }
    }

    fn to_log(self) -> [f64; 3] {
        [self.length_scale.as_f64().ln(), self.signal_var.as_f64().ln(), self.noise_var.as_f64().ln()]
    }

    fn from_log(t: &[f64; 3]) -> Self {
        Self::new(F::lit(t[0].exp()), F::lit(t[1].exp()), F::lit(t[2].exp()))
    }
}

/// `k(a, b) = σf² · ρ(‖a − b‖ / ℓ)`.
pub fn kernel<F: Real>(kind: KernelKind, hyper: &GpHyper<F>, a: &[F], b: &[F]) -> F {
    hyper.signal_var * kind.correlation(sq_dist(a, b).sqrt() / hyper.length_scale)
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Box constraints for hyperparameters (natural scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpBounds {
    pub length_scale: (f64, f64),
    pub signal_var: (f64, f64),
    pub noise_var: (f64, f64),
}

impl GpBounds {
    /// Defaults for inputs in the unit cube and standardized targets.
    pub fn for_dim(d: usize) -> Self {
        let diag = (d.max(1) as f64).sqrt();
        Self { length_scale: (1e-2, 2.0 * diag), signal_var: (5e-2, 20.0), noise_var: (1e-8, 1.0) }
    }

    fn log_box(&self) -> ([f64; 3], [f64; 3]) {
        let pairs = [self.length_scale, self.signal_var, self.noise_var];
        (pairs.map(|p| p.0.ln()), pairs.map(|p| p.1.ln()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSettings {
    pub kernel: KernelKind,
    pub restarts: usize,
    pub max_evals: usize,
    pub bounds: Option<GpBounds>,
    /// First start of the likelihood search; later restarts are random.
    pub warm_start: Option<GpHyper<f64>>,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self { kernel: KernelKind::Matern52, restarts: 5, max_evals: 150, bounds: None, warm_start: None }
    }
}

/// Merges identical input rows, averaging their targets.
pub fn dedupe<F: Real>(x: &[Vec<F>], y: &[F]) -> (Vec<Vec<F>>, Vec<F>) {
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut sums: Vec<(F, usize)> = Vec::new();
    for (xi, &yi) in x.iter().zip(y) {
        match rows.iter().position(|r| r == xi) {
            Some(k) => {
                sums[k].0 += yi;
                sums[k].1 += 1;
            }
            None => {
                rows.push(xi.clone());
                sums.push((yi, 1));
            }
        }
    }
    let ys = sums.into_iter().map(|(s, c)| s / F::from_usize_lossy(c)).collect();
    (rows, ys)
}

/// Fitted GP on standardized targets.
#[derive(Debug, Clone)]
pub struct GpSurrogate<F: Real> {
    x: Matrix<F>,
    kind: KernelKind,
    hyper: GpHyper<F>,
    jitter: F,
    y_mean: F,
    y_sd: F,
    chol: Cholesky<F>,
    alpha: Vec<F>,
    lml: F,
}

struct Factored<F: Real> {
    jitter: F,
    chol: Cholesky<F>,
    alpha: Vec<F>,
    lml: F,
}

fn factor<F: Real>(sq: &Matrix<F>, ys: &[F], kind: KernelKind, hyper: &GpHyper<F>) -> Option<Factored<F>> {
    let n = sq.rows();
    let mut base = Matrix::zeros(n, n);
    for i in 0..n {
        base[(i, i)] = hyper.signal_var;
        for j in 0..i {
            let k = hyper.signal_var * kind.correlation(sq[(i, j)].sqrt() / hyper.length_scale);
            base[(i, j)] = k;
            base[(j, i)] = k;
        }
    }
    for &j in &JITTER_LADDER {
        let jitter = F::lit(j);
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += hyper.noise_var + jitter;
        }
        if let Some(chol) = Cholesky::new(&k) {
            let alpha = chol.solve(ys);
            let half = F::lit(0.5);
            let lml = -half * dot(ys, &alpha)
                - half * chol.log_det()
                - half * F::from_usize_lossy(n) * F::lit((2.0 * std::f64::consts::PI).ln());
            if lml.is_finite() {
                return Some(Factored { jitter, chol, alpha, lml });
            }
        }
    }
    None
}

fn check_inputs<F: Real>(x: &[Vec<F>], y: &[F]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Empty("gp training set"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gp training set"));
    }
    Ok(x[0].len())
}

impl<F: Real> GpSurrogate<F> {
    /// Conditions on `(x, y)` with fixed hyperparameters.
    pub fn with_hyper(x: &[Vec<F>], y: &[F], kind: KernelKind, hyper: GpHyper<F>) -> Result<Self> {
        check_inputs(x, y)?;
        let (xs, ys) = dedupe(x, y);
        let (y_mean, y_sd) = standardization(&ys);
        let z: Vec<F> = ys.iter().map(|&v| (v - y_mean) / y_sd).collect();
        let xm = Matrix::from_rows(&xs)?;
        let sq = pairwise_sq(&xm);
        let f = factor(&sq, &z, kind, &hyper).ok_or(Error::NotPositiveDefinite(JITTER_LADDER[4]))?;
        Ok(Self { x: xm, kind, hyper, jitter: f.jitter, y_mean, y_sd, chol: f.chol, alpha: f.alpha, lml: f.lml })
    }

    pub fn hyper(&self) -> GpHyper<F> {
        self.hyper
    }

    pub fn kernel_kind(&self) -> KernelKind {
        self.kind
    }

    /// Jitter that was added on top of the noise variance.
    pub fn jitter(&self) -> F {
        self.jitter
    }

    /// Total diagonal term `σn² + jitter`.
    pub fn effective_noise(&self) -> F {
        self.hyper.noise_var + self.jitter
    }

    pub fn target_standardization(&self) -> (F, F) {
        (self.y_mean, self.y_sd)
    }

    pub fn n_train(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> F {
        self.lml
    }

    /// Prior standard deviation on the original target scale.
    pub fn prior_sd(&self) -> F {
        self.y_sd * self.hyper.signal_var.sqrt()
    }

    /// Posterior mean and standard deviation of the latent function at `x`,
    /// on the original target scale.
    pub fn posterior(&self, x: &[F]) -> Result<(F, F)> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let ks: Vec<F> = self.x.iter_rows().map(|r| kernel(self.kind, &self.hyper, r, x)).collect();
        let mu = dot(&ks, &self.alpha);
        let v = self.chol.solve_lower(&ks);
        let var = (self.hyper.signal_var - dot(&v, &v)).max(F::zero());
        Ok((self.y_mean + self.y_sd * mu, self.y_sd * var.sqrt()))
    }
}

fn pairwise_sq<F: Real>(x: &Matrix<F>) -> Matrix<F> {
    let n = x.rows();
    let mut sq = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let d = sq_dist(x.row(i), x.row(j));
            sq[(i, j)] = d;
            sq[(j, i)] = d;
        }
    }
    sq
}

/// Fits hyperparameters by maximizing the log marginal likelihood with a
/// bounded Nelder–Mead search in log space from several starts.
pub fn gp_fit<F: Real>(x: &[Vec<F>], y: &[F], settings: &GpSettings, seed: u64) -> Result<GpSurrogate<F>> {
    let d = check_inputs(x, y)?;
    let (xs, ys) = dedupe(x, y);
    let (y_mean, y_sd) = standardization(&ys);
    let z: Vec<F> = ys.iter().map(|&v| (v - y_mean) / y_sd).collect();
    let xm = Matrix::from_rows(&xs)?;
    let sq = pairwise_sq(&xm);
    let bounds = settings.bounds.unwrap_or_else(|| GpBounds::for_dim(d));
    let (lo, hi) = bounds.log_box();
    let kind = settings.kernel;

    let objective = |t: &[f64; 3]| -> f64 {
        factor(&sq, &z, kind, &GpHyper::<F>::from_log(t)).map_or(f64::INFINITY, |f| -f.lml.as_f64())
    };

    let first = match settings.warm_start {
        Some(h) => h.to_log(),
        None => GpHyper::new(0.5 * (d as f64).sqrt(), 1.0, 1e-2).to_log(),
    };
    let mut r = rng::rng(seed);
    let mut starts = vec![clamp3(first, &lo, &hi)];
    for _ in 1..settings.restarts.max(1) {
        starts.push(std::array::from_fn(|i| r.random_range(lo[i]..=hi[i])));
    }
    let mut best: Option<([f64; 3], f64)> = None;
    for s in starts {
        let (t, v) = nelder_mead(&objective, s, &lo, &hi, settings.max_evals);
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((t, v));
        }
    }
    let (t, _) = best.ok_or(Error::NotPositiveDefinite(JITTER_LADDER[4]))?;
    let hyper = GpHyper::from_log(&t);
    let f = factor(&sq, &z, kind, &hyper).ok_or(Error::NotPositiveDefinite(JITTER_LADDER[4]))?;
    Ok(GpSurrogate { x: xm, kind, hyper, jitter: f.jitter, y_mean, y_sd, chol: f.chol, alpha: f.alpha, lml: f.lml })
}

fn clamp3(t: [f64; 3], lo: &[f64; 3], hi: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| t[i].clamp(lo[i], hi[i]))
}

fn nelder_mead(
    f: &impl Fn(&[f64; 3]) -> f64,
    x0: [f64; 3],
    lo: &[f64; 3],
    hi: &[f64; 3],
    max_evals: usize,
) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)));
    for i in 0..3 {
        let step = 0.1 * (hi[i] - lo[i]);
        let mut p = x0;
        p[i] = if p[i] + step <= hi[i] { p[i] + step } else { p[i] - step };
        simplex.push((p, f(&p)));
    }
    let mut evals = 4;
    let cmp = |a: &([f64; 3], f64), b: &([f64; 3], f64)| a.1.total_cmp(&b.1);
    let towards = |a: &[f64; 3], b: &[f64; 3], t: f64| clamp3(std::array::from_fn(|i| a[i] + t * (b[i] - a[i])), lo, hi);
    while evals < max_evals {
        simplex.sort_by(cmp);
        let (fb, fw) = (simplex[0].1, simplex[3].1);
        if fw.is_finite() && (fw - fb).abs() <= 1e-10 * (1.0 + fb.abs()) {
            break;
        }
        let c: [f64; 3] = std::array::from_fn(|i| simplex[..3].iter().map(|p| p.0[i]).sum::<f64>() / 3.0);
        let worst = simplex[3].0;
        let xr = towards(&c, &worst, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = towards(&c, &worst, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < fw {
                let x = towards(&c, &xr, 0.5);
                (x, f(&x))
            } else {
                let x = towards(&c, &worst, 0.5);
                (x, f(&x))
            };
            evals += 1;
            if fc < fw.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    p.0 = towards(&best, &p.0, 0.5);
                    p.1 = f(&p.0);
                }
                evals += 3;
            }
        }
    }
    simplex.sort_by(cmp);
    simplex[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y = x.iter().map(|v| (6.0 * v[0]).sin()).collect();
        (x, y)
    }

    #[test]
    fn matern_at_zero_is_signal_var() {
        let h = GpHyper::new(0.3, 2.5, 0.0);
        assert_eq!(kernel(KernelKind::Matern52, &h, &[0.1, 0.2], &[0.1, 0.2]), 2.5);
        assert!(kernel(KernelKind::Matern52, &h, &[0.0], &[1.0]) < 2.5);
    }

    #[test]
    fn interpolates_noise_free_data() {
        let (x, y) = toy();
        let h = GpHyper::new(0.3, 1.0, 1e-10);
        let gp = GpSurrogate::with_hyper(&x, &y, KernelKind::Matern52, h).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (m, s) = gp.posterior(xi).unwrap();
            assert!((m - yi).abs() < 1e-6, "{m} vs {yi}");
            assert!(s < 1e-3);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let (x, y) = toy();
        let gp = GpSurrogate::with_hyper(&x, &y, KernelKind::Matern52, GpHyper::new(0.1, 1.0, 1e-6)).unwrap();
        let (m, s) = gp.posterior(&[1.0 + 10.0 * 0.1 * 3.0]).unwrap();
        let (mean, _) = gp.target_standardization();
        assert!((s / gp.prior_sd() - 1.0).abs() < 0.05);
        assert!((m - mean).abs() < 0.05 * gp.prior_sd());
    }

    #[test]
    fn fit_improves_on_start_and_respects_bounds() {
        let (x, y) = toy();
        let s = GpSettings::default();
        let gp = gp_fit(&x, &y, &s, 1).unwrap();
        let start = GpSurrogate::with_hyper(&x, &y, KernelKind::Matern52, GpHyper::new(0.5, 1.0, 1e-2)).unwrap();
        assert!(gp.log_marginal_likelihood() >= start.log_marginal_likelihood());
        let b = GpBounds::for_dim(1);
        let h = gp.hyper();
        assert!(h.length_scale >= b.length_scale.0 * 0.999 && h.length_scale <= b.length_scale.1 * 1.001);
        assert!(h.noise_var >= b.noise_var.0 * 0.999 && h.noise_var <= b.noise_var.1 * 1.001);
        let again = gp_fit(&x, &y, &s, 1).unwrap();
        assert_eq!(gp.hyper(), again.hyper());
    }

    #[test]
    fn duplicates_are_merged() {
        let x = vec![vec![0.1], vec![0.1], vec![0.9]];
        let y = vec![1.0, 3.0, 0.0];
        let (xs, ys) = dedupe(&x, &y);
        assert_eq!(xs.len(), 2);
        assert_eq!(ys, vec![2.0, 0.0]);
        let gp = GpSurrogate::with_hyper(&x, &y, KernelKind::Matern52, GpHyper::new(0.2, 1.0, 1e-10)).unwrap();
        assert_eq!(gp.n_train(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            gp_fit::<f64>(&[], &[], &GpSettings::default(), 0),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            gp_fit(&[vec![0.0]], &[f64::NAN], &GpSettings::default(), 0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let x: Vec<Vec<f32>> = (0..6).map(|i| vec![i as f32 / 5.0]).collect();
        let y: Vec<f32> = x.iter().map(|v| v[0] * v[0]).collect();
        let gp = gp_fit(&x, &y, &GpSettings::default(), 3).unwrap();
        let (m, _) = gp.posterior(&[0.5]).unwrap();
        assert!((m - 0.25).abs() < 0.1);
    }
}
