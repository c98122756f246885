//! Expected improvement and its maximization over the unit cube.

use serde::{Deserialize, Serialize};

use super::gp::GpSurrogate;
use super::sampling::SobolSequence;
use crate::error::Result;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Minimize,
    Maximize,
}

impl Direction {
    /// Maps a metric to the maximization scale.
    pub fn to_max<F: Real>(self, v: F) -> F {
        match self {
            Direction::Maximize => v,
            Direction::Minimize => -v,
        }
    }

    /// True if `a` is strictly better than `b`.
    pub fn better<F: Real>(self, a: F, b: F) -> bool {
        self.to_max(a) > self.to_max(b)
    }
}

pub fn normal_pdf<F: Real>(z: F) -> F {
    F::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt()) * (-(z * z) / F::lit(2.0)).exp()
}

pub fn normal_cdf<F: Real>(z: F) -> F {
    F::lit(0.5 * libm::erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

/// Expected improvement over `f_best` by at least `xi`, for a posterior
/// `N(mu, sigma²)`. With `Minimize`, `mu` and `f_best` are on the metric
/// scale and improvement means going lower.
pub fn expected_improvement<F: Real>(mu: F, sigma: F, f_best: F, xi: F, direction: Direction) -> F {
    let imp = direction.to_max(mu) - direction.to_max(f_best) - xi;
    if !(sigma > F::zero()) {
        return imp.max(F::zero());
    }
    let z = imp / sigma;
    (imp * normal_cdf(z) + sigma * normal_pdf(z)).max(F::zero())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqSettings {
    pub candidates: usize,
    pub refine_top: usize,
    pub refine_passes: usize,
    pub xi: f64,
    /// Interval width at which golden-section search stops.
    pub line_tol: f64,
}

impl Default for AcqSettings {
    fn default() -> Self {
        Self { candidates: 1024, refine_top: 10, refine_passes: 2, xi: 0.01, line_tol: 1e-3 }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: &mut impl FnMut(f64) -> f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Maximizes EI: scores a digitally shifted Sobol set, then refines the best
/// few candidates by coordinate-wise golden-section search. Returns the
/// argmax and its EI.
pub fn maximize_ei<F: Real>(
    gp: &GpSurrogate<F>,
    f_best: F,
    direction: Direction,
    settings: &AcqSettings,
    seed: u64,
) -> Result<(Vec<F>, F)> {
    let d = gp.dim();
    let xi = F::lit(settings.xi);
    let ei = |x: &[F]| -> Result<F> {
        let (m, s) = gp.posterior(x)?;
        Ok(expected_improvement(m, s, f_best, xi, direction))
    };
    let mut seq = SobolSequence::shifted(d, seed)?;
    let mut scored: Vec<(Vec<F>, F)> = Vec::with_capacity(settings.candidates);
    for _ in 0..settings.candidates.max(1) {
        let p: Vec<F> = seq.next_point();
        let v = ei(&p)?;
        scored.push((p, v));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(settings.refine_top.max(1));

    let mut best: Option<(Vec<F>, F)> = None;
    for (mut x, mut v) in scored {
        for _ in 0..settings.refine_passes {
            for j in 0..d {
                let mut err = None;
                let mut line = |t: f64| {
                    let mut y = x.clone();
                    y[j] = F::lit(t);
                    match ei(&y) {
                        Ok(e) => e.as_f64(),
                        Err(e) => {
                            err = Some(e);
                            f64::NEG_INFINITY
                        }
                    }
                };
                let (t, ft) = golden_max(&mut line, settings.line_tol);
                if let Some(e) = err {
                    return Err(e);
                }
                if F::lit(ft) > v {
                    x[j] = F::lit(t);
                    v = ei(&x)?;
                }
            }
        }
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((x, v));
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::gp::{GpHyper, KernelKind};

    #[test]
    fn ei_zero_sigma_is_plain_improvement() {
        assert_eq!(expected_improvement(2.0, 0.0, 1.0, 0.0, Direction::Maximize), 1.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0, 0.0, Direction::Maximize), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0, 0.0, Direction::Minimize), 0.5);
    }

    #[test]
    fn ei_closed_form_at_zero_gap() {
        let v = expected_improvement(1.0, 2.0, 1.0, 0.0, Direction::Maximize);
        assert!((v - 2.0 * normal_pdf(0.0f64)).abs() < 1e-15);
    }

    #[test]
    fn cdf_symmetry() {
        for z in [-3.0, -1.0, 0.0, 0.7, 2.5] {
            assert!((normal_cdf(z) + normal_cdf(-z) - 1.0f64).abs() < 1e-15);
        }
        assert!((normal_cdf(1.959_963_984_540_054f64) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_interior_max() {
        let (t, _) = golden_max(&mut |x| -(x - 0.3) * (x - 0.3), 1e-6);
        assert!((t - 0.3).abs() < 1e-5);
    }

    #[test]
    fn maximizer_beats_sobol_and_is_deterministic() {
        let x: Vec<Vec<f64>> = vec![vec![0.1, 0.1], vec![0.9, 0.2], vec![0.5, 0.8], vec![0.3, 0.6]];
        let y: Vec<f64> = x.iter().map(|p| (p[0] - 0.6).powi(2) + (p[1] - 0.4).powi(2)).collect();
        let gp = GpSurrogate::with_hyper(&x, &y, KernelKind::Matern52, GpHyper::new(0.4, 1.0, 1e-6)).unwrap();
        let best = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let s = AcqSettings::default();
        let (p, v) = maximize_ei(&gp, best, Direction::Minimize, &s, 5).unwrap();
        let (p2, v2) = maximize_ei(&gp, best, Direction::Minimize, &s, 5).unwrap();
        assert_eq!((p.clone(), v), (p2, v2));
        assert!(p.iter().all(|&c| (0.0..=1.0).contains(&c)));
        let mut raw = SobolSequence::shifted(2, 5).unwrap();
        for _ in 0..s.candidates {
            let q: Vec<f64> = raw.next_point();
            let (m, sd) = gp.posterior(&q).unwrap();
            assert!(expected_improvement(m, sd, best, 0.01, Direction::Minimize) <= v + 1e-15);
        }
    }
}
