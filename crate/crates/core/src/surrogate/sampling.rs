//! Space-filling designs over the unit hypercube.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::directions::{DIRECTION_NUMBERS, MAX_DIM};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

const BITS: usize = 32;

/// Gray-code Sobol generator with Joe–Kuo direction numbers, optionally
/// digitally shifted (XOR with a fixed word per dimension).
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

fn direction_vector(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let (poly, m) = DIRECTION_NUMBERS[dim];
    let s = (32 - poly.leading_zeros() - 1) as usize;
    let a = if s > 1 { (poly >> 1) & ((1 << (s - 1)) - 1) } else { 0 };
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (31 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for l in 1..s {
            if (a >> (s - 1 - l)) & 1 == 1 {
                x ^= v[k - l];
            }
        }
        v[k] = x;
    }
    v
}

impl SobolSequence {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::SobolDimension { requested: d, max: MAX_DIM });
        }
        Ok(Self {
            directions: (0..d).map(direction_vector).collect(),
            shift: vec![0; d],
            state: vec![0; d],
            index: 0,
        })
    }

    /// Same sequence with a random digital shift drawn from `seed`. The
    /// shift keeps the net structure but moves points off the origin.
    pub fn shifted(d: usize, seed: u64) -> Result<Self> {
        let mut s = Self::new(d)?;
        let mut r = rng::rng(seed);
        s.shift = (0..d).map(|_| r.random::<u32>()).collect();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    fn emit<F: Real>(&self) -> Vec<F> {
        let below_one = F::one() - F::epsilon();
        self.state
            .iter()
            .zip(&self.shift)
            .map(|(&x, &s)| F::lit(f64::from(x ^ s) / 4_294_967_296.0).min(below_one))
            .collect()
    }

    /// Returns the point at the current index and advances.
    pub fn next_point<F: Real>(&mut self) -> Vec<F> {
        let p = self.emit();
        let c = self.index.trailing_ones() as usize;
        if c < BITS {
            for (x, v) in self.state.iter_mut().zip(&self.directions) {
                *x ^= v[c];
            }
        }
        self.index += 1;
        p
    }
}

/// `n` Sobol points in `[0,1)^d`. With `skip_zero` the leading origin is
/// dropped, so the first point is `(0.5, …, 0.5)`.
pub fn sobol<F: Real>(n: usize, d: usize, skip_zero: bool) -> Result<Vec<Vec<F>>> {
    let mut seq = SobolSequence::new(d)?;
    if skip_zero {
        seq.next_point::<F>();
    }
    Ok((0..n).map(|_| seq.next_point()).collect())
}

/// Latin hypercube design: in every dimension each of the `n` equal strata
/// holds exactly one point, jittered uniformly within the stratum.
pub fn lhs<F: Real>(n: usize, d: usize, seed: u64) -> Vec<Vec<F>> {
    let mut r = rng::rng(seed);
    let below_one = 1.0 - f64::EPSILON;
    let mut pts = vec![vec![F::zero(); d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(&mut r);
        for (p, &k) in pts.iter_mut().zip(&strata) {
            let u: f64 = r.random();
            let v = ((k as f64 + u) / n as f64).min(below_one);
            p[j] = F::lit(v);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sobol_first_points() {
        let p: Vec<Vec<f64>> = sobol(3, 5, false).unwrap();
        assert_eq!(p[0], vec![0.0; 5]);
        assert_eq!(p[1], vec![0.5; 5]);
        assert_eq!(p[2], vec![0.75, 0.25, 0.25, 0.25, 0.75]);
        let skipped: Vec<Vec<f64>> = sobol(1, 64, true).unwrap();
        assert_eq!(skipped[0], vec![0.5; 64]);
    }

    #[test]
    fn sobol_dimension_limit() {
        assert!(sobol::<f64>(1, MAX_DIM, true).is_ok());
        assert!(matches!(sobol::<f64>(1, MAX_DIM + 1, true), Err(Error::SobolDimension { .. })));
        assert!(sobol::<f64>(1, 0, true).is_err());
    }

    #[test]
    fn lhs_single_point_interior() {
        let p: Vec<Vec<f64>> = lhs(1, 4, 3);
        assert_eq!(p.len(), 1);
        assert!(p[0].iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn lhs_stratified_and_deterministic() {
        let p: Vec<Vec<f64>> = lhs(10, 3, 42);
        for j in 0..3 {
            let mut cells: Vec<usize> = p.iter().map(|x| (x[j] * 10.0).floor() as usize).collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(p, lhs::<f64>(10, 3, 42));
        assert_ne!(p, lhs::<f64>(10, 3, 43));
    }

    #[test]
    fn shifted_sequence_differs_but_stays_in_cube() {
        let mut s = SobolSequence::shifted(3, 9).unwrap();
        let p: Vec<f32> = s.next_point();
        assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_ne!(p, vec![0.0f32; 3]);
    }
}
