//! Power-iteration spectral normalization.
//!
//! The normalized weight is `W / max(1, σ̂ / coeff)` where `σ̂ = uᵀWv` is the
//! current estimate of the largest singular value. Weights already inside the
//! bound pass through untouched.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::diffcore::{bilinear, Tensor};

/// Iterations always run the first time a layer's vectors are used.
pub const WARM_START_ITERATIONS: usize = 30;
/// Stop warm-start iteration once σ̂² changes by less than this, relatively.
const WARM_START_TOL: f64 = 1e-13;
const WARM_START_CAP: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralNormError {
    #[error("spectral-norm coefficient must be positive, got {0}")]
    BadCoeff(f64),
    #[error("power-iteration count must be at least 1")]
    NoIterations,
    #[error("weight shape {found:?} does not match singular vectors ({rows}x{cols})")]
    Shape {
        found: Vec<usize>,
        rows: usize,
        cols: usize,
    },
}

/// Spectral-norm settings for one wrapped layer, plus its persistent
/// left/right singular-vector estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNorm {
    coeff: f64,
    iterations: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    warmed: bool,
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

impl SpectralNorm {
    pub fn new<R: Rng + ?Sized>(
        coeff: f64,
        iterations: usize,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<Self, SpectralNormError> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(SpectralNormError::BadCoeff(coeff));
        }
        if iterations == 0 {
            return Err(SpectralNormError::NoIterations);
        }
        let mut draw = |n: usize| {
            let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            normalize(&mut x);
            x
        };
        let u = draw(rows);
        let v = draw(cols);
        Ok(Self {
            coeff,
            iterations,
            u,
            v,
            warmed: false,
        })
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn left(&self) -> &[f64] {
        &self.u
    }

    pub fn right(&self) -> &[f64] {
        &self.v
    }

    fn check(&self, w: &Tensor) -> Result<(), SpectralNormError> {
        if !w.is_matrix() || w.rows() != self.u.len() || w.cols() != self.v.len() {
            return Err(SpectralNormError::Shape {
                found: w.shape().to_vec(),
                rows: self.u.len(),
                cols: self.v.len(),
            });
        }
        Ok(())
    }

    /// One power-iteration step: `v ← Wᵀu/‖·‖`, `u ← Wv/‖·‖`.
    /// Returns the updated estimate `σ̂ = uᵀWv`.
    fn step(&mut self, w: &Tensor) -> f64 {
        let (r, c) = (w.rows(), w.cols());
        let mut v = vec![0.0; c];
        for i in 0..r {
            for (j, vj) in v.iter_mut().enumerate() {
                *vj += w.at(i, j) * self.u[i];
            }
        }
        if normalize(&mut v) == 0.0 {
            return 0.0;
        }
        let mut u: Vec<f64> = (0..r)
            .map(|i| w.row(i).iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        let sigma = normalize(&mut u);
        self.u = u;
        self.v = v;
        sigma
    }

    /// Advances the estimate: the configured number of steps once warm,
    /// otherwise at least [`WARM_START_ITERATIONS`] and until converged.
    pub fn update(&mut self, w: &Tensor) -> Result<f64, SpectralNormError> {
        self.check(w)?;
        let mut sigma = 0.0;
        if self.warmed {
            for _ in 0..self.iterations {
                sigma = self.step(w);
            }
            return Ok(sigma);
        }
        let mut prev = f64::INFINITY;
        for k in 0..WARM_START_CAP {
            sigma = self.step(w);
            let s2 = sigma * sigma;
            if sigma == 0.0 || (k + 1 >= WARM_START_ITERATIONS && (s2 - prev).abs() <= WARM_START_TOL * s2) {
                break;
            }
            prev = s2;
        }
        self.warmed = true;
        Ok(sigma)
    }

    /// Current σ̂ for `w` without moving the vectors.
    pub fn sigma(&self, w: &Tensor) -> f64 {
        bilinear(w, &self.u, &self.v)
    }

    /// `W / max(1, σ̂/coeff)` with the current vectors.
    pub fn apply(&self, w: &Tensor) -> Tensor {
        let factor = (self.sigma(w) / self.coeff).max(1.0);
        if factor == 1.0 {
            w.clone()
        } else {
            w.map(|x| x / factor)
        }
    }
}

/// Updates the power-iteration estimate for `weight` and returns the
/// normalized weight.
pub fn spectral_normalize(weight: &Tensor, sn: &mut SpectralNorm) -> Result<Tensor, SpectralNormError> {
    sn.update(weight)?;
    Ok(sn.apply(weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sn(coeff: f64, r: usize, c: usize) -> SpectralNorm {
        SpectralNorm::new(coeff, 1, r, c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn identity_is_unchanged() {
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut s = sn(1.0, 2, 2);
        let out = spectral_normalize(&w, &mut s).unwrap();
        assert!((s.sigma(&w) - 1.0).abs() < 1e-12);
        assert_eq!(out, w);
    }

    #[test]
    fn diagonal_is_divided_by_top_singular_value() {
        let w = Tensor::matrix(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let mut s = sn(1.0, 2, 2);
        let out = spectral_normalize(&w, &mut s).unwrap();
        assert!((out.at(0, 0) - 1.0).abs() < 1e-9);
        assert!((out.at(1, 1) - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(out.at(0, 1), 0.0);
    }

    #[test]
    fn zero_matrix_passes_through() {
        let w = Tensor::zeros(&[3, 2]);
        let mut s = sn(0.5, 3, 2);
        assert_eq!(spectral_normalize(&w, &mut s).unwrap(), w);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SpectralNorm::new(0.0, 1, 2, 2, &mut rng).is_err());
        assert!(SpectralNorm::new(1.0, 0, 2, 2, &mut rng).is_err());
        let mut s = sn(1.0, 2, 2);
        assert!(spectral_normalize(&Tensor::zeros(&[3, 2]), &mut s).is_err());
    }

    #[test]
    fn vectors_stay_unit_norm() {
        let w = Tensor::matrix(2, 3, vec![0.3, -1.0, 2.0, 0.7, 0.1, -0.4]).unwrap();
        let mut s = sn(1.0, 2, 3);
        for _ in 0..5 {
            s.update(&w).unwrap();
            let nu: f64 = s.left().iter().map(|x| x * x).sum();
            let nv: f64 = s.right().iter().map(|x| x * x).sum();
            assert!((nu - 1.0).abs() < 1e-12 && (nv - 1.0).abs() < 1e-12);
        }
    }
}
