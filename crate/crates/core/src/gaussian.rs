//! Diagonal Gaussians and the standard normal CDF.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, cov_diag: Vec<f64>) -> Result<Self> {
        let spec = Self { mean, cov_diag };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero-variance entries are allowed only through [`GaussianSpec::degenerate`].
    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.cov_diag.len() {
            return Err(Error::Config(format!(
                "gaussian mean has length {} but covariance diagonal has length {}",
                self.mean.len(),
                self.cov_diag.len()
            )));
        }
        if let Some(v) = self.cov_diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("variance must be positive and finite, got {v}")));
        }
        Ok(())
    }

    /// A point mass at `mean`; sampling always returns the mean.
    pub fn degenerate(mean: Vec<f64>) -> Self {
        let cov_diag = vec![0.0; mean.len()];
        Self { mean, cov_diag }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes `mean + sqrt(cov) * z` into `out`, one standard normal per component.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for ((o, m), v) in out.iter_mut().zip(&self.mean).zip(&self.cov_diag) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + v.sqrt() * z;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Standard normal CDF, `0.5 * erfc(-z / sqrt 2)`.
///
/// `erfc` keeps full relative precision in the lower tail, so the result is
/// accurate to a few ulps everywhere, well inside 1e-12 absolute.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}
