//! Plant dynamics: `x_k = proj(A x_{k-1} + w_k)` with diagonal Gaussian `w_k`.

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ParticleSet;
use crate::gaussian::GaussianSpec;

/// Closed interval `[lo, hi]` used for component-wise projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("interval needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Plant state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Linear-Gaussian transition followed by a box projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// Row-major `n x n` system matrix.
    pub a: Vec<f64>,
    pub noise: GaussianSpec,
    pub clamp: Interval,
    pub x0_true: StateVector,
}

impl PlantModel {
    pub fn new(a: Vec<f64>, noise: GaussianSpec, clamp: Interval, x0_true: StateVector) -> Result<Self> {
        noise.validate()?;
        let model = Self { a, noise, clamp, x0_true };
        model.check_shapes()?;
        Ok(model)
    }

    /// Same dynamics with the noise pinned to its mean.
    pub fn deterministic(a: Vec<f64>, noise_mean: Vec<f64>, clamp: Interval, x0_true: StateVector) -> Result<Self> {
        let model = Self { a, noise: GaussianSpec::degenerate(noise_mean), clamp, x0_true };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.noise.dim();
        if n == 0 {
            return Err(Error::Config("plant dimension must be positive".into()));
        }
        if self.a.len() != n * n {
            return Err(Error::Config(format!(
                "system matrix has {} entries, expected {n}x{n}",
                self.a.len()
            )));
        }
        if self.x0_true.dim() != n {
            return Err(Error::Config(format!(
                "initial state has length {}, expected {n}",
                self.x0_true.dim()
            )));
        }
        Ok(())
    }

    /// The irrigation-canal benchmark: five gauges in series, levels in `[0, 5]`.
    pub fn canal() -> Self {
        #[rustfmt::skip]
        let a = vec![
            0.4, 0.0, 0.0, 0.0, 0.0,
            0.6, 0.3, 0.0, 0.0, 0.0,
            0.0, 0.7, 0.5, 0.0, 0.0,
            0.0, 0.0, 0.5, 0.4, 0.0,
            0.0, 0.0, 0.0, 0.6, 0.5,
        ];
        let noise = GaussianSpec {
            mean: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            cov_diag: vec![1.0, 0.1, 0.1, 0.1, 0.1],
        };
        Self {
            a,
            noise,
            clamp: Interval { lo: 0.0, hi: 5.0 },
            x0_true: StateVector(vec![2.5; 5]),
        }
    }

    pub fn dim(&self) -> usize {
        self.noise.dim()
    }

    /// Writes `proj(A x + w)` into `out` for a given noise draw `w`.
    pub fn transition_into(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.a[r * n..(r + 1) * n];
            let ax: f64 = row.iter().zip(x).map(|(a, x)| a * x).sum();
            *o = self.clamp.project(ax + w[r]);
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Config(format!(
                "state has length {len}, plant expects {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Advances the true plant by one step.
pub fn step_plant<R: Rng + ?Sized>(model: &PlantModel, x_prev: &StateVector, rng: &mut R) -> Result<StateVector> {
    model.check_dim(x_prev.dim())?;
    let w = model.noise.sample(rng);
    let mut out = StateVector::zeros(model.dim());
    model.transition_into(x_prev, &w, &mut out);
    Ok(out)
}

/// Pushes every particle through the transition with its own noise draw. Weights are untouched.
pub fn propagate_particles<R: Rng + ?Sized>(
    model: &PlantModel,
    particles: &mut ParticleSet,
    rng: &mut R,
) -> Result<()> {
    if particles.is_empty() {
        return Err(Error::InvalidInput("cannot propagate an empty particle set".into()));
    }
    model.check_dim(particles.dim())?;
    let n = model.dim();
    let mut w = vec![0.0; n];
    let mut next = vec![0.0; n];
    for i in 0..particles.len() {
        model.noise.sample_into(rng, &mut w);
        model.transition_into(particles.particle(i), &w, &mut next);
        particles.particle_mut(i).copy_from_slice(&next);
    }
    Ok(())
}
