//! Bootstrap particle filter with text-driven weight updates.
//!
//! Each step propagates the particles through the plant, turns the step's
//! texts into a likelihood per particle, normalizes, records the weighted
//! mean, and resamples systematically.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{normal_cdf, normal_pdf, GaussianSpec};
use crate::humansensor::{CognitiveModel, QuantizationScheme};
use crate::langmodel::{LabelDistribution, TextModel};
use crate::statespace::{propagate_particles, PlantModel, StateVector};

/// Filter prior over the initial state.
pub type PriorSpec = GaussianSpec;

/// Weighted particles stored contiguously, `dim` values per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    states: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn empty(dim: usize) -> Self {
        Self { dim, states: Vec::new(), weights: Vec::new() }
    }

    /// Equally weighted particles at the given states.
    pub fn from_states(states: &[StateVector]) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::InvalidInput("no particles".into()))?;
        let dim = first.dim();
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::InvalidInput("particles have differing dimensions".into()));
        }
        let n = states.len();
        Ok(Self {
            dim,
            states: states.iter().flat_map(|s| s.iter().copied()).collect(),
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidInput("weight count differs from particle count".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("weights must be non-negative and sum to 1".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective sample size `1 / sum(w^2)`.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Draws `n` particles from the prior with equal weights.
pub fn init_particles<R: Rng + ?Sized>(prior: &PriorSpec, n: usize, rng: &mut R) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one particle".into()));
    }
    let dim = prior.dim();
    let mut states = vec![0.0; n * dim];
    for chunk in states.chunks_exact_mut(dim) {
        prior.sample_into(rng, chunk);
    }
    Ok(ParticleSet { dim, states, weights: vec![1.0 / n as f64; n] })
}

/// Writes `p(q = i | x)` for every label into `out`.
///
/// The percept is `proj(C x + v)` with Gaussian `v`, so each label's mass is a
/// difference of normal CDFs; mass censored below/above the range falls into
/// the first/last label.
pub fn label_probs_into(scheme: &QuantizationScheme, cognitive: &CognitiveModel, x: &[f64], out: &mut [f64]) {
    let mu = cognitive.mean(x);
    let sigma = cognitive.noise_std();
    let b = scheme.boundaries();
    let m = scheme.levels();
    let edge = |i: usize| {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == m {
            f64::INFINITY
        } else {
            (b[i] - mu) / sigma
        }
    };
    for (i, p) in out.iter_mut().enumerate().take(m) {
        let (lo, hi) = (edge(i), edge(i + 1));
        // Above the mean, difference the survival function instead to keep precision.
        *p = if lo > 0.0 { normal_cdf(-lo) - normal_cdf(-hi) } else { normal_cdf(hi) - normal_cdf(lo) };
    }
}

/// Closed-form `p(q | x)` for a Gaussian percept clamped to the quantizer range.
pub fn label_prob_given_state(
    scheme: &QuantizationScheme,
    cognitive: &CognitiveModel,
    x: &[f64],
) -> Result<LabelDistribution> {
    cognitive.validate()?;
    cognitive.check_dim(x.len())?;
    let mut out = vec![0.0; scheme.levels()];
    label_probs_into(scheme, cognitive, x, &mut out);
    Ok(LabelDistribution(out))
}

/// `p(q | x)` by integrating an arbitrary percept density over each interval.
///
/// `atoms` are point masses (location, mass), e.g. from clamping. Uses
/// composite Simpson with `panels` (rounded up to even) per interval.
pub fn label_prob_by_quadrature(
    scheme: &QuantizationScheme,
    density: impl Fn(f64) -> f64,
    atoms: &[(f64, f64)],
    panels: usize,
) -> Result<LabelDistribution> {
    let panels = panels.max(2).next_multiple_of(2);
    let b = scheme.boundaries();
    let mut probs: Vec<f64> = b
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / panels as f64;
            let mut s = density(w[0]) + density(w[1]);
            for k in 1..panels {
                let coef = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += coef * density(w[0] + k as f64 * h);
            }
            s * h / 3.0
        })
        .collect();
    for &(at, mass) in atoms {
        let label = scheme.quantize(at.clamp(scheme.lo(), scheme.hi()))?;
        probs[label - 1] += mass;
    }
    Ok(LabelDistribution(probs))
}

/// `sum_j p(q_j | s) p(q_j | x)`; proportional to `p(s | x)` under a uniform label prior.
pub fn lapf_likelihood(p_q_given_s: &LabelDistribution, p_q_given_x: &[f64]) -> f64 {
    p_q_given_s.probs().iter().zip(p_q_given_x).map(|(a, b)| a * b).sum()
}

/// Product of per-sensor likelihoods for conditionally independent reports.
pub fn multi_sensor_likelihood(likelihoods: impl IntoIterator<Item = f64>) -> f64 {
    likelihoods.into_iter().product()
}

/// Normalizes `likelihoods` into the particle weights.
///
/// Non-finite entries count as zero. If nothing is left, the weights fall back
/// to uniform and `true` is returned so the caller can count the event.
pub fn update_weights(particles: &mut ParticleSet, likelihoods: &[f64]) -> Result<bool> {
    if likelihoods.len() != particles.len() {
        return Err(Error::InvalidInput(format!(
            "{} likelihoods for {} particles",
            likelihoods.len(),
            particles.len()
        )));
    }
    let clean = |l: f64| if l.is_finite() && l > 0.0 { l } else { 0.0 };
    let total: f64 = likelihoods.iter().map(|l| clean(*l)).sum();
    let n = particles.len();
    if !(total > 0.0 && total.is_finite()) {
        particles.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        return Ok(true);
    }
    for (w, l) in particles.weights.iter_mut().zip(likelihoods) {
        *w = clean(*l) / total;
    }
    Ok(false)
}

/// Systematic resampling with offset `u` in `[0, 1)`: pointer `k` sits at
/// `u + k` on the cumulative weight scaled by the particle count.
pub fn resample_with_offset(particles: &ParticleSet, u: f64) -> ParticleSet {
    let n = particles.len();
    let mut states = Vec::with_capacity(particles.states.len());
    let mut cum = n as f64 * particles.weights[0];
    let mut i = 0;
    for k in 0..n {
        let pointer = u + k as f64;
        while pointer >= cum && i + 1 < n {
            i += 1;
            cum += n as f64 * particles.weights[i];
        }
        states.extend_from_slice(particles.particle(i));
    }
    ParticleSet { dim: particles.dim, states, weights: vec![1.0 / n as f64; n] }
}

pub fn resample<R: Rng + ?Sized>(particles: &ParticleSet, rng: &mut R) -> ParticleSet {
    resample_with_offset(particles, rng.random::<f64>())
}

/// Weighted mean of the particles.
pub fn posterior_mean(particles: &ParticleSet) -> StateVector {
    let mut mean = vec![0.0; particles.dim];
    for (x, w) in particles.particles().zip(&particles.weights) {
        mean.iter_mut().zip(x).for_each(|(m, x)| *m += w * x);
    }
    StateVector(mean)
}

/// Turns texts into per-particle likelihoods.
pub trait ObservationBackend: Sync {
    type Observation;

    /// Interprets one step's texts (one per sensor).
    fn interpret(&self, texts: &[String]) -> Result<Vec<Self::Observation>>;

    /// Joint likelihood of all of a step's observations at state `x`.
    fn likelihood(&self, observations: &[Self::Observation], x: &[f64]) -> f64;

    /// Whether updates carry information. The prediction-only baseline skips them.
    fn informative(&self) -> bool {
        true
    }
}

/// Prediction only: texts are ignored and weights never change.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoObservation;

impl ObservationBackend for NoObservation {
    type Observation = ();

    fn interpret(&self, _texts: &[String]) -> Result<Vec<()>> {
        Ok(Vec::new())
    }

    fn likelihood(&self, _observations: &[()], _x: &[f64]) -> f64 {
        1.0
    }

    fn informative(&self) -> bool {
        false
    }
}

/// Classifier-based likelihood: label distribution from the text, label
/// probabilities from the state.
#[derive(Debug)]
pub struct LapfLikelihoodModel {
    pub scheme: QuantizationScheme,
    pub cognitive: CognitiveModel,
    pub classifier: TextModel,
    cache: HashMap<String, LabelDistribution>,
}

impl LapfLikelihoodModel {
    pub fn new(scheme: QuantizationScheme, cognitive: CognitiveModel, classifier: TextModel) -> Result<Self> {
        cognitive.validate()?;
        if classifier.mlp.output_dim() != scheme.levels() {
            return Err(Error::Config(format!(
                "classifier has {} outputs for {} labels",
                classifier.mlp.output_dim(),
                scheme.levels()
            )));
        }
        Ok(Self { scheme, cognitive, classifier, cache: HashMap::new() })
    }

    /// Pre-classifies texts so later lookups skip the network.
    pub fn warm_cache(&mut self, texts: &[&str]) -> Result<()> {
        let fresh: Vec<&str> = texts.iter().copied().filter(|t| !self.cache.contains_key(*t)).collect();
        for (t, p) in fresh.iter().zip(self.classifier.classify_batch(&fresh)?) {
            self.cache.insert((*t).to_string(), p);
        }
        Ok(())
    }

    pub fn label_distribution(&self, text: &str) -> Result<LabelDistribution> {
        match self.cache.get(text) {
            Some(p) => Ok(p.clone()),
            None => self.classifier.classify_text(text),
        }
    }
}

impl ObservationBackend for LapfLikelihoodModel {
    type Observation = LabelDistribution;

    fn interpret(&self, texts: &[String]) -> Result<Vec<LabelDistribution>> {
        texts.iter().map(|t| self.label_distribution(t)).collect()
    }

    fn likelihood(&self, observations: &[LabelDistribution], x: &[f64]) -> f64 {
        let mut p_x = [0.0; 16];
        let mut heap;
        let p_x: &mut [f64] = if self.scheme.levels() <= 16 {
            &mut p_x[..self.scheme.levels()]
        } else {
            heap = vec![0.0; self.scheme.levels()];
            &mut heap
        };
        label_probs_into(&self.scheme, &self.cognitive, x, p_x);
        multi_sensor_likelihood(observations.iter().map(|p_s| lapf_likelihood(p_s, p_x)))
    }
}

/// Pseudo-observation likelihood: a regressed level treated as a Gaussian
/// reading of the percept with extra variance `r_tilde`.
#[derive(Debug)]
pub struct EdapfLikelihoodModel {
    pub cognitive: CognitiveModel,
    pub regressor: TextModel,
    pub r_tilde: f64,
    cache: HashMap<String, f64>,
}

impl EdapfLikelihoodModel {
    pub fn new(cognitive: CognitiveModel, regressor: TextModel, r_tilde: f64) -> Result<Self> {
        cognitive.validate()?;
        if !(r_tilde > 0.0 && r_tilde.is_finite()) {
            return Err(Error::Config(format!("pseudo-observation variance must be positive, got {r_tilde}")));
        }
        Ok(Self { cognitive, regressor, r_tilde, cache: HashMap::new() })
    }

    pub fn warm_cache(&mut self, texts: &[&str]) -> Result<()> {
        let fresh: Vec<&str> = texts.iter().copied().filter(|t| !self.cache.contains_key(*t)).collect();
        for (t, y) in fresh.iter().zip(self.regressor.regress_batch(&fresh)?) {
            self.cache.insert((*t).to_string(), y);
        }
        Ok(())
    }

    pub fn pseudo_observation(&self, text: &str) -> Result<f64> {
        match self.cache.get(text) {
            Some(y) => Ok(*y),
            None => self.regressor.regress_text(text),
        }
    }
}

/// Density of `y_tilde` under `N(proj(C x), noise_var + r_tilde)`.
pub fn edapf_likelihood(cognitive: &CognitiveModel, r_tilde: f64, y_tilde: f64, x: &[f64]) -> f64 {
    let mean = cognitive.clamp.project(cognitive.mean(x));
    normal_pdf(y_tilde, mean, cognitive.noise_var + r_tilde)
}

impl ObservationBackend for EdapfLikelihoodModel {
    type Observation = f64;

    fn interpret(&self, texts: &[String]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.pseudo_observation(t)).collect()
    }

    fn likelihood(&self, observations: &[f64], x: &[f64]) -> f64 {
        multi_sensor_likelihood(observations.iter().map(|y| edapf_likelihood(&self.cognitive, self.r_tilde, *y, x)))
    }
}

/// What the filter reports after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub step: usize,
    pub estimate: StateVector,
    pub ess: f64,
    pub degenerate: bool,
}

/// Step-by-step filter state.
#[derive(Debug, Clone)]
pub struct ParticleFilter<'a> {
    plant: &'a PlantModel,
    particles: ParticleSet,
    step: usize,
    degeneracy_count: usize,
    likelihoods: Vec<f64>,
}

impl<'a> ParticleFilter<'a> {
    pub fn new<R: Rng + ?Sized>(plant: &'a PlantModel, prior: &PriorSpec, n: usize, rng: &mut R) -> Result<Self> {
        if prior.dim() != plant.dim() {
            return Err(Error::Config(format!(
                "prior has dimension {}, plant has {}",
                prior.dim(),
                plant.dim()
            )));
        }
        let particles = init_particles(prior, n, rng)?;
        Ok(Self { plant, particles, step: 0, degeneracy_count: 0, likelihoods: Vec::with_capacity(n) })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn estimate(&self) -> StateVector {
        posterior_mean(&self.particles)
    }

    pub fn degeneracy_count(&self) -> usize {
        self.degeneracy_count
    }

    /// Predict, update with `texts`, summarize, resample.
    pub fn step<B, R>(&mut self, backend: &B, texts: &[String], rng: &mut R) -> Result<StepSummary>
    where
        B: ObservationBackend + ?Sized,
        R: Rng + ?Sized,
    {
        self.step += 1;
        propagate_particles(self.plant, &mut self.particles, rng)?;
        let mut degenerate = false;
        if backend.informative() && !texts.is_empty() {
            let observations = backend.interpret(texts)?;
            self.likelihoods.clear();
            self.likelihoods
                .extend(self.particles.particles().map(|x| backend.likelihood(&observations, x)));
            degenerate = update_weights(&mut self.particles, &self.likelihoods)?;
            self.degeneracy_count += degenerate as usize;
        }
        let summary = StepSummary {
            step: self.step,
            estimate: posterior_mean(&self.particles),
            ess: self.particles.ess(),
            degenerate,
        };
        self.particles = resample(&self.particles, rng);
        Ok(summary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub prior_estimate: StateVector,
    pub steps: Vec<StepSummary>,
    pub degeneracy_count: usize,
}

/// Runs the filter over `observations` (texts per step, one per sensor).
pub fn run_filter<B, R>(
    plant: &PlantModel,
    backend: &B,
    prior: &PriorSpec,
    observations: &[Vec<String>],
    n_particles: usize,
    rng: &mut R,
) -> Result<FilterRun>
where
    B: ObservationBackend + ?Sized,
    R: Rng + ?Sized,
{
    let mut filter = ParticleFilter::new(plant, prior, n_particles, rng)?;
    let prior_estimate = filter.estimate();
    let steps = observations
        .iter()
        .map(|texts| filter.step(backend, texts, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterRun { prior_estimate, steps, degeneracy_count: filter.degeneracy_count })
}
