//! Simulated human sensor: a noisy percept of the state, quantized to a
//! label, then verbalized by sampling a text recorded at that level.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DomainTag, Split};
use crate::error::{Error, Result};
use crate::statespace::Interval;

/// Partition of `[lo, hi]` into `m` intervals.
///
/// Interval `i` (1-based) is `[b[i-1], b[i])` for `i < m`; the last one is
/// closed so that `hi` itself has a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationScheme {
    boundaries: Vec<f64>,
}

impl QuantizationScheme {
    /// `m` equal-width intervals.
    pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("quantizer needs at least one level".into()));
        }
        Interval::new(lo, hi)?;
        let width = hi - lo;
        let mut boundaries: Vec<f64> = (0..=m).map(|i| lo + width * i as f64 / m as f64).collect();
        boundaries[m] = hi;
        Self::from_boundaries(boundaries)
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::Config("quantizer needs at least two boundaries".into()));
        }
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("quantizer boundaries must be finite and strictly ascending".into()));
        }
        Ok(Self { boundaries })
    }

    pub fn levels(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.boundaries[0]
    }

    pub fn hi(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    pub fn range(&self) -> Interval {
        Interval { lo: self.lo(), hi: self.hi() }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Label in `1..=m` of the interval containing `y`.
    pub fn quantize(&self, y: f64) -> Result<usize> {
        if !(y >= self.lo() && y <= self.hi()) {
            return Err(Error::InvalidInput(format!(
                "value {y} lies outside the quantizer range [{}, {}]",
                self.lo(),
                self.hi()
            )));
        }
        let m = self.levels();
        Ok(self.boundaries[1..m].partition_point(|b| *b <= y) + 1)
    }
}

/// `y = proj(C x + v)`, `v ~ N(0, noise_var)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CognitiveModel {
    pub c: Vec<f64>,
    pub noise_var: f64,
    pub clamp: Interval,
}

impl CognitiveModel {
    pub fn new(c: Vec<f64>, noise_var: f64, clamp: Interval) -> Result<Self> {
        let model = Self { c, noise_var, clamp };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!(
                "cognitive noise variance must be positive, got {}",
                self.noise_var
            )));
        }
        Ok(())
    }

    /// Observer who sees only the first of `n` components.
    pub fn first_component(n: usize, noise_var: f64, clamp: Interval) -> Result<Self> {
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        Self::new(c, noise_var, clamp)
    }

    /// Noise-free percept mean `C x`, before projection.
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_var.sqrt()
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.c.len() {
            return Err(Error::Config(format!(
                "state has length {len}, cognitive model expects {}",
                self.c.len()
            )));
        }
        Ok(())
    }
}

/// Forms the cognitive value for state `x`.
pub fn perceive<R: Rng + ?Sized>(model: &CognitiveModel, x: &[f64], rng: &mut R) -> Result<f64> {
    model.check_dim(x.len())?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(model.clamp.project(model.mean(x) + model.noise_std() * z))
}

pub fn quantize(scheme: &QuantizationScheme, y: f64) -> Result<usize> {
    scheme.quantize(y)
}

/// Hidden internals of one observation, kept for evaluation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTruth {
    pub y: f64,
    pub q: usize,
}

#[derive(Debug, Clone)]
struct LevelBucket {
    level: f64,
    texts: Vec<String>,
}

/// Ground-truth sensing process backed by a text corpus.
#[derive(Debug, Clone)]
pub struct HumanSensorSim {
    pub cognitive: CognitiveModel,
    pub scheme: QuantizationScheme,
    buckets: Vec<LevelBucket>,
    ood_bank: Vec<String>,
    ood_threshold: Option<f64>,
}

impl HumanSensorSim {
    /// Indexes the in-domain records of `split` by level. Each record's ratio
    /// is mapped linearly onto the quantizer range.
    pub fn from_corpus(
        cognitive: CognitiveModel,
        scheme: QuantizationScheme,
        corpus: &Corpus,
        split: Split,
    ) -> Result<Self> {
        let range = scheme.range();
        let mut buckets: Vec<LevelBucket> = Vec::new();
        for key in corpus.level_grid() {
            let texts: Vec<String> = corpus
                .records()
                .iter()
                .filter(|r| r.level_ratio == *key && r.split == split && r.domain_tag == DomainTag::InDomain)
                .map(|r| r.text.clone())
                .collect();
            if !texts.is_empty() {
                buckets.push(LevelBucket { level: key * (range.hi - range.lo) + range.lo, texts });
            }
        }
        if buckets.is_empty() {
            return Err(Error::Corpus(format!("no in-domain {split} records to sample texts from")));
        }
        Ok(Self { cognitive, scheme, buckets, ood_bank: Vec::new(), ood_threshold: None })
    }

    /// Replaces every emission with an out-of-domain text when `y < threshold`.
    pub fn with_ood(mut self, bank: Vec<String>, threshold: f64) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::Corpus("out-of-domain bank is empty".into()));
        }
        self.ood_bank = bank;
        self.ood_threshold = Some(threshold);
        Ok(self)
    }

    pub fn ood_bank(&self) -> &[String] {
        &self.ood_bank
    }

    pub fn ood_threshold(&self) -> Option<f64> {
        self.ood_threshold
    }

    /// Levels available for sampling, ascending.
    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.buckets.iter().map(|b| b.level)
    }

    /// Index of the bucket nearest to `y`; ties go to the lower level.
    fn nearest_bucket(&self, y: f64) -> usize {
        let idx = self.buckets.partition_point(|b| b.level < y);
        if idx == 0 {
            return 0;
        }
        if idx == self.buckets.len() {
            return idx - 1;
        }
        let below = y - self.buckets[idx - 1].level;
        let above = self.buckets[idx].level - y;
        if above < below {
            idx
        } else {
            idx - 1
        }
    }

    pub fn texts_near(&self, y: f64) -> &[String] {
        &self.buckets[self.nearest_bucket(y)].texts
    }
}

/// Draws a text for cognitive value `y`.
pub fn emit_text<R: Rng + ?Sized>(sim: &HumanSensorSim, y: f64, rng: &mut R) -> Result<String> {
    if !sim.scheme.range().contains(y) {
        return Err(Error::InvalidInput(format!("cognitive value {y} outside the sensor range")));
    }
    let candidates = match sim.ood_threshold {
        Some(t) if y < t => &sim.ood_bank[..],
        _ => sim.texts_near(y),
    };
    if candidates.is_empty() {
        return Err(Error::Corpus(format!("no texts available for level {y}")));
    }
    Ok(candidates[rng.random_range(0..candidates.len())].clone())
}

/// Perceive, quantize, verbalize.
pub fn observe<R: Rng + ?Sized>(sim: &HumanSensorSim, x: &[f64], rng: &mut R) -> Result<(String, SensorTruth)> {
    let y = perceive(&sim.cognitive, x, rng)?;
    let q = sim.scheme.quantize(y)?;
    let text = emit_text(sim, y, rng)?;
    Ok((text, SensorTruth { y, q }))
}

/// `count` independent agents looking at the same state.
pub fn observe_many<R: Rng + ?Sized>(
    sim: &HumanSensorSim,
    x: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<(String, SensorTruth)>> {
    (0..count).map(|_| observe(sim, x, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, ObservationRecord};
    use crate::gaussian::normal_cdf;
    use crate::random::stream;

    fn scheme() -> QuantizationScheme {
        QuantizationScheme::uniform(0.0, 5.0, 5).unwrap()
    }

    fn noiseless() -> CognitiveModel {
        CognitiveModel { c: vec![1.0, 0.0, 0.0, 0.0, 0.0], noise_var: 0.0, clamp: Interval { lo: 0.0, hi: 5.0 } }
    }

    fn record(ratio: f64, text: &str, split: Split) -> ObservationRecord {
        ObservationRecord { level_ratio: ratio, text: text.into(), split, domain_tag: DomainTag::InDomain }
    }

    fn tiny_corpus() -> Corpus {
        Corpus::from_records(vec![
            record(0.0, "dry", Split::Test),
            record(0.5, "half", Split::Test),
            record(0.5, "half train", Split::Train),
            record(1.0, "full", Split::Test),
        ])
        .unwrap()
    }

    #[test]
    fn quantize_boundaries() {
        let s = scheme();
        assert_eq!(s.quantize(2.5).unwrap(), 3);
        assert_eq!(s.quantize(0.0).unwrap(), 1);
        assert_eq!(s.quantize(5.0).unwrap(), 5);
        assert_eq!(s.quantize(1.0).unwrap(), 2);
        assert_eq!(s.quantize(0.999_999).unwrap(), 1);
        assert!(matches!(s.quantize(5.000_001), Err(Error::InvalidInput(_))));
        assert!(s.quantize(-0.1).is_err());
        assert!(s.quantize(f64::NAN).is_err());
    }

    #[test]
    fn bad_schemes_are_rejected() {
        assert!(QuantizationScheme::uniform(0.0, 5.0, 0).is_err());
        assert!(QuantizationScheme::uniform(5.0, 0.0, 3).is_err());
        assert!(QuantizationScheme::from_boundaries(vec![0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn perceive_noise_free_and_clamped() {
        let m = noiseless();
        let mut rng = stream(0, 0);
        assert_eq!(perceive(&m, &[2.5; 5], &mut rng).unwrap(), 2.5);
        assert_eq!(perceive(&m, &[9.0, 0.0, 0.0, 0.0, 0.0], &mut rng).unwrap(), 5.0);
        assert!(matches!(perceive(&m, &[1.0; 3], &mut rng), Err(Error::Config(_))));
    }

    // Censored N(2.5, 1): atoms at 0 and 5 of mass Phi(-2.5) each, and the
    // continuous part checked with a Kolmogorov-Smirnov distance on (0, 5).
    #[test]
    fn perceive_matches_censored_gaussian() {
        let m = CognitiveModel::first_component(5, 1.0, Interval { lo: 0.0, hi: 5.0 }).unwrap();
        let mut rng = stream(12, 0);
        let n = 100_000;
        let mut draws: Vec<f64> = (0..n).map(|_| perceive(&m, &[2.5; 5], &mut rng).unwrap()).collect();
        let atom = 0.006209665325776132;
        let se = (atom * (1.0 - atom) / n as f64).sqrt();
        let at_lo = draws.iter().filter(|y| **y == 0.0).count() as f64 / n as f64;
        let at_hi = draws.iter().filter(|y| **y == 5.0).count() as f64 / n as f64;
        assert!((at_lo - atom).abs() < 4.0 * se, "{at_lo}");
        assert!((at_hi - atom).abs() < 4.0 * se, "{at_hi}");

        draws.retain(|y| *y > 0.0 && *y < 5.0);
        draws.sort_by(f64::total_cmp);
        let k = draws.len() as f64;
        let inner = 1.0 - 2.0 * atom;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let cdf = (normal_cdf(y - 2.5) - atom) / inner;
                let lo = (cdf - i as f64 / k).abs();
                let hi = (cdf - (i + 1) as f64 / k).abs();
                lo.max(hi)
            })
            .fold(0.0, f64::max);
        // 1% critical value of the KS statistic.
        assert!(ks < 1.63 / k.sqrt(), "ks = {ks}");
    }

    #[test]
    fn emit_picks_nearest_bucket() {
        let sim = HumanSensorSim::from_corpus(noiseless(), scheme(), &tiny_corpus(), Split::Test).unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(emit_text(&sim, 2.4, &mut rng).unwrap(), "half");
        assert_eq!(emit_text(&sim, 0.3, &mut rng).unwrap(), "dry");
        assert_eq!(emit_text(&sim, 4.9, &mut rng).unwrap(), "full");
        // Exactly between 0.0 and 2.5: lower key wins.
        assert_eq!(emit_text(&sim, 1.25, &mut rng).unwrap(), "dry");
        assert!(emit_text(&sim, 5.5, &mut rng).is_err());
    }

    #[test]
    fn ood_injection_below_threshold_only() {
        let sim = HumanSensorSim::from_corpus(noiseless(), scheme(), &tiny_corpus(), Split::Test)
            .unwrap()
            .with_ood(vec!["nae watter".into()], 0.2)
            .unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(emit_text(&sim, 0.1, &mut rng).unwrap(), "nae watter");
        assert_eq!(emit_text(&sim, 0.2, &mut rng).unwrap(), "dry");
        for i in 0..500 {
            let y = i as f64 / 100.0;
            let t = emit_text(&sim, y, &mut rng).unwrap();
            assert_eq!(t == "nae watter", y < 0.2);
        }
    }

    // Multinomial oracle: 4 equally likely texts, 10^4 draws.
    #[test]
    fn emission_frequencies_are_uniform() {
        let records = ["a", "b", "c", "d"].iter().map(|t| record(0.5, t, Split::Test)).collect();
        let corpus = Corpus::from_records(records).unwrap();
        let sim = HumanSensorSim::from_corpus(noiseless(), scheme(), &corpus, Split::Test).unwrap();
        let mut rng = stream(3, 0);
        let n = 10_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(emit_text(&sim, 2.5, &mut rng).unwrap()).or_insert(0usize) += 1;
        }
        let se = (0.25 * 0.75 / n as f64).sqrt();
        for t in ["a", "b", "c", "d"] {
            let f = counts[t] as f64 / n as f64;
            assert!((f - 0.25).abs() < 4.0 * se, "{t}: {f}");
        }
    }

    #[test]
    fn observe_composes_the_cascade() {
        let sim = HumanSensorSim::from_corpus(noiseless(), scheme(), &tiny_corpus(), Split::Test).unwrap();
        let mut rng = stream(0, 0);
        let (text, truth) = observe(&sim, &[2.5; 5], &mut rng).unwrap();
        assert_eq!((text.as_str(), truth.q, truth.y), ("half", 3, 2.5));
        let (_, truth) = observe(&sim, &[0.0; 5], &mut rng).unwrap();
        assert_eq!(truth.q, 1);
        let many = observe_many(&sim, &[2.5; 5], 3, &mut rng).unwrap();
        assert_eq!(many.len(), 3);
    }

    #[test]
    fn observe_is_seed_deterministic() {
        let cog = CognitiveModel::first_component(5, 1.0, Interval { lo: 0.0, hi: 5.0 }).unwrap();
        let sim = HumanSensorSim::from_corpus(cog, scheme(), &tiny_corpus(), Split::Test).unwrap();
        let run = |seed| {
            let mut rng = stream(seed, 0);
            (0..20).map(|_| observe(&sim, &[2.0; 5], &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(run(8), run(8));
    }
}
