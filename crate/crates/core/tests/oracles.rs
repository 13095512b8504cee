//! Checks against independently computed answers: finite differences,
//! brute-force enumeration, Monte Carlo and closed-form counts.

#[path = "support/checks.rs"]
mod checks;

use lapf_core::experiment::{run_trial, simulate_trial, ExperimentSettings};
use lapf_core::filter::{label_prob_given_state, lapf_likelihood, multi_sensor_likelihood, NoObservation, ObservationBackend};
use lapf_core::{CognitiveModel, LabelDistribution, QuantizationScheme};

#[test]
fn gradients_match_finite_differences() {
    checks::gradient_check().unwrap();
}

#[test]
fn text_likelihood_matches_exact_bayes_on_a_toy() {
    checks::toy_bayes_check().unwrap();
}

#[test]
fn three_sensors_match_enumeration_of_label_triples() {
    checks::multi_sensor_check().unwrap();
}

#[test]
fn label_probabilities_match_monte_carlo() {
    checks::monte_carlo_check().unwrap();
}

#[test]
fn systematic_counts_match_ceiling_formula() {
    checks::resampling_check(300).unwrap();
}

/// Reads the true label out of the text and uses a one-hot `p(q|s)`.
struct OracleLabels {
    scheme: QuantizationScheme,
    cognitive: CognitiveModel,
    uniform: bool,
}

impl ObservationBackend for OracleLabels {
    type Observation = LabelDistribution;

    fn interpret(&self, texts: &[String]) -> lapf_core::Result<Vec<LabelDistribution>> {
        let m = self.scheme.levels();
        Ok(texts
            .iter()
            .map(|t| if self.uniform { LabelDistribution::uniform(m) } else { LabelDistribution::one_hot(m, t.parse().unwrap()) })
            .collect())
    }

    fn likelihood(&self, observations: &[LabelDistribution], x: &[f64]) -> f64 {
        let p_x = label_prob_given_state(&self.scheme, &self.cognitive, x).unwrap();
        multi_sensor_likelihood(observations.iter().map(|p| lapf_likelihood(p, p_x.probs())))
    }
}

fn labelled_trials(settings: &ExperimentSettings, uniform: bool) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let backend = OracleLabels { scheme: settings.scheme.clone(), cognitive: settings.cognitive.clone(), uniform };
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for trial in 0..settings.trials {
        let mut data = simulate_trial(settings, None, trial).unwrap();
        data.texts = data.percepts.iter().map(|ps| ps.iter().map(|p| p.q.to_string()).collect()).collect();
        with.push(run_trial(settings, &backend, &data, trial).unwrap().mse);
        without.push(run_trial(settings, &NoObservation, &data, trial).unwrap().mse);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&with), mean(&without), with, without)
}

#[test]
fn true_labels_beat_prediction_only() {
    let settings = ExperimentSettings { steps: 40, particles: 300, trials: 30, seed: 11, ..ExperimentSettings::canal() };
    let (informed, baseline, ..) = labelled_trials(&settings, false);
    assert!(informed < baseline - 0.05, "labels {informed} vs baseline {baseline}");
}

#[test]
fn uninformative_text_equals_prediction_only() {
    let settings = ExperimentSettings { steps: 20, particles: 200, trials: 5, seed: 3, ..ExperimentSettings::canal() };
    let (.., with, without) = labelled_trials(&settings, true);
    for (a, b) in with.iter().zip(&without) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
