//! Oracle checks shared by the core tests and the acceptance suite. Each
//! returns a short summary on success and the first discrepancy otherwise.

use lapf_core::filter::{
    label_prob_given_state, lapf_likelihood, multi_sensor_likelihood, resample_with_offset, update_weights,
};
use lapf_core::humansensor::perceive;
use lapf_core::langmodel::{Embedding, Head, Target};
use lapf_core::{stream, CognitiveModel, Interval, LabelDistribution, MlpParams, ParticleSet, QuantizationScheme, StateVector};
use rand::Rng;

pub type Check = Result<String, String>;

fn canal_cognitive() -> CognitiveModel {
    CognitiveModel::first_component(5, 1.0, Interval { lo: 0.0, hi: 5.0 }).unwrap()
}

fn state(x1: f64) -> Vec<f64> {
    vec![x1, 0.0, 0.0, 0.0, 0.0]
}

fn particles(states: &[Vec<f64>]) -> ParticleSet {
    ParticleSet::from_states(&states.iter().cloned().map(StateVector).collect::<Vec<_>>()).unwrap()
}

/// Central differences on 20 seeded [4, 3, 2, k] networks with both heads.
pub fn gradient_check() -> Check {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..20u64 {
        let mut rng = stream(seed, 99);
        let e = Embedding((0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        for (head, k, target) in [
            (Head::Softmax, 3, Target::Label(1 + (seed as usize % 3))),
            (Head::SigmoidScaled { scale: 5.0 }, 1, Target::Value(rng.random_range(0.0..5.0))),
        ] {
            let mut model = MlpParams::init(&[4, 3, 2, k], head, &mut stream(seed, 1)).unwrap();
            // Zero biases can leave a pre-activation exactly on the rectifier kink.
            for b in model.layers.iter_mut().flat_map(|l| l.bias.iter_mut()) {
                *b = rng.random_range(-0.5..0.5);
            }
            let (_, grad) = model.backward(&e, target).unwrap();
            for (l, layer) in model.layers.iter().enumerate() {
                let n_w = layer.weights.len();
                for j in 0..n_w + layer.bias.len() {
                    let bump = |delta: f64| {
                        let mut m = model.clone();
                        if j < n_w {
                            m.layers[l].weights[j] += delta;
                        } else {
                            m.layers[l].bias[j - n_w] += delta;
                        }
                        m.loss(&e, target).unwrap()
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = if j < n_w { grad.layers[l].weights[j] } else { grad.layers[l].bias[j - n_w] };
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    worst = worst.max(rel);
                    checked += 1;
                    if rel >= 1e-4 {
                        return Err(format!("seed {seed} {head:?} layer {l} param {j}: fd {fd} vs {an}"));
                    }
                }
            }
        }
    }
    Ok(format!("{checked} parameters, max relative error {worst:.2e}"))
}

/// Three states, three labels, four texts generated from labels by a known
/// table. The posterior from `p(q|s)` must equal exact marginalization.
pub fn toy_bayes_check() -> Check {
    let scheme = QuantizationScheme::uniform(0.0, 5.0, 3).unwrap();
    let cog = canal_cognitive();
    let states = [state(0.7), state(2.4), state(4.6)];
    // p(s | q): rows are labels, columns texts.
    let s_given_q = [[0.6, 0.2, 0.1, 0.1], [0.1, 0.5, 0.3, 0.1], [0.05, 0.05, 0.3, 0.6]];
    let q_given_x: Vec<Vec<f64>> = states.iter().map(|x| label_prob_given_state(&scheme, &cog, x).unwrap().0).collect();
    let mut worst: f64 = 0.0;
    for s in 0..4 {
        let exact: Vec<f64> = q_given_x.iter().map(|pq| (0..3).map(|q| s_given_q[q][s] * pq[q]).sum()).collect();
        let z: f64 = exact.iter().sum();
        let col: f64 = (0..3).map(|q| s_given_q[q][s]).sum();
        let q_given_s = LabelDistribution::new((0..3).map(|q| s_given_q[q][s] / col).collect()).unwrap();
        let lik: Vec<f64> = q_given_x.iter().map(|pq| lapf_likelihood(&q_given_s, pq)).collect();
        let mut set = particles(&states);
        update_weights(&mut set, &lik).unwrap();
        for (w, e) in set.weights().iter().zip(&exact) {
            worst = worst.max((w - e / z).abs());
        }
    }
    if worst < 1e-12 {
        Ok(format!("max abs difference {worst:.1e}"))
    } else {
        Err(format!("max abs difference {worst:.3e}"))
    }
}

/// The toy above with three sensors: all 27 label triples enumerated.
pub fn multi_sensor_check() -> Check {
    let scheme = QuantizationScheme::uniform(0.0, 5.0, 3).unwrap();
    let cog = canal_cognitive();
    let states = [state(0.7), state(2.4), state(4.6)];
    let s_given_q = [[0.6, 0.2, 0.1, 0.1], [0.1, 0.5, 0.3, 0.1], [0.05, 0.05, 0.3, 0.6]];
    let q_given_x: Vec<Vec<f64>> = states.iter().map(|x| label_prob_given_state(&scheme, &cog, x).unwrap().0).collect();
    let mut worst: f64 = 0.0;
    for texts in [[0usize, 3, 1], [2, 2, 2], [3, 0, 1], [1, 1, 0]] {
        let brute: Vec<f64> = q_given_x
            .iter()
            .map(|pq| {
                (0..27)
                    .map(|combo| {
                        let labels = [combo % 3, combo / 3 % 3, combo / 9];
                        (0..3).map(|h| s_given_q[labels[h]][texts[h]] * pq[labels[h]]).product::<f64>()
                    })
                    .sum()
            })
            .collect();
        let z: f64 = brute.iter().sum();
        let lik: Vec<f64> = q_given_x
            .iter()
            .map(|pq| {
                multi_sensor_likelihood(texts.iter().map(|&s| {
                    let col: f64 = (0..3).map(|q| s_given_q[q][s]).sum();
                    let p = LabelDistribution::new((0..3).map(|q| s_given_q[q][s] / col).collect()).unwrap();
                    lapf_likelihood(&p, pq)
                }))
            })
            .collect();
        let mut set = particles(&states);
        update_weights(&mut set, &lik).unwrap();
        for (w, b) in set.weights().iter().zip(&brute) {
            worst = worst.max((w - b / z).abs());
        }
    }
    if worst < 1e-12 {
        Ok(format!("max abs difference {worst:.1e}"))
    } else {
        Err(format!("max abs difference {worst:.3e}"))
    }
}

/// Closed-form label probabilities against 10^6 simulated percepts at ten
/// random states, two of them well outside the quantizer range.
pub fn monte_carlo_check() -> Check {
    let scheme = QuantizationScheme::uniform(0.0, 5.0, 5).unwrap();
    let cog = canal_cognitive();
    let draws = 1_000_000;
    let mut rng = stream(2024, 0);
    let mut states = vec![state(rng.random_range(-3.0..-1.0)), state(rng.random_range(6.0..8.0))];
    for _ in 0..8 {
        states.push((0..5).map(|_| rng.random_range(-1.0..6.0)).collect());
    }
    let mut worst_z: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for (i, x) in states.iter().enumerate() {
        let p = label_prob_given_state(&scheme, &cog, x).unwrap();
        worst_sum = worst_sum.max((p.probs().iter().sum::<f64>() - 1.0).abs());
        let mut counts = [0usize; 5];
        let mut rng = stream(1234, i as u64);
        for _ in 0..draws {
            let y = perceive(&cog, x, &mut rng).unwrap();
            counts[scheme.quantize(y).unwrap() - 1] += 1;
        }
        for (q, (&c, &pq)) in counts.iter().zip(p.probs()).enumerate() {
            let freq = c as f64 / draws as f64;
            let se = (pq * (1.0 - pq) / draws as f64).sqrt();
            let z = if se > 0.0 { (freq - pq).abs() / se } else if freq == pq { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z);
            if z > 4.0 {
                return Err(format!("state {x:?}, label {}: simulated {freq} vs {pq}", q + 1));
            }
        }
    }
    if worst_sum >= 1e-12 {
        return Err(format!("probabilities sum off by {worst_sum:.3e}"));
    }
    Ok(format!("max deviation {worst_z:.2} SE, max sum error {worst_sum:.1e}"))
}

/// Systematic resampling against `ceil(S_i - u) - ceil(S_{i-1} - u)` where
/// `S` is the scaled cumulative weight. Dyadic weights keep the sums exact.
pub fn resampling_check(vectors: usize) -> Check {
    for seed in 0..vectors as u64 {
        let mut rng = stream(seed, 7);
        let n = rng.random_range(1..=50usize);
        let mut units = vec![0u32; n];
        for _ in 0..4096 {
            units[rng.random_range(0..n)] += 1;
        }
        // Some zero-weight particles.
        for _ in 0..n / 4 {
            let i = rng.random_range(0..n);
            let j = (i + 1) % n;
            units[j] += std::mem::take(&mut units[i]);
        }
        let u = rng.random_range(0..1u64 << 20) as f64 / (1u64 << 20) as f64;
        let states: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let mut set = particles(&states);
        update_weights(&mut set, &units.iter().map(|c| *c as f64).collect::<Vec<_>>()).unwrap();
        let out = resample_with_offset(&set, u);
        let mut got = vec![0usize; n];
        for x in out.particles() {
            got[x[0] as usize] += 1;
        }
        let edge = |s: f64| (s - u).ceil().clamp(0.0, n as f64);
        let mut s_prev = 0.0;
        for i in 0..n {
            let s = s_prev + n as f64 * units[i] as f64 / 4096.0;
            let expected = (edge(s) - edge(s_prev)) as usize;
            if got[i] != expected {
                return Err(format!("vector {seed}, particle {i}: {} copies, expected {expected}", got[i]));
            }
            s_prev = s;
        }
    }
    Ok(format!("{vectors} weight vectors, all counts exact"))
}
