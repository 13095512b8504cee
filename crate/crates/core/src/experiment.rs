//! Monte Carlo trials: simulate the canal and its human observers, run a
//! filter on the generated texts, and score the estimates.
//!
//! Every trial uses seed `base_seed + trial`. Truth, percepts, and text
//! choices come from separate streams, so all methods (and the out-of-domain
//! variant) see the same plant trajectory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{run_filter, ObservationBackend, PriorSpec, StepSummary};
use crate::humansensor::{emit_text, perceive, CognitiveModel, HumanSensorSim, QuantizationScheme, SensorTruth};
use crate::random::stream;
use crate::statespace::{step_plant, Interval, PlantModel, StateVector};

const PLANT_STREAM: u64 = 10;
const PERCEPT_STREAM: u64 = 11;
const TEXT_STREAM: u64 = 12;
const FILTER_STREAM: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub plant: PlantModel,
    pub prior: PriorSpec,
    pub scheme: QuantizationScheme,
    pub cognitive: CognitiveModel,
    pub steps: usize,
    pub particles: usize,
    pub trials: usize,
    pub sensors: usize,
    pub seed: u64,
}

impl ExperimentSettings {
    /// The canal benchmark: five gauges, one observer of the first gauge,
    /// five labels on `[0, 5]`, prior `N(0, I)`.
    pub fn canal() -> Self {
        let plant = PlantModel::canal();
        let range = Interval { lo: 0.0, hi: 5.0 };
        Self {
            prior: PriorSpec { mean: vec![0.0; 5], cov_diag: vec![1.0; 5] },
            scheme: QuantizationScheme::uniform(range.lo, range.hi, 5).expect("valid scheme"),
            cognitive: CognitiveModel::first_component(5, 1.0, range).expect("valid cognitive model"),
            plant,
            steps: 100,
            particles: 1000,
            trials: 1000,
            sensors: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.particles == 0 || self.trials == 0 || self.sensors == 0 {
            return Err(Error::Config("steps, particles, trials and sensors must all be at least 1".into()));
        }
        self.prior.validate()?;
        self.cognitive.validate()?;
        if self.prior.dim() != self.plant.dim() || self.cognitive.c.len() != self.plant.dim() {
            return Err(Error::Config("prior, cognitive model and plant disagree on dimension".into()));
        }
        Ok(())
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// Ground truth and the texts it produced, steps `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub truth: Vec<StateVector>,
    pub texts: Vec<Vec<String>>,
    pub percepts: Vec<Vec<SensorTruth>>,
}

/// Simulates one trial. Without a sensor simulator no texts are produced.
pub fn simulate_trial(settings: &ExperimentSettings, sim: Option<&HumanSensorSim>, trial: usize) -> Result<TrialData> {
    let seed = settings.trial_seed(trial);
    let mut plant_rng = stream(seed, PLANT_STREAM);
    let mut percept_rng = stream(seed, PERCEPT_STREAM);
    let mut text_rng = stream(seed, TEXT_STREAM);
    let mut x = settings.plant.x0_true.clone();
    let mut data = TrialData {
        truth: Vec::with_capacity(settings.steps),
        texts: Vec::with_capacity(settings.steps),
        percepts: Vec::with_capacity(settings.steps),
    };
    for _ in 0..settings.steps {
        x = step_plant(&settings.plant, &x, &mut plant_rng)?;
        let mut texts = Vec::new();
        let mut percepts = Vec::new();
        for _ in 0..settings.sensors {
            let y = perceive(&settings.cognitive, &x, &mut percept_rng)?;
            let q = settings.scheme.quantize(y)?;
            percepts.push(SensorTruth { y, q });
            if let Some(sim) = sim {
                texts.push(emit_text(sim, y, &mut text_rng)?);
            }
        }
        data.truth.push(x.clone());
        data.texts.push(texts);
        data.percepts.push(percepts);
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub truth: Vec<StateVector>,
    pub steps: Vec<StepSummary>,
    /// Mean over steps of the squared error, per location.
    pub location_mse: Vec<f64>,
    /// Mean over steps and locations.
    pub mse: f64,
    pub degeneracy_count: usize,
}

/// Runs the filter on a simulated trial and scores it.
pub fn run_trial<B>(settings: &ExperimentSettings, backend: &B, data: &TrialData, trial: usize) -> Result<TrialResult>
where
    B: ObservationBackend + ?Sized,
{
    let mut rng = stream(settings.trial_seed(trial), FILTER_STREAM);
    let run = run_filter(&settings.plant, backend, &settings.prior, &data.texts, settings.particles, &mut rng)?;
    let n = settings.plant.dim();
    let mut location_mse = vec![0.0; n];
    for (truth, step) in data.truth.iter().zip(&run.steps) {
        for ((acc, t), e) in location_mse.iter_mut().zip(truth.iter()).zip(step.estimate.iter()) {
            *acc += (e - t) * (e - t);
        }
    }
    let steps = run.steps.len().max(1) as f64;
    location_mse.iter_mut().for_each(|v| *v /= steps);
    let mse = location_mse.iter().sum::<f64>() / n as f64;
    Ok(TrialResult {
        trial,
        truth: data.truth.clone(),
        steps: run.steps,
        location_mse,
        mse,
        degeneracy_count: run.degeneracy_count,
    })
}

/// Mean and spread of the per-trial MSEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub trials: usize,
    pub location_mean: Vec<f64>,
    pub location_std: Vec<f64>,
    pub overall_mean: f64,
    pub overall_std: f64,
    pub degeneracy_total: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl MetricsReport {
    /// Aggregates trials in the order given. Standard deviations use `n - 1`.
    pub fn from_trials(method: &str, trials: &[TrialResult]) -> Self {
        let n = trials.first().map_or(0, |t| t.location_mse.len());
        let (location_mean, location_std) =
            (0..n).map(|k| mean_std(trials.iter().map(move |t| t.location_mse[k]))).unzip();
        let (overall_mean, overall_std) = mean_std(trials.iter().map(|t| t.mse));
        Self {
            method: method.to_string(),
            trials: trials.len(),
            location_mean,
            location_std,
            overall_mean,
            overall_std,
            degeneracy_total: trials.iter().map(|t| t.degeneracy_count).sum(),
        }
    }

    /// Standard error of the overall mean.
    pub fn standard_error(&self) -> f64 {
        self.overall_std / (self.trials as f64).sqrt()
    }

    /// Rows of `location,method,mse_mean,mse_std`, without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (k, (m, s)) in self.location_mean.iter().zip(&self.location_std).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", k + 1, self.method, m, s);
        }
        let _ = writeln!(out, "overall,{},{},{}", self.method, self.overall_mean, self.overall_std);
        out
    }
}

pub const METRICS_HEADER: &str = "location,method,mse_mean,mse_std";

pub fn write_metrics_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    fs::write(path, format!("{METRICS_HEADER}\n{}", report.csv_rows()))?;
    Ok(())
}

/// Header `trial,step,true_1..true_n,est_1..est_n,ess,degenerate`.
pub fn trajectory_header(n: usize) -> String {
    let mut cols = vec!["trial".to_string(), "step".to_string()];
    cols.extend((1..=n).map(|i| format!("true_{i}")));
    cols.extend((1..=n).map(|i| format!("est_{i}")));
    cols.push("ess".into());
    cols.push("degenerate".into());
    cols.join(",")
}

pub fn write_trajectory_csv(trials: &[TrialResult], n: usize, path: &Path) -> Result<()> {
    let mut out = trajectory_header(n);
    out.push('\n');
    for t in trials {
        for (truth, s) in t.truth.iter().zip(&t.steps) {
            let _ = write!(out, "{},{}", t.trial, s.step);
            for v in truth.iter().chain(s.estimate.iter()) {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", s.ess, s.degenerate as u8);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub trials: Vec<TrialResult>,
    pub report: MetricsReport,
}

/// Runs every trial, in parallel, and aggregates in trial order.
pub fn run_experiment<B>(
    settings: &ExperimentSettings,
    sim: Option<&HumanSensorSim>,
    backend: &B,
    method: &str,
) -> Result<ExperimentResult>
where
    B: ObservationBackend + ?Sized,
{
    settings.validate()?;
    let trials = (0..settings.trials)
        .into_par_iter()
        .map(|trial| {
            let data = simulate_trial(settings, sim, trial)?;
            run_trial(settings, backend, &data, trial)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::from_trials(method, &trials);
    Ok(ExperimentResult { trials, report })
}

/// All texts a simulator can emit, for cache warming.
pub fn emittable_texts(sim: &HumanSensorSim) -> Vec<&str> {
    let mut texts: Vec<&str> = sim.levels().flat_map(|l| sim.texts_near(l).iter().map(String::as_str)).collect();
    texts.extend(sim.ood_bank().iter().map(String::as_str));
    texts.sort_unstable();
    texts.dedup();
    texts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::NoObservation;

    fn small() -> ExperimentSettings {
        ExperimentSettings { steps: 20, particles: 50, trials: 6, seed: 3, ..ExperimentSettings::canal() }
    }

    #[test]
    fn single_particle_single_step_mse_by_hand() {
        let settings = ExperimentSettings { steps: 1, particles: 1, trials: 1, ..small() };
        let result = run_experiment(&settings, None, &NoObservation, "baseline").unwrap();
        let t = &result.trials[0];
        let by_hand: f64 = t.truth[0]
            .iter()
            .zip(t.steps[0].estimate.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 5.0;
        assert!((result.report.overall_mean - by_hand).abs() < 1e-15);
        assert_eq!(result.report.overall_std, 0.0);
    }

    #[test]
    fn trial_results_do_not_depend_on_scheduling() {
        let a = run_experiment(&small(), None, &NoObservation, "baseline").unwrap();
        let b = run_experiment(&small(), None, &NoObservation, "baseline").unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn truth_is_shared_across_sensor_settings() {
        let s = small();
        let a = simulate_trial(&s, None, 2).unwrap();
        let b = simulate_trial(&ExperimentSettings { sensors: 3, ..s.clone() }, None, 2).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(b.percepts[0].len(), 3);
    }

    #[test]
    fn report_rows() {
        let r = run_experiment(&small(), None, &NoObservation, "baseline").unwrap().report;
        let rows = r.csv_rows();
        assert_eq!(rows.lines().count(), 6);
        assert!(rows.lines().last().unwrap().starts_with("overall,baseline,"));
        assert!(r.location_std.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn header_shape() {
        assert_eq!(
            trajectory_header(2),
            "trial,step,true_1,true_2,est_1,est_2,ess,degenerate"
        );
    }

    #[test]
    fn zero_trials_rejected() {
        let s = ExperimentSettings { trials: 0, ..small() };
        assert!(matches!(run_experiment(&s, None, &NoObservation, "x"), Err(Error::Config(_))));
    }
}
