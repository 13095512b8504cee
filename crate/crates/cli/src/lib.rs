//! Commands behind the `lapf` binary: corpus generation, training, Monte
//! Carlo runs, report merging, and an interactive session.

pub mod config;

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use lapf_core::corpus::{default_ood_bank, generate_corpus, load_corpus, load_text_lines, save_corpus, save_text_lines, split_corpus, Corpus, Split};
use lapf_core::experiment::{emittable_texts, run_experiment, write_metrics_csv, write_trajectory_csv, ExperimentResult, METRICS_HEADER};
use lapf_core::filter::{EdapfLikelihoodModel, LapfLikelihoodModel, NoObservation, ParticleFilter};
use lapf_core::humansensor::HumanSensorSim;
use lapf_core::langmodel::{train_classifier, train_regressor, TrainMetrics};
use lapf_core::{stream, TextModel};

pub use config::ExperimentConfig;

/// A usage or configuration problem; the binary exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 2 for usage and configuration errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<lapf_core::Error>(),
                Some(lapf_core::Error::Config(_) | lapf_core::Error::InvalidInput(_))
            )
    });
    if usage {
        2
    } else {
        1
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} not found: {}", path.display())).into())
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Generates and splits the corpus, writes it with the out-of-domain bank.
/// Returns the corpus and `(train, val, test)` record counts.
pub fn gen_corpus(cfg: &ExperimentConfig) -> anyhow::Result<(Corpus, [usize; 3])> {
    let c = &cfg.corpus;
    c.fractions.validate()?;
    let corpus = generate_corpus(c.seed, c.grid, c.texts_per_level)?;
    let corpus = split_corpus(&corpus, c.fractions, c.seed)?;
    ensure_parent(&c.path)?;
    save_corpus(&corpus, &c.path)?;
    ensure_parent(&cfg.ood.bank)?;
    save_text_lines(&default_ood_bank(), &cfg.ood.bank)?;
    let counts = [Split::Train, Split::Val, Split::Test].map(|s| corpus.count(s));
    Ok((corpus, counts))
}

fn load_configured_corpus(cfg: &ExperimentConfig) -> anyhow::Result<Corpus> {
    require_file(&cfg.corpus.path, "corpus file")?;
    Ok(load_corpus(&cfg.corpus.path)?)
}

/// `models/classifier.json` -> `models/classifier_loss.csv`.
pub fn loss_csv_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}_loss.csv"))
}

/// One row per epoch: `epoch,train_loss,val_loss,val_accuracy`.
pub fn loss_csv(metrics: &TrainMetrics) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for e in &metrics.epochs {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, opt(e.val_loss), opt(e.val_accuracy)));
    }
    out
}

fn save_model(model: &TextModel, metrics: &TrainMetrics, path: &Path) -> anyhow::Result<()> {
    ensure_parent(path)?;
    model.save(path)?;
    fs::write(loss_csv_path(path), loss_csv(metrics))?;
    Ok(())
}

pub fn cmd_train_classifier(cfg: &ExperimentConfig) -> anyhow::Result<(TextModel, TrainMetrics)> {
    let corpus = load_configured_corpus(cfg)?;
    let (model, metrics) = train_classifier(&corpus, &cfg.scheme()?, &cfg.models.embedder, &cfg.training)?;
    save_model(&model, &metrics, &cfg.models.classifier)?;
    Ok((model, metrics))
}

pub fn cmd_train_regressor(cfg: &ExperimentConfig) -> anyhow::Result<(TextModel, TrainMetrics)> {
    let corpus = load_configured_corpus(cfg)?;
    let (model, metrics, _) = train_regressor(&corpus, &cfg.scheme()?, &cfg.models.embedder, &cfg.training)?;
    save_model(&model, &metrics, &cfg.models.regressor)?;
    Ok((model, metrics))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Baseline,
    Lapf,
    Edapf,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Lapf => "lapf",
            Mode::Edapf => "edapf",
        }
    }
}

/// Method label used in reports and file names, e.g. `lapf_ood`.
pub fn run_label(mode: Mode, ood: bool) -> String {
    if ood {
        format!("{}_ood", mode.name())
    } else {
        mode.name().to_string()
    }
}

fn load_model(path: &Path, what: &str) -> anyhow::Result<TextModel> {
    require_file(path, what)?;
    TextModel::load(path).with_context(|| format!("loading {}", path.display()))
}

fn sensor_sim(cfg: &ExperimentConfig, ood: bool) -> anyhow::Result<HumanSensorSim> {
    let corpus = load_configured_corpus(cfg)?;
    let sim = HumanSensorSim::from_corpus(cfg.cognitive()?, cfg.scheme()?, &corpus, Split::Test)?;
    if !ood {
        return Ok(sim);
    }
    require_file(&cfg.ood.bank, "out-of-domain bank")?;
    Ok(sim.with_ood(load_text_lines(&cfg.ood.bank)?, cfg.ood.threshold)?)
}

/// Runs all trials of one mode without writing anything.
pub fn run_mode(cfg: &ExperimentConfig, mode: Mode, ood: bool) -> anyhow::Result<ExperimentResult> {
    let settings = cfg.settings()?;
    let label = run_label(mode, ood);
    let result = match mode {
        Mode::Baseline => {
            if ood {
                return Err(UsageError("--ood has no effect in baseline mode".into()).into());
            }
            run_experiment(&settings, None, &NoObservation, &label)?
        }
        Mode::Lapf => {
            let classifier = load_model(&cfg.models.classifier, "classifier model")?;
            let sim = sensor_sim(cfg, ood)?;
            let mut backend = LapfLikelihoodModel::new(settings.scheme.clone(), settings.cognitive.clone(), classifier)?;
            backend.warm_cache(&emittable_texts(&sim))?;
            run_experiment(&settings, Some(&sim), &backend, &label)?
        }
        Mode::Edapf => {
            let regressor = load_model(&cfg.models.regressor, "regressor model")?;
            let r_tilde = regressor.val_mse.ok_or_else(|| {
                UsageError(format!("{} records no validation MSE; is it a regressor?", cfg.models.regressor.display()))
            })?;
            let sim = sensor_sim(cfg, ood)?;
            let mut backend = EdapfLikelihoodModel::new(settings.cognitive.clone(), regressor, r_tilde)?;
            backend.warm_cache(&emittable_texts(&sim))?;
            run_experiment(&settings, Some(&sim), &backend, &label)?
        }
    };
    Ok(result)
}

/// Paths written by [`cmd_run`] for a label.
pub fn run_outputs(dir: &Path, label: &str) -> [PathBuf; 3] {
    [
        dir.join(format!("{label}_trajectory.csv")),
        dir.join(format!("{label}_metrics.csv")),
        dir.join(format!("{label}_metrics.json")),
    ]
}

pub fn cmd_run(cfg: &ExperimentConfig, mode: Mode, ood: bool) -> anyhow::Result<ExperimentResult> {
    let result = run_mode(cfg, mode, ood)?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let [trajectory, metrics_csv, metrics_json] = run_outputs(&cfg.output_dir, &result.report.method);
    write_trajectory_csv(&result.trials, cfg.plant.x0_true.len(), &trajectory)?;
    write_metrics_csv(&result.report, &metrics_csv)?;
    fs::write(&metrics_json, serde_json::to_string_pretty(&result.report)? + "\n")?;
    Ok(result)
}

fn method_rank(method: &str) -> (bool, u8) {
    let (base, ood) = match method.strip_suffix("_ood") {
        Some(base) => (base, true),
        None => (method, false),
    };
    let rank = match base {
        "baseline" => 0,
        "edapf" => 1,
        "lapf" => 2,
        _ => 3,
    };
    (ood, rank)
}

/// Merges metrics CSVs. Rows are copied verbatim; methods are ordered
/// baseline, edapf, lapf, then the out-of-domain variants in the same order.
/// Unknown methods follow in input order.
pub fn merge_reports(inputs: &[(String, String)]) -> anyhow::Result<String> {
    let mut rows: Vec<(String, String)> = Vec::new();
    for (name, text) in inputs {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(METRICS_HEADER) {
            return Err(UsageError(format!("{name}: expected header `{METRICS_HEADER}`")).into());
        }
        for (i, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(UsageError(format!("{name}:{}: expected 4 fields, got {}", i + 2, fields.len())).into());
            }
            rows.push((fields[1].to_string(), line.to_string()));
        }
    }
    rows.sort_by_key(|(method, _)| method_rank(method));
    let mut out = format!("{METRICS_HEADER}\n");
    for (_, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn cmd_report(inputs: &[PathBuf], out: Option<&Path>) -> anyhow::Result<String> {
    if inputs.is_empty() {
        return Err(UsageError("report needs at least one metrics file".into()).into());
    }
    let mut texts = Vec::with_capacity(inputs.len());
    for path in inputs {
        require_file(path, "metrics file")?;
        texts.push((path.display().to_string(), fs::read_to_string(path)?));
    }
    let merged = merge_reports(&texts)?;
    if let Some(out) = out {
        ensure_parent(out)?;
        fs::write(out, &merged)?;
    }
    Ok(merged)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Reads one text per line and advances the filter one step per line. A
/// blank line advances the prediction without an update.
pub fn cmd_interactive<R: BufRead, W: Write>(cfg: &ExperimentConfig, input: R, mut out: W) -> anyhow::Result<usize> {
    let settings = cfg.settings()?;
    let classifier = load_model(&cfg.models.classifier, "classifier model")?;
    let backend = LapfLikelihoodModel::new(settings.scheme.clone(), settings.cognitive.clone(), classifier)?;
    let mut rng = stream(cfg.seed, 30);
    let mut filter = ParticleFilter::new(&settings.plant, &settings.prior, settings.particles, &mut rng)?;
    writeln!(out, "step 0 prior mean {}", fmt_vec(&filter.estimate()))?;
    let mut steps = 0;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        let texts: Vec<String> = if text.is_empty() { Vec::new() } else { vec![text.to_string()] };
        let summary = filter.step(&backend, &texts, &mut rng)?;
        steps += 1;
        match texts.first() {
            Some(t) => {
                let p = backend.label_distribution(t)?;
                writeln!(out, "step {} mean {} p(q|s) {}", summary.step, fmt_vec(&summary.estimate), fmt_vec(p.probs()))?;
            }
            None => writeln!(out, "step {} mean {} (no text)", summary.step, fmt_vec(&summary.estimate))?,
        }
        out.flush()?;
    }
    Ok(steps)
}
