use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lapf_cli::{cmd_interactive, cmd_report, cmd_run, cmd_train_classifier, cmd_train_regressor, exit_code, gen_corpus, run_outputs, ExperimentConfig, Mode, UsageError};

#[derive(Parser)]
#[command(name = "lapf", version, about = "Particle filtering with natural-language observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags that override keys of the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config; defaults to the built-in canal setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    particles: Option<usize>,
    #[arg(long, global = true)]
    sensors: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    ood_bank: Option<PathBuf>,
    #[arg(long, global = true)]
    ood_threshold: Option<f64>,
    #[arg(long, global = true)]
    classifier: Option<PathBuf>,
    #[arg(long, global = true)]
    regressor: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus_seed: Option<u64>,
    #[arg(long, global = true)]
    texts_per_level: Option<usize>,
    /// Split fractions as `train,val,test`.
    #[arg(long, global = true, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    train_seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> anyhow::Result<()> {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+;)*) => {
                $(if let Some(v) = &self.$flag { cfg.$($field).+ = v.clone(); })*
            };
        }
        set! {
            seed => seed;
            trials => trials;
            steps => steps;
            particles => particles;
            sensors => sensors;
            output_dir => output_dir;
            corpus => corpus.path;
            ood_bank => ood.bank;
            ood_threshold => ood.threshold;
            classifier => models.classifier;
            regressor => models.regressor;
            corpus_seed => corpus.seed;
            texts_per_level => corpus.texts_per_level;
            epochs => training.epochs;
            learning_rate => training.learning_rate;
            train_seed => training.seed;
        }
        if let Some(f) = &self.fractions {
            let [train, val, test] = f[..] else {
                return Err(UsageError(format!("--fractions takes three values, got {}", f.len())).into());
            };
            cfg.corpus.fractions = lapf_core::corpus::SplitFractions { train, val, test };
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate and split the synthetic corpus, and write the out-of-domain bank.
    GenCorpus {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the label classifier; writes the model and a per-epoch loss CSV.
    TrainClassifier {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the level regressor; its validation MSE is stored in the model file.
    TrainRegressor {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run Monte Carlo trials and write trajectories and MSE metrics.
    Run {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Replace texts with out-of-domain ones when the percept is below the threshold.
        #[arg(long)]
        ood: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Merge metrics CSVs into one comparison table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read texts from standard input, one per step, and print the estimate.
    Interactive {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn config(overrides: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(overrides.config.as_deref())?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenCorpus { overrides } => {
            let cfg = config(&overrides)?;
            let (corpus, [train, val, test]) = gen_corpus(&cfg)?;
            println!("wrote {} records to {}", corpus.len(), cfg.corpus.path.display());
            println!("train {train}\nval {val}\ntest {test}");
            println!("wrote out-of-domain bank to {}", cfg.ood.bank.display());
        }
        Command::TrainClassifier { overrides } => {
            let cfg = config(&overrides)?;
            let (_, metrics) = cmd_train_classifier(&cfg)?;
            let best = metrics.selected();
            println!(
                "classifier: kept epoch {} (val loss {}, val accuracy {}); wrote {}",
                metrics.best_epoch,
                best.val_loss.unwrap_or(f64::NAN),
                best.val_accuracy.unwrap_or(f64::NAN),
                cfg.models.classifier.display()
            );
        }
        Command::TrainRegressor { overrides } => {
            let cfg = config(&overrides)?;
            let (model, metrics) = cmd_train_regressor(&cfg)?;
            println!(
                "regressor: kept epoch {} (val MSE {}); wrote {}",
                metrics.best_epoch,
                model.val_mse.unwrap_or(f64::NAN),
                cfg.models.regressor.display()
            );
        }
        Command::Run { mode, ood, overrides } => {
            let cfg = config(&overrides)?;
            let result = cmd_run(&cfg, mode, ood)?;
            let r = &result.report;
            println!("{}: MSE {} ± {} over {} trials", r.method, r.overall_mean, r.overall_std, r.trials);
            for path in run_outputs(&cfg.output_dir, &r.method) {
                println!("wrote {}", path.display());
            }
        }
        Command::Report { inputs, out } => {
            print!("{}", cmd_report(&inputs, out.as_deref())?);
        }
        Command::Interactive { overrides } => {
            let cfg = config(&overrides)?;
            cmd_interactive(&cfg, io::stdin().lock(), io::stdout().lock())?;
        }
        Command::Config { overrides } => {
            print!("{}", config(&overrides)?.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
