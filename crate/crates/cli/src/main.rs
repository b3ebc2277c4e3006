#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mct_core::dynamics::ModelId;
use mct_core::landscape::{Axis, MeshSpec};
use mct_core::oracle::run_oracle_suite;
use mct_core::pipeline::{self, ExperimentConfig, StageInputs, CONFIG_FILE};
use mct_core::{MctError, Result};

/// Minimum control time from fidelity landscapes by unsupervised learning.
#[derive(Debug, Parser)]
#[command(name = "mct", version)]
struct Cli {
    /// TOML experiment config; defaults to `<out>/config.toml` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Master seed; overrides the config and MCT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the landscape dataset.
    Generate(Overrides),
    /// Write the four-way holdout split of the dataset.
    Split(Overrides),
    /// Train the autoencoder ensemble.
    Train(Overrides),
    /// Cluster, sweep and predict the MCT.
    Predict(AnalysisArgs),
    /// Input-weight importance map and threshold mask.
    Weights(AnalysisArgs),
    /// Long-time accuracy curves and period comparison.
    Longtime(LongtimeArgs),
    /// Check the propagator against closed forms.
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

/// Flags mirroring config fields.
#[derive(Debug, Args, Default)]
struct Overrides {
    /// LZ or GENERALIZED_LZ3.
    #[arg(long)]
    model: Option<ModelId>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    delta_a: Option<f64>,
    #[arg(long)]
    delta_b: Option<f64>,
    #[arg(long)]
    t_start: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    t_step: Option<f64>,
    /// Points per mesh axis (all axes, keeping their range).
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated member labels such as `190x40,100x10`.
    #[arg(long, value_delimiter = ',')]
    members: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Number of clusters; skips the elbow scan.
    #[arg(long)]
    k: Option<usize>,
    /// Importance threshold in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Dataset to analyse instead of the run's own (transfer mode).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory of trained networks instead of `<out>/networks`.
    #[arg(long)]
    networks: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LongtimeArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated gaps to study.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let m = &mut cfg.model;
        set(&mut m.model_id, self.model);
        set(&mut m.delta, self.delta);
        set(&mut m.delta_a, self.delta_a);
        set(&mut m.delta_b, self.delta_b);
        set(&mut cfg.time.t_start, self.t_start);
        set(&mut cfg.time.t_end, self.t_end);
        set(&mut cfg.time.t_step, self.t_step);
        if let Some(count) = self.grid {
            let axes = cfg.mesh.axes.iter().map(|a| Axis::new(a.min, a.max, count)).collect();
            cfg.mesh = MeshSpec { axes };
        }
        if let Some(members) = &self.members {
            cfg.ensemble.members = members.clone();
        }
        set(&mut cfg.train.epochs, self.epochs);
        if self.k.is_some() {
            cfg.clustering.k = self.k;
        }
        if self.threshold.is_some() {
            cfg.weights.threshold = self.threshold;
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let in_run = cli.out.join(CONFIG_FILE);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if in_run.exists() => ExperimentConfig::load(&in_run)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn configured(cli: &Cli, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = load_config(cli)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn inputs(args: &AnalysisArgs) -> StageInputs {
    StageInputs {
        dataset: args.dataset.clone(),
        networks: args.networks.clone(),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let out: &Path = &cli.out;
    match &cli.command {
        Command::Generate(o) => {
            let cfg = configured(cli, o)?;
            let ds = pipeline::stage_generate(&cfg, out)?;
            println!(
                "wrote {} landscapes of {} pixels to {}",
                ds.len(),
                ds.pixel_count(),
                out.join(pipeline::DATASET_FILE).display()
            );
        }
        Command::Split(o) => {
            let cfg = configured(cli, o)?;
            let split = pipeline::stage_split(&cfg, out)?;
            println!(
                "split {} samples: ae_train {}, ae_val {}, km_train {}, perf {}",
                split.len(),
                split.ae_train.len(),
                split.ae_val.len(),
                split.km_train.len(),
                split.perf.len()
            );
        }
        Command::Train(o) => {
            let cfg = configured(cli, o)?;
            if !out.join(pipeline::SPLIT_FILE).exists() {
                pipeline::stage_split(&cfg, out)?;
            }
            let outcomes = pipeline::stage_train(&cfg, out)?;
            let trained = outcomes.iter().filter(|o| o.trained().is_some()).count();
            println!("trained {trained} of {} members", outcomes.len());
            for o in &outcomes {
                if let pipeline::MemberOutcome::Failed { slot, error, .. } = o {
                    println!("  {} failed: {error}", slot.spec.label());
                }
            }
        }
        Command::Predict(a) => {
            let cfg = configured(cli, &a.overrides)?;
            let r = pipeline::stage_predict(&cfg, out, &inputs(a))?;
            println!(
                "T' = {:.4} (k = {}, {} members)",
                r.prediction.t_prime,
                r.k,
                r.members.len()
            );
            match r.analytic_mct {
                Some(t) => println!("analytic MCT = {t:.4}"),
                None => println!("analytic MCT: none for this model"),
            }
            println!("empirical MCT = {:.4}", r.empirical_mct);
        }
        Command::Weights(a) => {
            let cfg = configured(cli, &a.overrides)?;
            let r = pipeline::stage_weights(&cfg, out, &inputs(a))?;
            println!(
                "{} of {} pixels at threshold {} (rotation Jaccard {:.3})",
                r.selected,
                r.mask.len(),
                r.threshold,
                r.rotation_jaccard
            );
        }
        Command::Longtime(a) => {
            let mut cfg = load_config(cli)?;
            a.overrides.apply(&mut cfg);
            // Time flags address the long sweep here.
            set(&mut cfg.longtime.t_end, a.overrides.t_end);
            set(&mut cfg.longtime.t_step, a.overrides.t_step);
            if let Some(d) = &a.deltas {
                cfg.longtime.deltas = d.clone();
            }
            if !(cfg.longtime.t_step > 0.0) || !(cfg.longtime.t_end > 0.0) {
                return Err(MctError::param("long-time t_end and t_step must be positive"));
            }
            cfg.validate()?;
            for r in pipeline::stage_longtime(&cfg, out)? {
                let c = &r.comparison;
                println!(
                    "delta {}: tau_accuracy {:.4}, 2 tau_fidelity {:.4}, ratio {:.4}",
                    c.delta, c.tau_accuracy, c.two_tau_fidelity, c.ratio
                );
            }
        }
        Command::OracleCheck { samples } => {
            let report = run_oracle_suite(*samples, load_config(cli)?.master_seed)?;
            for c in &report.checks {
                println!(
                    "{} {} ({} cases): max error {:.3e}, tolerance {:.0e}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.max_error,
                    c.tolerance
                );
            }
            if !report.passed() {
                return Err(MctError::Numeric("oracle check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 1 {
                eprintln!("run `mct --help` for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
