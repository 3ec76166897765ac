//! Command-line experiment runner.
//!
//! Verbs: `train` (one strategy, metrics + manifest + snapshots), `attack`
//! (per-sample membership scores and ROC), `compare` (paired multi-strategy
//! table), `audit` (per-sample leakage reports from a sampler ensemble), and
//! `validate-schedule` (step-size condition checks).
//!
//! Exit codes: 0 success; 2 invalid config or flags; 3 parse error;
//! 4 numeric error; 5 schedule violation; 6 encoding error; 7 shape
//! mismatch; 8 index out of range; 9 io error.

use clap::{Args, Parser, Subcommand};
use sgldkit::attack::{fixed_threshold_attack, mean_train_loss_threshold, roc_points, score_samples};
use sgldkit::experiment::{
    compare_strategies, load_config, manifest_json, render_delimited, render_structured,
    run_experiment_full, write_atomic, ExperimentConfig, ExperimentOutput, Strategy,
};
use sgldkit::net::{LossBound, Sample};
use sgldkit::optim::{validate_schedule, StepSchedule};
use sgldkit::posterior::{save_snapshots, EnsembleMode, EnsemblePredictor};
use sgldkit::privacy::{audit_ensemble, write_mpl_reports, MplReport};
use sgldkit::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sgldkit", version, about = "Train small classifiers and quantify membership-privacy leakage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one strategy and write metrics, a manifest, and (for samplers) snapshots.
    Train(RunArgs),
    /// Train, then write per-sample attack scores and ROC points.
    Attack(RunArgs),
    /// Run several strategies on one shared split and emit a paired table.
    Compare(CompareArgs),
    /// Audit per-sample leakage of a sampler's posterior ensemble.
    Audit(RunArgs),
    /// Check step-size conditions for a schedule or a config's schedule.
    ValidateSchedule(ScheduleArgs),
}

/// Config file plus field overrides; flags win over file values.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML). Relative data paths resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Override the strategy; fields the new strategy does not use are dropped.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// auto | constant | halving
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    halving_epochs: Option<usize>,
    /// Hidden layer widths, comma separated (e.g. 64,32).
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// relu | tanh
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    prior_variance: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    burn_in_fraction: Option<f64>,
    #[arg(long)]
    thinning: Option<usize>,
    #[arg(long)]
    ensemble_k: Option<usize>,
    #[arg(long)]
    loss_bound: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Derive all four seeds from one master seed (split, init, data order,
    /// noise are successive splitmix64 outputs of the master).
    #[arg(long, conflicts_with_all = ["seed_split", "seed_init", "seed_data_order", "seed_noise"])]
    seed_bundle: Option<u64>,
    #[arg(long)]
    seed_split: Option<u64>,
    #[arg(long)]
    seed_init: Option<u64>,
    #[arg(long)]
    seed_data_order: Option<u64>,
    #[arg(long)]
    seed_noise: Option<u64>,
}

impl ConfigArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut config = load_config(&self.config)?;
        if let Some(name) = &self.strategy {
            config = config.derive_for_strategy(Strategy::parse(name)?);
        }
        self.apply_overrides(&mut config);
        Ok(config)
    }

    /// Everything except --strategy, which the verbs handle themselves.
    fn apply_overrides(&self, config: &mut ExperimentConfig) {
        let t = &mut config.training;
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
            // A flag names one explicit rate; per-strategy table entries
            // would silently shadow it otherwise.
            t.learning_rate_overrides.clear();
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = &self.schedule {
            t.schedule = v.clone();
        }
        if let Some(v) = self.halving_epochs {
            t.halving_epochs = v;
        }
        if let Some(v) = self.prior_variance {
            t.prior_variance = Some(v);
        }
        if let Some(v) = self.alpha {
            t.alpha = Some(v);
        }
        if let Some(v) = self.lambda_c {
            t.lambda_c = Some(v);
        }
        if let Some(v) = self.burn_in_fraction {
            t.burn_in_fraction = Some(v);
        }
        if let Some(v) = self.thinning {
            t.thinning = Some(v);
        }
        if let Some(v) = self.ensemble_k {
            t.ensemble_k = Some(v);
        }
        if let Some(v) = &self.hidden {
            config.model.hidden = v.clone();
        }
        if let Some(v) = &self.activation {
            config.model.activation = v.clone();
        }
        if let Some(v) = self.dropout_rate {
            config.model.dropout_rate = Some(v);
        }
        if let Some(v) = self.loss_bound {
            config.privacy.loss_bound = v;
        }
        if let Some(v) = self.lambda {
            config.privacy.lambda = v;
        }
        if let Some(master) = self.seed_bundle {
            config.apply_seed_bundle(master);
        }
        if let Some(v) = self.seed_split {
            config.seeds.split = v;
        }
        if let Some(v) = self.seed_init {
            config.seeds.init = v;
        }
        if let Some(v) = self.seed_data_order {
            config.seeds.data_order = v;
        }
        if let Some(v) = self.seed_noise {
            config.seeds.noise = v;
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output directory; defaults to runs/<config-hash>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Strategies to run, comma separated (e.g. sgd,sgld).
    #[arg(long, value_delimiter = ',', required = true)]
    strategies: Vec<String>,
    /// Output directory; defaults to runs/compare.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Validate the schedule a config resolves to, over its training horizon.
    #[arg(long, conflicts_with_all = ["kind", "eps0", "period_steps", "a", "b", "gamma"])]
    config: Option<PathBuf>,
    /// Strategy to resolve the config for (schedules default per family).
    #[arg(long, requires = "config")]
    strategy: Option<String>,
    /// constant | halving | polynomial
    #[arg(long)]
    kind: Option<String>,
    /// Initial step size for constant and halving schedules.
    #[arg(long)]
    eps0: Option<f64>,
    /// Halving period in steps.
    #[arg(long)]
    period_steps: Option<usize>,
    /// Polynomial schedule a(b + t)^-gamma coefficients.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Steps to check; defaults to the config's total step count.
    #[arg(long)]
    horizon: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Attack(args) => cmd_attack(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::ValidateSchedule(args) => cmd_validate_schedule(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(error_code(&e))
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Parse(_) => 3,
        Error::Numeric(_) => 4,
        Error::Schedule(_) => 5,
        Error::Encoding(_) => 6,
        Error::Shape(_) => 7,
        Error::Index(_) => 8,
        Error::Io(_) => 9,
    }
}

fn out_dir(requested: &Option<PathBuf>, default: PathBuf) -> Result<PathBuf> {
    let dir = requested.clone().unwrap_or(default);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    write_atomic(path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("serialization: {e}")))
}

/// Metrics, manifest, and snapshots for one finished run.
fn persist_run(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    write_file(
        &dir.join("metrics.csv"),
        render_delimited(std::slice::from_ref(&out.record)).as_bytes(),
    )?;
    write_file(
        &dir.join("metrics.json"),
        render_structured(std::slice::from_ref(&out.record), std::slice::from_ref(&out.resolved))?
            .as_bytes(),
    )?;
    write_file(
        &dir.join("manifest.json"),
        manifest_json(&out.resolved, &out.record)?.as_bytes(),
    )?;
    if let Some(set) = &out.posterior {
        let path = dir.join("snapshots.bin");
        save_snapshots(set, &path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let config = args.common.build()?;
    let out = run_experiment_full(&config)?;
    let dir = out_dir(&args.out_dir, PathBuf::from("runs").join(out.resolved.hash()))?;
    persist_run(&out, &dir)?;
    print!("{}", render_delimited(std::slice::from_ref(&out.record)));
    Ok(())
}

fn cmd_attack(args: &RunArgs) -> Result<()> {
    let config = args.common.build()?;
    let out = run_experiment_full(&config)?;
    let dir = out_dir(&args.out_dir, PathBuf::from("runs").join(out.resolved.hash()))?;

    let bound = LossBound::new(out.resolved.loss_bound)?;
    let threshold = mean_train_loss_threshold(&out.predictor, out.train.samples(), &bound)?;
    let scores = score_samples(&out.predictor, out.train.samples(), out.test.samples(), &bound)?;
    let report = fixed_threshold_attack(&scores, threshold)?;

    let mut table = String::from("id,score,member\n");
    for e in scores.entries() {
        table.push_str(&format!("{},{},{}\n", e.id, e.score, e.member));
    }
    write_file(&dir.join("scores.csv"), table.as_bytes())?;

    let mut roc = String::from("fpr,tpr\n");
    for (fpr, tpr) in roc_points(&scores)? {
        roc.push_str(&format!("{fpr},{tpr}\n"));
    }
    write_file(&dir.join("roc.csv"), roc.as_bytes())?;
    write_file(&dir.join("attack.json"), json_pretty(&report)?.as_bytes())?;
    persist_run(&out, &dir)?;

    println!(
        "auc={:.4} f1={:.4} acc={:.4} threshold={:.4} tp={} fp={} tn={} fn={}",
        report.auc,
        report.f1,
        report.accuracy,
        report.operating_threshold,
        report.tp,
        report.fp,
        report.tn,
        report.fn_
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    if args.common.strategy.is_some() {
        return Err(Error::Config(
            "compare takes --strategies, not --strategy".into(),
        ));
    }
    if args.strategies.is_empty() {
        return Err(Error::Config("compare needs at least one strategy".into()));
    }
    let base = load_config(&args.common.config)?;
    let mut rows = Vec::with_capacity(args.strategies.len());
    for name in &args.strategies {
        let mut row = base.derive_for_strategy(Strategy::parse(name)?);
        args.common.apply_overrides(&mut row);
        rows.push(row);
    }
    let records = compare_strategies(&rows)?;
    let resolved: Vec<_> = rows.iter().map(|c| c.resolve()).collect::<Result<_>>()?;

    let dir = out_dir(&args.out_dir, PathBuf::from("runs/compare"))?;
    write_file(&dir.join("table.csv"), render_delimited(&records).as_bytes())?;
    write_file(
        &dir.join("table.json"),
        render_structured(&records, &resolved)?.as_bytes(),
    )?;
    for (r, record) in resolved.iter().zip(&records) {
        write_file(
            &dir.join(format!("manifest-{}.json", record.strategy)),
            manifest_json(r, record)?.as_bytes(),
        )?;
    }
    print!("{}", render_delimited(&records));
    Ok(())
}

fn cmd_audit(args: &RunArgs) -> Result<()> {
    let config = args.common.build()?;
    let out = run_experiment_full(&config)?;
    let set = out.posterior.clone().ok_or_else(|| {
        Error::Config(
            "audit requires a sampler strategy (sgld, sgld_ensemble, psgld, psgld_ensemble)"
                .into(),
        )
    })?;
    let dir = out_dir(&args.out_dir, PathBuf::from("runs").join(out.resolved.hash()))?;

    // Full posterior-weighted predictive, independent of the strategy's own
    // last-k prediction mode.
    let ensemble = EnsemblePredictor::new(set, EnsembleMode::WeightedAll)?;
    let mut samples: Vec<(String, Sample)> = Vec::new();
    for (prefix, split) in [("train", &out.train), ("test", &out.test)] {
        for (i, z) in split.samples().iter().enumerate() {
            samples.push((format!("{prefix}/{i}"), z.clone()));
        }
    }
    let bound = LossBound::new(out.resolved.loss_bound)?;
    let reports = audit_ensemble(&ensemble, &samples, out.resolved.lambda, &bound)?;
    let path = dir.join("audit.csv");
    write_mpl_reports(&reports, &path)?;
    eprintln!("wrote {}", path.display());
    persist_run(&out, &dir)?;

    let summary = |prefix: &str| {
        let rows: Vec<&MplReport> = reports
            .iter()
            .filter(|r| r.sample_id.starts_with(prefix))
            .collect();
        let mean = rows.iter().map(|r| r.mpl).sum::<f64>() / rows.len() as f64;
        let max = rows.iter().map(|r| r.mpl).fold(0.0f64, f64::max);
        (mean, max)
    };
    let (train_mean, train_max) = summary("train/");
    let (test_mean, test_max) = summary("test/");
    let violations = reports.iter().filter(|r| r.mpl > r.lipschitz_bound + 1e-12).count();
    println!(
        "samples={} train_mpl_mean={:.6} train_mpl_max={:.6} test_mpl_mean={:.6} test_mpl_max={:.6} bound_violations={}",
        reports.len(),
        train_mean,
        train_max,
        test_mean,
        test_max,
        violations
    );
    Ok(())
}

fn cmd_validate_schedule(args: &ScheduleArgs) -> Result<()> {
    let (schedule, horizon) = if let Some(path) = &args.config {
        let mut config = load_config(path)?;
        if let Some(name) = &args.strategy {
            config = config.derive_for_strategy(Strategy::parse(name)?);
        }
        let resolved = config.resolve()?;
        let horizon = args.horizon.unwrap_or_else(|| resolved.total_steps());
        (resolved.build_schedule()?, horizon)
    } else {
        let kind = args.kind.as_deref().ok_or_else(|| {
            Error::Config("give either --config or --kind with its parameters".into())
        })?;
        let need = |v: Option<f64>, flag: &str| {
            v.ok_or_else(|| Error::Config(format!("--{flag} is required for kind {kind:?}")))
        };
        let schedule = match kind {
            "constant" => StepSchedule::constant(need(args.eps0, "eps0")?)?,
            "halving" => StepSchedule::halving(
                need(args.eps0, "eps0")?,
                args.period_steps
                    .ok_or_else(|| Error::Config("--period-steps is required for kind \"halving\"".into()))?,
            )?,
            "polynomial" => StepSchedule::polynomial(
                need(args.a, "a")?,
                need(args.b, "b")?,
                need(args.gamma, "gamma")?,
            )?,
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule kind {other:?}; expected constant, halving, or polynomial"
                )))
            }
        };
        let horizon = args
            .horizon
            .ok_or_else(|| Error::Config("--horizon is required with --kind".into()))?;
        (schedule, horizon)
    };
    let report = validate_schedule(&schedule, horizon)?;
    println!(
        "steps={} monotone={} constant_step={} decreasing={} sum={:.6} sq_ratio={:.6e}",
        horizon, report.monotone, report.constant_step, report.decreasing, report.sum, report.sq_ratio
    );
    Ok(())
}
