//! Configuration-driven experiment runner: loads or generates a dataset,
//! trains one strategy, runs the threshold attack, and reports Table-style
//! metrics. Every emitted number except wall-clock runtime is a pure
//! function of the config plus its four seeds.

use crate::attack::{fixed_threshold_attack, mean_train_loss_threshold, score_samples};
use crate::data::{self, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::net::{Activation, LossBound, MlpArchitecture, ModelParams, Sample};
use crate::optim::{
    rmsprop_step, sgd_step, sgld_step, psgld_step, GaussianPrior, OptimizerState, StepSchedule,
    DEFAULT_ALPHA, DEFAULT_LAMBDA_C,
};
use crate::posterior::{
    collect, EnsembleMode, EnsemblePredictor, PosteriorSampleSet, Predictor, TrainingRun,
};
use crate::privacy::lambda_logit;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Training strategy: three conventional baselines, the two samplers, and
/// their prediction-ensembling variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sgd,
    SgdEnsemble,
    Dropout,
    RmsProp,
    Sgld,
    SgldEnsemble,
    Psgld,
    PsgldEnsemble,
}

pub const ALL_STRATEGIES: [Strategy; 8] = [
    Strategy::Sgd,
    Strategy::SgdEnsemble,
    Strategy::Dropout,
    Strategy::RmsProp,
    Strategy::Sgld,
    Strategy::SgldEnsemble,
    Strategy::Psgld,
    Strategy::PsgldEnsemble,
];

impl Strategy {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "sgd" => Strategy::Sgd,
            "sgd_ensemble" => Strategy::SgdEnsemble,
            "dropout" => Strategy::Dropout,
            "rmsprop" => Strategy::RmsProp,
            "sgld" => Strategy::Sgld,
            "sgld_ensemble" => Strategy::SgldEnsemble,
            "psgld" => Strategy::Psgld,
            "psgld_ensemble" => Strategy::PsgldEnsemble,
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy {other:?}; expected one of sgd, sgd_ensemble, dropout, \
                     rmsprop, sgld, sgld_ensemble, psgld, psgld_ensemble"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Sgd => "sgd",
            Strategy::SgdEnsemble => "sgd_ensemble",
            Strategy::Dropout => "dropout",
            Strategy::RmsProp => "rmsprop",
            Strategy::Sgld => "sgld",
            Strategy::SgldEnsemble => "sgld_ensemble",
            Strategy::Psgld => "psgld",
            Strategy::PsgldEnsemble => "psgld_ensemble",
        }
    }

    /// Samplers that follow the posterior dynamics (prior + scaled gradient
    /// + injected noise).
    pub fn is_sgld_family(self) -> bool {
        matches!(
            self,
            Strategy::Sgld | Strategy::SgldEnsemble | Strategy::Psgld | Strategy::PsgldEnsemble
        )
    }

    /// Strategies whose predictor averages several snapshots.
    pub fn is_ensemble(self) -> bool {
        matches!(
            self,
            Strategy::SgdEnsemble | Strategy::SgldEnsemble | Strategy::PsgldEnsemble
        )
    }

    /// Strategies with an RMSprop-style accumulator.
    pub fn uses_accumulator(self) -> bool {
        matches!(
            self,
            Strategy::RmsProp | Strategy::Psgld | Strategy::PsgldEnsemble
        )
    }

    /// Snapshots are recorded for samplers (posterior audit) and ensembles.
    pub fn needs_snapshots(self) -> bool {
        self.is_sgld_family() || self.is_ensemble()
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}
fn default_activation() -> String {
    "relu".into()
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    30
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_schedule() -> String {
    "auto".into()
}
fn default_halving_epochs() -> usize {
    5
}
fn default_loss_bound() -> f64 {
    5.0
}
fn default_lambda() -> f64 {
    0.5
}

const DEFAULT_PRIOR_VARIANCE: f64 = 1.0;
const DEFAULT_BURN_IN_FRACTION: f64 = 0.5;
const DEFAULT_THINNING: usize = 1;
const DEFAULT_ENSEMBLE_K: usize = 3;
const DEFAULT_DROPOUT_RATE: f64 = 0.3;

/// Where the samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub holdout: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: default_hidden(),
            activation: default_activation(),
            dropout_rate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub strategy: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Per-strategy learning-rate overrides, keyed by strategy name. Lets a
    /// shared comparison config give each optimizer its own step size.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub learning_rate_overrides: BTreeMap<String, f64>,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "default_halving_epochs")]
    pub halving_epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(default = "default_loss_bound")]
    pub loss_bound: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            loss_bound: default_loss_bound(),
            lambda: default_lambda(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    pub split: u64,
    pub init: u64,
    pub data_order: u64,
    pub noise: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            split: 1,
            init: 2,
            data_order: 3,
            noise: 4,
        }
    }
}

/// One experiment as written in the config file. Optional fields resolve to
/// documented defaults when the strategy uses them and are rejected when it
/// does not.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
}

pub fn config_from_toml_str(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
}

/// Loads a config file. Relative `data.path` / `data.schema` entries are
/// resolved against the config file's directory, so a checked-in config works
/// from any working directory.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let mut config = config_from_toml_str(&std::fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    for entry in [&mut config.data.path, &mut config.data.schema] {
        if let Some(p) = entry {
            if Path::new(p.as_str()).is_relative() {
                *entry = Some(dir.join(p.as_str()).to_string_lossy().into_owned());
            }
        }
    }
    Ok(config)
}

/// xorshift-multiply mixer; each call advances the state and returns one
/// well-mixed 64-bit value.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    /// Derives all four seeds from one master seed: successive splitmix64
    /// outputs assigned in the order split, init, data_order, noise.
    pub fn apply_seed_bundle(&mut self, master: u64) {
        let mut state = master;
        self.seeds = SeedConfig {
            split: splitmix64(&mut state),
            init: splitmix64(&mut state),
            data_order: splitmix64(&mut state),
            noise: splitmix64(&mut state),
        };
    }

    /// Clones the config for one row of a multi-strategy comparison: swaps
    /// the strategy and drops optional fields the target strategy does not
    /// use, so one shared file can carry settings for every row without
    /// tripping the per-run validation.
    pub fn derive_for_strategy(&self, strategy: Strategy) -> ExperimentConfig {
        let mut config = self.clone();
        config.training.strategy = strategy.as_str().into();
        if !strategy.is_sgld_family() {
            config.training.prior_variance = None;
        }
        if !strategy.uses_accumulator() {
            config.training.alpha = None;
            config.training.lambda_c = None;
        }
        if !strategy.needs_snapshots() {
            config.training.burn_in_fraction = None;
            config.training.thinning = None;
        }
        if !strategy.is_ensemble() {
            config.training.ensemble_k = None;
        }
        if strategy != Strategy::Dropout {
            config.model.dropout_rate = None;
        }
        config
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let strategy = Strategy::parse(&self.training.strategy)?;
        let source = resolve_source(&self.data)?;

        if self.split.train == 0 {
            return Err(Error::Config("split.train must be at least 1".into()));
        }
        if self.split.test == 0 {
            return Err(Error::Config(
                "split.test must be at least 1 (the attack's nonmember pool)".into(),
            ));
        }

        let activation = match self.model.activation.as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => {
                return Err(Error::Config(format!(
                    "unknown activation {other:?}; expected relu or tanh"
                )))
            }
        };
        let dropout_rate = match (strategy, self.model.dropout_rate) {
            (Strategy::Dropout, Some(r)) => {
                if !(0.0..1.0).contains(&r) || r == 0.0 {
                    return Err(Error::Config(format!(
                        "dropout rate must lie in (0, 1), got {r}"
                    )));
                }
                r
            }
            (Strategy::Dropout, None) => DEFAULT_DROPOUT_RATE,
            (_, Some(r)) if r != 0.0 => {
                return Err(Error::Config(format!(
                    "dropout_rate is only used by the dropout strategy, not {}",
                    strategy.as_str()
                )))
            }
            _ => 0.0,
        };

        let t = &self.training;
        if t.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if t.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for key in t.learning_rate_overrides.keys() {
            Strategy::parse(key)
                .map_err(|_| Error::Config(format!("learning_rate_overrides has unknown strategy {key:?}")))?;
        }
        let learning_rate = *t
            .learning_rate_overrides
            .get(strategy.as_str())
            .unwrap_or(&t.learning_rate);
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let schedule = match t.schedule.as_str() {
            "auto" => {
                if strategy.is_sgld_family() {
                    "constant"
                } else {
                    "halving"
                }
            }
            "constant" => "constant",
            "halving" => "halving",
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule {other:?}; expected auto, constant, or halving"
                )))
            }
        };
        if t.halving_epochs == 0 {
            return Err(Error::Config("halving_epochs must be at least 1".into()));
        }

        let prior_variance = resolve_gated(
            "prior_variance",
            t.prior_variance,
            strategy.is_sgld_family(),
            strategy,
            DEFAULT_PRIOR_VARIANCE,
        )?;
        if let Some(v) = prior_variance {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("prior variance must be positive, got {v}")));
            }
        }
        let alpha = resolve_gated("alpha", t.alpha, strategy.uses_accumulator(), strategy, DEFAULT_ALPHA)?;
        let lambda_c = resolve_gated(
            "lambda_c",
            t.lambda_c,
            strategy.uses_accumulator(),
            strategy,
            DEFAULT_LAMBDA_C,
        )?;
        let burn_in_fraction = resolve_gated(
            "burn_in_fraction",
            t.burn_in_fraction,
            strategy.needs_snapshots(),
            strategy,
            DEFAULT_BURN_IN_FRACTION,
        )?;
        if let Some(f) = burn_in_fraction {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::Config(format!(
                    "burn_in_fraction must lie in [0, 1), got {f}"
                )));
            }
        }
        let thinning = resolve_gated(
            "thinning",
            t.thinning,
            strategy.needs_snapshots(),
            strategy,
            DEFAULT_THINNING,
        )?;
        if thinning == Some(0) {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        let ensemble_k = resolve_gated(
            "ensemble_k",
            t.ensemble_k,
            strategy.is_ensemble(),
            strategy,
            DEFAULT_ENSEMBLE_K,
        )?;
        if ensemble_k == Some(0) {
            return Err(Error::Config("ensemble_k must be at least 1".into()));
        }

        LossBound::new(self.privacy.loss_bound)?;
        lambda_logit(self.privacy.lambda)?;

        Ok(ResolvedConfig {
            source,
            split: self.split,
            hidden: self.model.hidden.clone(),
            activation: self.model.activation.clone(),
            dropout_rate,
            strategy: strategy.as_str().into(),
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate,
            schedule: schedule.into(),
            halving_epochs: t.halving_epochs,
            prior_variance,
            alpha,
            lambda_c,
            burn_in_fraction,
            thinning,
            ensemble_k,
            loss_bound: self.privacy.loss_bound,
            lambda: self.privacy.lambda,
            seeds: self.seeds,
            activation_parsed: activation,
            strategy_parsed: strategy,
        })
    }
}

/// A field that only some strategies use: absent fields take the default
/// when applicable, present fields on the wrong strategy are rejected.
fn resolve_gated<T: Copy>(
    name: &str,
    value: Option<T>,
    applicable: bool,
    strategy: Strategy,
    default: T,
) -> Result<Option<T>> {
    match (value, applicable) {
        (Some(v), true) => Ok(Some(v)),
        (None, true) => Ok(Some(default)),
        (None, false) => Ok(None),
        (Some(_), false) => Err(Error::Config(format!(
            "{name} is set but strategy {} does not use it",
            strategy.as_str()
        ))),
    }
}

/// Fully resolved data source.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolvedSource {
    Csv { path: String, schema: String },
    SyntheticCredit { rows: usize, gen_seed: u64 },
    SyntheticGaussian { n_per_class: usize, dim: usize, delta: f64, gen_seed: u64 },
}

fn require<T>(v: Option<T>, field: &str, source: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("data.{field} is required for source {source:?}")))
}

fn forbid<T>(v: &Option<T>, field: &str, source: &str) -> Result<()> {
    if v.is_some() {
        return Err(Error::Config(format!(
            "data.{field} is not used by source {source:?}"
        )));
    }
    Ok(())
}

fn resolve_source(d: &DataConfig) -> Result<ResolvedSource> {
    match d.source.as_str() {
        "csv" => {
            forbid(&d.rows, "rows", "csv")?;
            forbid(&d.gen_seed, "gen_seed", "csv")?;
            forbid(&d.n_per_class, "n_per_class", "csv")?;
            forbid(&d.dim, "dim", "csv")?;
            forbid(&d.delta, "delta", "csv")?;
            Ok(ResolvedSource::Csv {
                path: require(d.path.clone(), "path", "csv")?,
                schema: require(d.schema.clone(), "schema", "csv")?,
            })
        }
        "synthetic_credit" => {
            forbid(&d.path, "path", "synthetic_credit")?;
            forbid(&d.schema, "schema", "synthetic_credit")?;
            forbid(&d.n_per_class, "n_per_class", "synthetic_credit")?;
            forbid(&d.dim, "dim", "synthetic_credit")?;
            forbid(&d.delta, "delta", "synthetic_credit")?;
            Ok(ResolvedSource::SyntheticCredit {
                rows: d.rows.unwrap_or(data::CREDIT_ROWS),
                gen_seed: d.gen_seed.unwrap_or(data::CREDIT_SEED),
            })
        }
        "synthetic_gaussian" => {
            forbid(&d.path, "path", "synthetic_gaussian")?;
            forbid(&d.schema, "schema", "synthetic_gaussian")?;
            forbid(&d.rows, "rows", "synthetic_gaussian")?;
            Ok(ResolvedSource::SyntheticGaussian {
                n_per_class: require(d.n_per_class, "n_per_class", "synthetic_gaussian")?,
                dim: require(d.dim, "dim", "synthetic_gaussian")?,
                delta: require(d.delta, "delta", "synthetic_gaussian")?,
                gen_seed: d.gen_seed.unwrap_or(0),
            })
        }
        other => Err(Error::Config(format!(
            "unknown data source {other:?}; expected csv, synthetic_credit, or synthetic_gaussian"
        ))),
    }
}

/// Config with every default applied and every enum parsed; the canonical
/// form that is hashed, logged in manifests, and embedded in emitted files.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub source: ResolvedSource,
    pub split: SplitConfig,
    pub hidden: Vec<usize>,
    pub activation: String,
    pub dropout_rate: f64,
    pub strategy: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: String,
    pub halving_epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thinning: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_k: Option<usize>,
    pub loss_bound: f64,
    pub lambda: f64,
    pub seeds: SeedConfig,
    #[serde(skip)]
    activation_parsed: Activation,
    #[serde(skip)]
    strategy_parsed: Strategy,
}

impl ResolvedConfig {
    pub fn strategy(&self) -> Strategy {
        self.strategy_parsed
    }

    pub fn activation(&self) -> Activation {
        self.activation_parsed
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.split.train.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    /// Semantically identical configs (same resolved values) hash equal.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("resolved config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_schedule(&self) -> Result<StepSchedule> {
        match self.schedule.as_str() {
            "constant" => StepSchedule::constant(self.learning_rate),
            "halving" => StepSchedule::halving_epochs(
                self.learning_rate,
                self.halving_epochs,
                self.split.train,
                self.batch_size,
            ),
            other => Err(Error::Config(format!("unknown resolved schedule {other:?}"))),
        }
    }

    fn build_arch(&self, input: usize, classes: usize) -> Result<MlpArchitecture> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(classes);
        MlpArchitecture::new(sizes, self.activation_parsed, self.dropout_rate)
    }
}

/// One table row; gap is train accuracy minus test accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub strategy: String,
    pub auc: f64,
    pub f1: f64,
    pub acc: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub gap: f64,
    pub runtime_secs: f64,
    pub config_hash: String,
}

impl MetricsRecord {
    /// Metric equality ignoring the wall-clock field.
    pub fn same_results(&self, other: &MetricsRecord) -> bool {
        self.strategy == other.strategy
            && self.auc.to_bits() == other.auc.to_bits()
            && self.f1.to_bits() == other.f1.to_bits()
            && self.acc.to_bits() == other.acc.to_bits()
            && self.train_acc.to_bits() == other.train_acc.to_bits()
            && self.test_acc.to_bits() == other.test_acc.to_bits()
            && self.gap.to_bits() == other.gap.to_bits()
            && self.config_hash == other.config_hash
    }
}

/// Everything a caller might want after a run: the metrics row, the fitted
/// predictor, the recorded posterior sample set (samplers and ensembles),
/// and the standardized splits.
pub struct ExperimentOutput {
    pub record: MetricsRecord,
    pub resolved: ResolvedConfig,
    pub predictor: Predictor,
    pub posterior: Option<PosteriorSampleSet>,
    pub train: Dataset,
    pub holdout: Dataset,
    pub test: Dataset,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.with_stage(name))
}

fn build_dataset(source: &ResolvedSource) -> Result<Dataset> {
    match source {
        ResolvedSource::Csv { path, schema } => {
            let schema = data::load_schema(schema)?;
            data::load_csv(path, &schema)
        }
        ResolvedSource::SyntheticCredit { rows, gen_seed } => {
            let text = data::generate_credit_csv(*rows, *gen_seed);
            data::parse_csv(
                &text,
                &data::credit_schema(),
                &format!("synthetic_credit(rows={rows},gen_seed={gen_seed})"),
            )
        }
        ResolvedSource::SyntheticGaussian { n_per_class, dim, delta, gen_seed } => {
            data::synthetic_gaussian(*n_per_class, *dim, *delta, *gen_seed)
        }
    }
}

const MASK_STREAM_SALT: u64 = 0x4D41_534B_5345_4544;

fn train_model(
    resolved: &ResolvedConfig,
    arch: &MlpArchitecture,
    train: &Dataset,
) -> Result<(ModelParams, Option<PosteriorSampleSet>)> {
    let strategy = resolved.strategy();
    let n = train.len();
    let batch = resolved.batch_size;
    let total_steps = resolved.total_steps();
    let schedule = resolved.build_schedule()?;
    let bound = LossBound::new(resolved.loss_bound)?;
    let dim = arch.param_count();

    let mut state = match strategy {
        Strategy::Sgd | Strategy::SgdEnsemble | Strategy::Dropout => OptimizerState::sgd(schedule),
        Strategy::RmsProp => OptimizerState::rmsprop(
            schedule,
            resolved.alpha.expect("resolved"),
            resolved.lambda_c.expect("resolved"),
            dim,
        )?,
        Strategy::Sgld | Strategy::SgldEnsemble => OptimizerState::sgld(
            schedule,
            GaussianPrior::new(resolved.prior_variance.expect("resolved"))?,
            resolved.seeds.noise,
        ),
        Strategy::Psgld | Strategy::PsgldEnsemble => OptimizerState::psgld(
            schedule,
            GaussianPrior::new(resolved.prior_variance.expect("resolved"))?,
            resolved.alpha.expect("resolved"),
            resolved.lambda_c.expect("resolved"),
            dim,
            resolved.seeds.noise,
        )?,
    };

    let mut params = ModelParams::xavier_init(arch.clone(), resolved.seeds.init);
    let mut order_rng = ChaCha12Rng::seed_from_u64(resolved.seeds.data_order);
    let mut mask_rng = ChaCha12Rng::seed_from_u64(resolved.seeds.noise ^ MASK_STREAM_SALT);

    let needs_snapshots = strategy.needs_snapshots();
    let burn_in = if needs_snapshots {
        (total_steps as f64 * resolved.burn_in_fraction.expect("resolved")).floor() as usize
    } else {
        0
    };
    let thinning = resolved.thinning.unwrap_or(1);
    let mut run = TrainingRun::new(arch.clone());

    let samples = train.samples();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut t = 0usize;
    for _ in 0..resolved.epochs {
        indices.shuffle(&mut order_rng);
        for chunk in indices.chunks(batch) {
            let minibatch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            t += 1;
            let eps = match strategy {
                Strategy::Sgd | Strategy::SgdEnsemble => {
                    sgd_step(&mut params, &mut state, &minibatch, &bound, None)?
                }
                Strategy::Dropout => {
                    let seed: u64 = mask_rng.random();
                    sgd_step(&mut params, &mut state, &minibatch, &bound, Some(seed))?
                }
                Strategy::RmsProp => {
                    rmsprop_step(&mut params, &mut state, &minibatch, &bound, None)?
                }
                Strategy::Sgld | Strategy::SgldEnsemble => {
                    sgld_step(&mut params, &mut state, &minibatch, n, &bound)?
                }
                Strategy::Psgld | Strategy::PsgldEnsemble => {
                    psgld_step(&mut params, &mut state, &minibatch, n, &bound)?
                }
            };
            if needs_snapshots && t > burn_in && (t - burn_in - 1).is_multiple_of(thinning) {
                run.push_snapshot(t, eps, params.theta.clone())?;
            }
        }
    }
    debug_assert_eq!(t, total_steps);

    let posterior = if needs_snapshots {
        run.set_total_steps(total_steps)?;
        Some(collect(&run, burn_in, thinning)?)
    } else {
        None
    };
    Ok((params, posterior))
}

pub fn run_experiment_full(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = std::time::Instant::now();
    let resolved = stage("config", config.resolve())?;
    let strategy = resolved.strategy();

    let dataset = stage("load", build_dataset(&resolved.source))?;
    let spec = SplitSpec {
        train_count: resolved.split.train,
        holdout_count: resolved.split.holdout,
        test_count: resolved.split.test,
        seed: resolved.seeds.split,
    };
    let (train_raw, holdout_raw, test_raw) = stage("split", data::split(&dataset, &spec))?;
    let (train, mut others, _) =
        stage("standardize", data::standardize(&train_raw, &[&holdout_raw, &test_raw]))?;
    let test = others.pop().expect("two transformed splits");
    let holdout = others.pop().expect("two transformed splits");

    let arch = stage(
        "config",
        resolved.build_arch(train.feature_dim(), dataset.class_count()),
    )?;
    let (params, posterior) = stage("train", train_model(&resolved, &arch, &train))?;

    let predictor = if strategy.is_ensemble() {
        let set = posterior.clone().expect("ensembles record snapshots");
        let k = resolved.ensemble_k.expect("resolved");
        Predictor::Ensemble(stage(
            "collect",
            EnsemblePredictor::new(set, EnsembleMode::LastK(k)),
        )?)
    } else {
        Predictor::Single(params)
    };

    let bound = LossBound::new(resolved.loss_bound)?;
    let train_acc = stage("evaluate", predictor.accuracy(train.samples()))?;
    let test_acc = stage("evaluate", predictor.accuracy(test.samples()))?;
    let threshold = stage(
        "attack",
        mean_train_loss_threshold(&predictor, train.samples(), &bound),
    )?;
    let scores = stage(
        "attack",
        score_samples(&predictor, train.samples(), test.samples(), &bound),
    )?;
    let report = stage("attack", fixed_threshold_attack(&scores, threshold))?;

    let record = MetricsRecord {
        strategy: strategy.as_str().into(),
        auc: report.auc,
        f1: report.f1,
        acc: report.accuracy,
        train_acc,
        test_acc,
        gap: train_acc - test_acc,
        runtime_secs: start.elapsed().as_secs_f64(),
        config_hash: resolved.hash(),
    };
    Ok(ExperimentOutput {
        record,
        resolved,
        predictor,
        posterior,
        train,
        holdout,
        test,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsRecord> {
    run_experiment_full(config).map(|o| o.record)
}

/// Runs every row on the identical split; rows must agree on data source,
/// split sizes, and split seed so the comparison is paired.
pub fn compare_strategies(configs: &[ExperimentConfig]) -> Result<Vec<MetricsRecord>> {
    if configs.is_empty() {
        return Err(Error::Config("compare needs at least one config".into()));
    }
    let resolved: Vec<ResolvedConfig> = configs
        .iter()
        .map(|c| stage("config", c.resolve()))
        .collect::<Result<_>>()?;
    let first = &resolved[0];
    for (i, r) in resolved.iter().enumerate().skip(1) {
        if r.seeds.split != first.seeds.split {
            return Err(Error::Config(format!(
                "compare rows must share the split seed; row {i} has {} vs {}",
                r.seeds.split, first.seeds.split
            )));
        }
        if r.source != first.source {
            return Err(Error::Config(format!(
                "compare rows must share the data source; row {i} differs"
            )));
        }
        if r.split.train != first.split.train
            || r.split.holdout != first.split.holdout
            || r.split.test != first.split.test
        {
            return Err(Error::Config(format!(
                "compare rows must share split sizes; row {i} differs"
            )));
        }
    }
    configs.iter().map(run_experiment).collect()
}

pub const DELIMITED_HEADER: &str =
    "strategy,auc,f1,acc,train_acc,test_acc,gap,runtime_secs,config_hash";

/// Table-ordered delimited form: AUC, F1, Acc, then Train, Test, Gap.
pub fn render_delimited(records: &[MetricsRecord]) -> String {
    let mut out = String::from(DELIMITED_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.strategy, r.auc, r.f1, r.acc, r.train_acc, r.test_acc, r.gap, r.runtime_secs,
            r.config_hash
        ));
    }
    out
}

/// Records plus the resolved configs that produced them, as one JSON
/// document.
pub fn render_structured(records: &[MetricsRecord], configs: &[ResolvedConfig]) -> Result<String> {
    #[derive(Serialize)]
    struct Bundle<'a> {
        records: &'a [MetricsRecord],
        configs: &'a [ResolvedConfig],
    }
    serde_json::to_string_pretty(&Bundle { records, configs })
        .map_err(|e| Error::Numeric(format!("metrics serialization: {e}")))
}

/// Parsed structured output; configs come back as generic JSON values.
#[derive(Debug, Deserialize)]
pub struct StructuredMetrics {
    pub records: Vec<MetricsRecord>,
    pub configs: Vec<serde_json::Value>,
}

pub fn parse_structured(text: &str) -> Result<StructuredMetrics> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("metrics: {e}")))
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a writable file path: {}", path.display())))?;
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    let tmp_name = format!(
        ".{}.tmp-{}-{nanos}",
        file_name.to_string_lossy(),
        std::process::id()
    );
    let tmp_path = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp_path, contents)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Run manifest: code version, config hash, the full resolved config, and
/// the metrics row, so every emitted number is traceable.
pub fn manifest_json(resolved: &ResolvedConfig, record: &MetricsRecord) -> Result<String> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        version: &'static str,
        config_hash: String,
        config: &'a ResolvedConfig,
        metrics: &'a MetricsRecord,
    }
    serde_json::to_string_pretty(&Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config_hash: resolved.hash(),
        config: resolved,
        metrics: record,
    })
    .map_err(|e| Error::Numeric(format!("manifest serialization: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        source = "synthetic_gaussian"
        n_per_class = 40
        dim = 3
        delta = 3.0

        [split]
        train = 40
        holdout = 20
        test = 20

        [training]
        strategy = "sgd"

        [seeds]
        split = 1
        init = 2
        data_order = 3
        noise = 4
    "#;

    fn small_config(strategy: &str) -> ExperimentConfig {
        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.strategy = strategy.into();
        cfg.model.hidden = vec![8];
        cfg.training.epochs = 3;
        cfg.training.batch_size = 16;
        cfg
    }

    #[test]
    fn defaults_resolve_to_documented_values() {
        let cfg = config_from_toml_str(MINIMAL).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.hidden, vec![64, 32]);
        assert_eq!(r.activation, "relu");
        assert_eq!(r.batch_size, 32);
        assert_eq!(r.epochs, 30);
        assert_eq!(r.learning_rate, 1e-3);
        assert_eq!(r.schedule, "halving");
        assert_eq!(r.halving_epochs, 5);
        assert_eq!(r.loss_bound, 5.0);
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.prior_variance, None);
        assert_eq!(r.ensemble_k, None);
        // 40 samples, batch 32 -> 2 steps/epoch, 30 epochs.
        assert_eq!(r.total_steps(), 60);
    }

    #[test]
    fn sgld_gets_sampler_defaults_and_constant_schedule() {
        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.strategy = "sgld_ensemble".into();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.schedule, "constant");
        assert_eq!(r.prior_variance, Some(1.0));
        assert_eq!(r.burn_in_fraction, Some(0.5));
        assert_eq!(r.thinning, Some(1));
        assert_eq!(r.ensemble_k, Some(3));
        assert!(matches!(
            r.build_schedule().unwrap().current(),
            e if (e - 1e-3).abs() < 1e-18
        ));
    }

    #[test]
    fn strategy_gated_fields_are_validated() {
        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.prior_variance = Some(1.0);
        let err = cfg.resolve().unwrap_err();
        assert!(err.to_string().contains("prior_variance"), "{err}");

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.ensemble_k = Some(3);
        assert!(cfg.resolve().is_err());

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.model.dropout_rate = Some(0.3);
        assert!(cfg.resolve().is_err());

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.strategy = "dropout".into();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.dropout_rate, 0.3);

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.schedule = "cosine".into();
        assert!(cfg.resolve().is_err());

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training
            .learning_rate_overrides
            .insert("sgdd".into(), 0.1);
        assert!(cfg.resolve().is_err());

        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.strategy = "adam".into();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn derive_for_strategy_strips_fields_the_target_does_not_use() {
        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.strategy = "psgld".into();
        cfg.training.prior_variance = Some(2.0);
        cfg.training.lambda_c = Some(0.1);
        cfg.training.burn_in_fraction = Some(0.25);
        cfg.training.learning_rate_overrides.insert("sgd".into(), 0.5);
        cfg.resolve().unwrap();

        // Every derived row must validate, and shared fields must survive
        // where the target strategy uses them.
        for s in ALL_STRATEGIES {
            let row = cfg.derive_for_strategy(s);
            let r = row.resolve().unwrap();
            assert_eq!(r.strategy, s.as_str());
            if s.uses_accumulator() {
                assert_eq!(r.lambda_c, Some(0.1));
            }
            if s.is_sgld_family() {
                assert_eq!(r.prior_variance, Some(2.0));
            }
        }
        let sgd = cfg.derive_for_strategy(Strategy::Sgd).resolve().unwrap();
        assert_eq!(sgd.learning_rate, 0.5);
        assert_eq!(sgd.prior_variance, None);
        let sgld = cfg.derive_for_strategy(Strategy::Sgld).resolve().unwrap();
        assert_eq!(sgld.burn_in_fraction, Some(0.25));
        assert_eq!(sgld.lambda_c, None);
    }

    #[test]
    fn load_config_resolves_data_paths_against_the_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("conf")).unwrap();
        let config_path = dir.path().join("conf/run.toml");
        std::fs::write(
            &config_path,
            r#"
                [data]
                source = "csv"
                path = "../rows.csv"
                schema = "/abs/schema.toml"
                [split]
                train = 2
                holdout = 1
                test = 1
                [training]
                strategy = "sgd"
            "#,
        )
        .unwrap();
        let cfg = load_config(&config_path).unwrap();
        let expected = dir.path().join("conf/../rows.csv");
        assert_eq!(cfg.data.path.as_deref(), expected.to_str());
        // Absolute paths pass through untouched.
        assert_eq!(cfg.data.schema.as_deref(), Some("/abs/schema.toml"));
    }

    #[test]
    fn learning_rate_overrides_apply_per_strategy() {
        let mut cfg = config_from_toml_str(MINIMAL).unwrap();
        cfg.training.learning_rate_overrides.insert("sgd".into(), 0.25);
        cfg.training.learning_rate_overrides.insert("sgld".into(), 0.002);
        assert_eq!(cfg.resolve().unwrap().learning_rate, 0.25);
        cfg.training.strategy = "sgld".into();
        assert_eq!(cfg.resolve().unwrap().learning_rate, 0.002);
        cfg.training.strategy = "rmsprop".into();
        assert_eq!(cfg.resolve().unwrap().learning_rate, 1e-3);
    }

    #[test]
    fn hash_is_stable_across_spelled_out_defaults() {
        let minimal = config_from_toml_str(MINIMAL).unwrap();
        let explicit = config_from_toml_str(
            r#"
            [data]
            source = "synthetic_gaussian"
            n_per_class = 40
            dim = 3
            delta = 3.0

            [split]
            train = 40
            holdout = 20
            test = 20

            [model]
            hidden = [64, 32]
            activation = "relu"

            [training]
            strategy = "sgd"
            batch_size = 32
            epochs = 30
            learning_rate = 1e-3
            schedule = "auto"
            halving_epochs = 5

            [privacy]
            loss_bound = 5.0
            lambda = 0.5

            [seeds]
            split = 1
            init = 2
            data_order = 3
            noise = 4
        "#,
        )
        .unwrap();
        let a = minimal.resolve().unwrap().hash();
        let b = explicit.resolve().unwrap().hash();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);

        let mut changed = minimal.clone();
        changed.training.learning_rate = 2e-3;
        assert_ne!(a, changed.resolve().unwrap().hash());
    }

    #[test]
    fn seed_bundle_derivation_is_deterministic_and_spread() {
        let mut a = config_from_toml_str(MINIMAL).unwrap();
        let mut b = config_from_toml_str(MINIMAL).unwrap();
        a.apply_seed_bundle(99);
        b.apply_seed_bundle(99);
        assert_eq!(a.seeds, b.seeds);
        let s = a.seeds;
        let all = [s.split, s.init, s.data_order, s.noise];
        for (i, x) in all.iter().enumerate() {
            for y in &all[i + 1..] {
                assert_ne!(x, y);
            }
        }
        b.apply_seed_bundle(100);
        assert_ne!(a.seeds, b.seeds);
    }

    #[test]
    fn run_is_deterministic_modulo_runtime() {
        for strategy in ["sgd", "sgld_ensemble"] {
            let cfg = small_config(strategy);
            let r1 = run_experiment(&cfg).unwrap();
            let r2 = run_experiment(&cfg).unwrap();
            assert!(r1.same_results(&r2), "{strategy}: {r1:?} vs {r2:?}");
            assert!((r1.gap - (r1.train_acc - r1.test_acc)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_runs_expose_their_posterior_sets() {
        let out = run_experiment_full(&small_config("sgld")).unwrap();
        let set = out.posterior.expect("sgld records snapshots");
        // 3 epochs x ceil(40/16) = 9 steps; burn-in floor(9/2) = 4 -> 5 kept.
        assert_eq!(set.len(), 5);
        assert!(matches!(out.predictor, Predictor::Single(_)));

        let out = run_experiment_full(&small_config("sgd")).unwrap();
        assert!(out.posterior.is_none());
    }

    #[test]
    fn ensemble_strategies_predict_with_last_k() {
        let out = run_experiment_full(&small_config("psgld_ensemble")).unwrap();
        match &out.predictor {
            Predictor::Ensemble(e) => assert_eq!(e.mode(), EnsembleMode::LastK(3)),
            other => panic!("expected ensemble predictor, got {other:?}"),
        }
    }

    #[test]
    fn compare_requires_matching_split_and_source() {
        let a = small_config("sgd");
        let mut b = small_config("sgld");
        assert_eq!(compare_strategies(std::slice::from_ref(&a)).unwrap().len(), 1);
        let rows = compare_strategies(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].strategy, "sgd");
        assert_eq!(rows[1].strategy, "sgld");

        b.seeds.split = 977;
        let err = compare_strategies(&[a.clone(), b]).unwrap_err();
        assert!(err.to_string().contains("split seed"), "{err}");

        let mut c = small_config("sgld");
        c.data.delta = Some(1.0);
        assert!(compare_strategies(&[a.clone(), c]).is_err());
        let mut d = small_config("sgld");
        d.split.test = 19;
        assert!(compare_strategies(&[a, d]).is_err());
        assert!(compare_strategies(&[]).is_err());
    }

    #[test]
    fn delimited_output_has_the_table_column_order() {
        assert!(DELIMITED_HEADER.starts_with("strategy,auc,f1,acc,train_acc,test_acc,gap"));
        let empty = render_delimited(&[]);
        assert_eq!(empty.lines().count(), 1);
        assert_eq!(empty.lines().next().unwrap(), DELIMITED_HEADER);

        let rec = MetricsRecord {
            strategy: "sgd".into(),
            auc: 0.75,
            f1: 0.5,
            acc: 0.625,
            train_acc: 1.0,
            test_acc: 0.7,
            gap: 0.3,
            runtime_secs: 0.01,
            config_hash: "abc".into(),
        };
        let text = render_delimited(&[rec]);
        assert!(text.lines().nth(1).unwrap().starts_with("sgd,0.75,0.5,0.625,1,0.7,0.3"));
    }

    #[test]
    fn structured_output_round_trips() {
        let cfg = small_config("sgd");
        let out = run_experiment_full(&cfg).unwrap();
        let text = render_structured(std::slice::from_ref(&out.record), &[out.resolved]).unwrap();
        let parsed = parse_structured(&text).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert!(parsed.records[0].same_results(&out.record));
        assert_eq!(parsed.records[0].runtime_secs, out.record.runtime_secs);
        assert_eq!(parsed.configs.len(), 1);
        assert_eq!(parsed.configs[0]["strategy"], "sgd");
    }

    #[test]
    fn atomic_write_replaces_content_without_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn failing_stage_is_named_in_the_error() {
        let mut cfg = small_config("sgd");
        cfg.data = DataConfig {
            source: "csv".into(),
            path: Some("/nonexistent/corpus.csv".into()),
            schema: Some("/nonexistent/schema.toml".into()),
            rows: None,
            gen_seed: None,
            n_per_class: None,
            dim: None,
            delta: None,
        };
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("load:"), "{err}");

        let mut cfg = small_config("sgd");
        cfg.split.train = 500;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("split:"), "{err}");
    }

    #[test]
    fn manifest_embeds_hash_config_and_metrics() {
        let cfg = small_config("sgd");
        let out = run_experiment_full(&cfg).unwrap();
        let text = manifest_json(&out.resolved, &out.record).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["config_hash"], out.resolved.hash().as_str());
        assert_eq!(v["config"]["strategy"], "sgd");
        assert_eq!(v["metrics"]["strategy"], "sgd");
        assert!(v["version"].as_str().unwrap().contains('.'));
    }
}
