//! Post-burn-in snapshot collection, step-size-weighted ensemble prediction,
//! and Monte-Carlo estimates of posterior loss quantities.
//!
//! A training run's retained snapshots approximate the model posterior; the
//! ensemble prediction is the weighted average output with weights eps_t/S_L,
//! and the key scalar estimates are t_p(z) = -log E[e^{-l}] (via max-shifted
//! log-sum-exp) and the posterior mean loss E[l].

use crate::error::{Error, Result};
use crate::net::{forward, nll_loss, LossBound, MlpArchitecture, Mode, ModelParams, Sample};
use std::io::Read;
use std::path::Path;

/// One retained parameter snapshot: the state after completing update
/// `step` (1-based), with the step size that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub eps: f64,
    pub theta: Vec<f64>,
}

/// Recorded trajectory of one training run; the input to `collect`.
/// Runs may record densely (every step) or sparsely to save memory; `collect`
/// filters by step index either way.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    arch: MlpArchitecture,
    snapshots: Vec<Snapshot>,
    total_steps: usize,
}

impl TrainingRun {
    pub fn new(arch: MlpArchitecture) -> Self {
        TrainingRun {
            arch,
            snapshots: Vec::new(),
            total_steps: 0,
        }
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    /// Records the post-update state of step `step` (1-based). Steps must
    /// arrive in increasing order.
    pub fn push_snapshot(&mut self, step: usize, eps: f64, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.arch.param_count() {
            return Err(Error::Shape(format!(
                "snapshot theta length {} does not match architecture ({})",
                theta.len(),
                self.arch.param_count()
            )));
        }
        if step == 0 {
            return Err(Error::Config("snapshot steps are 1-based".into()));
        }
        if let Some(last) = self.snapshots.last() {
            if step <= last.step {
                return Err(Error::Config(format!(
                    "snapshot steps must increase, got {step} after {}",
                    last.step
                )));
            }
        }
        self.snapshots.push(Snapshot { step, eps, theta });
        self.total_steps = self.total_steps.max(step);
        Ok(())
    }

    /// Declares the run's total update count (>= the last recorded step).
    pub fn set_total_steps(&mut self, total: usize) -> Result<()> {
        let last = self.snapshots.last().map_or(0, |s| s.step);
        if total < last {
            return Err(Error::Config(format!(
                "total steps {total} below last recorded step {last}"
            )));
        }
        self.total_steps = total;
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }
}

/// Ordered post-burn-in parameter snapshots with their step sizes and the
/// normalizer S_L = sum of retained step sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSampleSet {
    arch: MlpArchitecture,
    thetas: Vec<Vec<f64>>,
    step_sizes: Vec<f64>,
    burn_in_start: usize,
    thinning: usize,
    s_l: f64,
}

impl PosteriorSampleSet {
    pub fn new(
        arch: MlpArchitecture,
        snapshots: Vec<(Vec<f64>, f64)>,
        burn_in_start: usize,
        thinning: usize,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Config("posterior sample set needs at least one snapshot".into()));
        }
        if thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        let dim = arch.param_count();
        let mut thetas = Vec::with_capacity(snapshots.len());
        let mut step_sizes = Vec::with_capacity(snapshots.len());
        for (theta, eps) in snapshots {
            if theta.len() != dim {
                return Err(Error::Shape(format!(
                    "snapshot length {} does not match architecture ({dim})",
                    theta.len()
                )));
            }
            if !eps.is_finite() || eps <= 0.0 {
                return Err(Error::Config(format!("step size must be positive, got {eps}")));
            }
            thetas.push(theta);
            step_sizes.push(eps);
        }
        let s_l: f64 = step_sizes.iter().sum();
        Ok(PosteriorSampleSet {
            arch,
            thetas,
            step_sizes,
            burn_in_start,
            thinning,
            s_l,
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn s_l(&self) -> f64 {
        self.s_l
    }

    pub fn burn_in_start(&self) -> usize {
        self.burn_in_start
    }

    pub fn thinning(&self) -> usize {
        self.thinning
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i]
    }

    /// Sum of squared retained step sizes (input to the ensemble leakage bound remainder).
    pub fn sum_sq_steps(&self) -> f64 {
        self.step_sizes.iter().map(|e| e * e).sum()
    }

    /// Normalized weights eps_t / S_L; sum to 1 within 1e-12.
    pub fn weights(&self) -> Vec<f64> {
        self.step_sizes.iter().map(|e| e / self.s_l).collect()
    }

    fn params_at(&self, i: usize) -> ModelParams {
        ModelParams {
            arch: self.arch.clone(),
            theta: self.thetas[i].clone(),
        }
    }

    /// Per-snapshot bounded loss of sample z.
    fn snapshot_losses(&self, z: &Sample, bound: &LossBound) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(self.len());
        let mut params = self.params_at(0);
        for i in 0..self.len() {
            params.theta.copy_from_slice(&self.thetas[i]);
            let probs = forward(&params, &z.x, Mode::Eval, None)?;
            losses.push(nll_loss(&probs, z.y, bound)?);
        }
        Ok(losses)
    }
}

/// Retains every k-th snapshot after burn-in step t0: step indices
/// t0+1, t0+1+k, t0+1+2k, ... Runs recorded sparsely keep the intersection
/// of that pattern with what was recorded.
pub fn collect(run: &TrainingRun, burn_in: usize, thinning: usize) -> Result<PosteriorSampleSet> {
    if burn_in >= run.total_steps() {
        return Err(Error::Config(format!(
            "burn-in {burn_in} must be below total steps {}",
            run.total_steps()
        )));
    }
    if thinning == 0 {
        return Err(Error::Config("thinning must be at least 1".into()));
    }
    let retained: Vec<(Vec<f64>, f64)> = run
        .snapshots()
        .iter()
        .filter(|s| s.step > burn_in && (s.step - burn_in - 1).is_multiple_of(thinning))
        .map(|s| (s.theta.clone(), s.eps))
        .collect();
    if retained.is_empty() {
        return Err(Error::Config(format!(
            "no snapshots recorded after burn-in {burn_in} with thinning {thinning}"
        )));
    }
    PosteriorSampleSet::new(run.arch().clone(), retained, burn_in, thinning)
}

/// How ensemble predictions weight the snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Sum over all snapshots with weights eps_t / S_L.
    WeightedAll,
    /// Uniform average of the last k snapshots (the constant-step ensemble).
    LastK(usize),
}

/// A posterior sample set plus a weighting mode.
#[derive(Debug, Clone)]
pub struct EnsemblePredictor {
    set: PosteriorSampleSet,
    mode: EnsembleMode,
}

impl EnsemblePredictor {
    pub fn new(set: PosteriorSampleSet, mode: EnsembleMode) -> Result<Self> {
        if let EnsembleMode::LastK(k) = mode {
            if k == 0 || k > set.len() {
                return Err(Error::Config(format!(
                    "last_k of {k} infeasible with {} snapshots",
                    set.len()
                )));
            }
        }
        Ok(EnsemblePredictor { set, mode })
    }

    pub fn set(&self) -> &PosteriorSampleSet {
        &self.set
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    /// Weighted average class probabilities over the snapshots.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (indices, weights): (Vec<usize>, Vec<f64>) = match self.mode {
            EnsembleMode::WeightedAll => {
                ((0..self.set.len()).collect(), self.set.weights())
            }
            EnsembleMode::LastK(k) => {
                let start = self.set.len() - k;
                ((start..self.set.len()).collect(), vec![1.0 / k as f64; k])
            }
        };
        let mut y_hat = vec![0.0; self.set.arch().output_size()];
        let mut params = self.set.params_at(indices[0]);
        for (&i, &w) in indices.iter().zip(&weights) {
            params.theta.copy_from_slice(self.set.theta(i));
            let probs = forward(&params, x, Mode::Eval, None)?;
            for (acc, p) in y_hat.iter_mut().zip(&probs) {
                *acc += w * p;
            }
        }
        Ok(y_hat)
    }

    /// Bounded NLL of the ensemble prediction on z.
    pub fn loss(&self, z: &Sample, bound: &LossBound) -> Result<f64> {
        let y_hat = self.predict(&z.x)?;
        nll_loss(&y_hat, z.y, bound)
    }
}

/// A trained model in either single-snapshot or ensemble form.
#[derive(Debug, Clone)]
pub enum Predictor {
    Single(ModelParams),
    Ensemble(EnsemblePredictor),
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Predictor::Single(params) => forward(params, x, Mode::Eval, None),
            Predictor::Ensemble(ens) => ens.predict(x),
        }
    }

    /// Bounded NLL of the prediction on z.
    pub fn loss(&self, z: &Sample, bound: &LossBound) -> Result<f64> {
        let y_hat = self.predict(&z.x)?;
        nll_loss(&y_hat, z.y, bound)
    }

    /// Fraction of samples whose argmax prediction matches the label.
    pub fn accuracy(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Config("accuracy requires at least one sample".into()));
        }
        let mut correct = 0usize;
        for s in samples {
            let probs = self.predict(&s.x)?;
            let pred = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("probabilities are finite"))
                .map(|(i, _)| i)
                .expect("output size >= 2");
            if pred == s.y {
                correct += 1;
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }
}

/// Monte-Carlo estimate of t_p(z) = -log E_{theta~p}[e^{-l(z,theta)}] over
/// the sample set, via max-shifted log-sum-exp. Lies in [min_t l, max_t l].
pub fn mc_estimate_tp(set: &PosteriorSampleSet, z: &Sample, bound: &LossBound) -> Result<f64> {
    let losses = set.snapshot_losses(z, bound)?;
    let weights = set.weights();
    // LSE over log terms log(w_t) - l_t, shifted by the max exponent.
    let max_exp = losses
        .iter()
        .map(|l| -l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (l, w) in losses.iter().zip(&weights) {
        total += w * (-l - max_exp).exp();
    }
    Ok(-(max_exp + total.ln()))
}

/// Weighted posterior mean loss E_{theta~p}[l(z, theta)]; the Jensen upper
/// bound on t_p over the same set.
pub fn posterior_mean_loss(set: &PosteriorSampleSet, z: &Sample, bound: &LossBound) -> Result<f64> {
    let losses = set.snapshot_losses(z, bound)?;
    step_weighted_mean(&losses, set.step_sizes())
}

/// Step-size-weighted mean: sum(eps_t * v_t) / sum(eps_t). Shared by the
/// network estimators and the scalar conjugate-model diagnostics.
pub fn step_weighted_mean(values: &[f64], step_sizes: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != step_sizes.len() {
        return Err(Error::Shape(format!(
            "weighted mean needs matching nonempty lists, got {} values and {} steps",
            values.len(),
            step_sizes.len()
        )));
    }
    let total: f64 = step_sizes.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numeric("step sizes sum to zero".into()));
    }
    Ok(values
        .iter()
        .zip(step_sizes)
        .map(|(v, e)| v * e)
        .sum::<f64>()
        / total)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"SGLDSNAP";
const SNAPSHOT_VERSION: u32 = 1;

/// Writes a sample set to a versioned binary file. Round-trips bitwise.
pub fn save_snapshots(set: &PosteriorSampleSet, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    let sizes = set.arch().layer_sizes();
    buf.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        buf.extend_from_slice(&(s as u64).to_le_bytes());
    }
    use crate::net::Activation;
    let act: u8 = match set.arch().activation() {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    };
    buf.push(act);
    buf.extend_from_slice(&set.arch().dropout_rate().to_le_bytes());
    buf.extend_from_slice(&(set.burn_in_start() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.thinning() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(set.arch().param_count() as u64).to_le_bytes());
    for i in 0..set.len() {
        buf.extend_from_slice(&set.step_sizes()[i].to_le_bytes());
        for v in set.theta(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::experiment::write_atomic(path, &buf)
}

/// Reads a sample set written by `save_snapshots`.
pub fn load_snapshots(path: &Path) -> Result<PosteriorSampleSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = ByteCursor::new(&bytes);

    let magic = cursor.take(8)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Parse("not a snapshot file (bad magic header)".into()));
    }
    let version = cursor.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Parse(format!("unsupported snapshot version {version}")));
    }
    let n_sizes = cursor.u32()? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Parse(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(cursor.u64()? as usize);
    }
    use crate::net::Activation;
    let activation = match cursor.byte()? {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        other => return Err(Error::Parse(format!("unknown activation tag {other}"))),
    };
    let dropout = cursor.f64()?;
    let arch = MlpArchitecture::new(sizes, activation, dropout)
        .map_err(|e| Error::Parse(format!("invalid architecture in snapshot file: {e}")))?;
    let burn_in = cursor.u64()? as usize;
    let thinning = cursor.u64()? as usize;
    let n_snapshots = cursor.u64()? as usize;
    let theta_len = cursor.u64()? as usize;
    if theta_len != arch.param_count() {
        return Err(Error::Parse(format!(
            "theta length {theta_len} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let mut snapshots = Vec::with_capacity(n_snapshots);
    for _ in 0..n_snapshots {
        let eps = cursor.f64()?;
        let mut theta = Vec::with_capacity(theta_len);
        for _ in 0..theta_len {
            theta.push(cursor.f64()?);
        }
        snapshots.push((theta, eps));
    }
    PosteriorSampleSet::new(arch, snapshots, burn_in, thinning)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteCursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse("snapshot file truncated".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
