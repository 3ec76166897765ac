//! Training strategies: SGD, RMSprop, SGLD, and preconditioned SGLD, with
//! step-size schedules and schedule validation.
//!
//! The Bayesian updates (SGLD/pSGLD) follow the minibatch posterior gradient
//! `theta/sigma^2 + (N/|B|) * sum of per-sample NLL gradients`, take half-step
//! drift, and inject Gaussian noise of per-coordinate variance equal to the
//! step size. The SGD/RMSprop baselines are conventional: mean-batch data
//! gradient, no prior term, no noise.

use crate::error::{Error, Result};
use crate::net::{backward, LossBound, Mode, ModelParams, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Step-size schedule family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant { eps0: f64 },
    /// Step size halves every `period_steps` minibatch updates.
    Halving { eps0: f64, period_steps: usize },
    /// eps_t = a * (b + t)^(-gamma) with t counted from 1.
    Polynomial { a: f64, b: f64, gamma: f64 },
    /// Explicit per-step sizes; steps beyond the list reuse the last value.
    Explicit { steps: Vec<f64> },
}

/// A schedule plus the current step index (number of completed updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    kind: ScheduleKind,
    t: usize,
}

impl StepSchedule {
    pub fn constant(eps0: f64) -> Result<Self> {
        if !eps0.is_finite() || eps0 <= 0.0 {
            return Err(Error::Schedule(format!(
                "constant step size must be positive, got {eps0}"
            )));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Constant { eps0 },
            t: 0,
        })
    }

    pub fn halving(eps0: f64, period_steps: usize) -> Result<Self> {
        if !eps0.is_finite() || eps0 <= 0.0 {
            return Err(Error::Schedule(format!(
                "halving initial step must be positive, got {eps0}"
            )));
        }
        if period_steps == 0 {
            return Err(Error::Schedule("halving period must be at least 1 step".into()));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Halving { eps0, period_steps },
            t: 0,
        })
    }

    /// Halving period expressed in epochs; steps per epoch = ceil(N / batch).
    pub fn halving_epochs(
        eps0: f64,
        period_epochs: usize,
        n_train: usize,
        batch_size: usize,
    ) -> Result<Self> {
        if period_epochs == 0 || batch_size == 0 || n_train == 0 {
            return Err(Error::Schedule(
                "halving_epochs requires positive period, batch size, and dataset size".into(),
            ));
        }
        let steps_per_epoch = n_train.div_ceil(batch_size);
        StepSchedule::halving(eps0, period_epochs * steps_per_epoch)
    }

    /// Polynomial decay; gamma must lie in (0, 1] so the step sum diverges.
    pub fn polynomial(a: f64, b: f64, gamma: f64) -> Result<Self> {
        if !a.is_finite() || a <= 0.0 {
            return Err(Error::Schedule(format!("polynomial scale must be positive, got {a}")));
        }
        if !b.is_finite() || b < 0.0 {
            return Err(Error::Schedule(format!("polynomial offset must be >= 0, got {b}")));
        }
        if !gamma.is_finite() || gamma <= 0.0 || gamma > 1.0 {
            return Err(Error::Schedule(format!(
                "polynomial exponent must lie in (0, 1], got {gamma}"
            )));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Polynomial { a, b, gamma },
            t: 0,
        })
    }

    pub fn explicit(steps: Vec<f64>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Schedule("explicit schedule needs at least one step".into()));
        }
        if let Some(bad) = steps.iter().find(|s| !s.is_finite() || **s <= 0.0) {
            return Err(Error::Schedule(format!("explicit step sizes must be positive, got {bad}")));
        }
        Ok(StepSchedule {
            kind: ScheduleKind::Explicit { steps },
            t: 0,
        })
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// Number of completed updates.
    pub fn current_step(&self) -> usize {
        self.t
    }

    /// Step size of update number `t` (0-based).
    pub fn step_size_at(&self, t: usize) -> f64 {
        match &self.kind {
            ScheduleKind::Constant { eps0 } => *eps0,
            ScheduleKind::Halving { eps0, period_steps } => {
                eps0 * 0.5f64.powi((t / period_steps) as i32)
            }
            ScheduleKind::Polynomial { a, b, gamma } => a * (b + (t + 1) as f64).powf(-gamma),
            ScheduleKind::Explicit { steps } => steps[t.min(steps.len() - 1)],
        }
    }

    /// Step size the next update will use.
    pub fn current(&self) -> f64 {
        self.step_size_at(self.t)
    }

    /// Consumes one step; returns the size used.
    fn advance(&mut self) -> f64 {
        let eps = self.current();
        self.t += 1;
        eps
    }
}

/// Zero-mean isotropic Gaussian prior on theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    variance: f64,
}

impl GaussianPrior {
    pub fn new(variance: f64) -> Result<Self> {
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::Config(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        Ok(GaussianPrior { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Gradient of -log p(theta): theta / sigma^2.
    pub fn grad_into(&self, theta: &[f64], out: &mut [f64]) {
        for (g, &t) in out.iter_mut().zip(theta) {
            *g = t / self.variance;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Sgld,
    Psgld,
}

/// Mutable optimizer state: schedule position, second-moment accumulator,
/// and the dedicated noise stream.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    pub schedule: StepSchedule,
    prior: Option<GaussianPrior>,
    /// Second-moment accumulator (RMSprop/pSGLD only).
    v: Option<Vec<f64>>,
    alpha: f64,
    lambda_c: f64,
    noise_rng: ChaCha12Rng,
    /// Test hook: false forces injected noise to zero.
    noise_enabled: bool,
    /// Test hook: true stops accumulator updates (preconditioner frozen).
    freeze_preconditioner: bool,
}

pub const DEFAULT_ALPHA: f64 = 0.99;
pub const DEFAULT_LAMBDA_C: f64 = 1e-5;

impl OptimizerState {
    pub fn sgd(schedule: StepSchedule) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            schedule,
            prior: None,
            v: None,
            alpha: DEFAULT_ALPHA,
            lambda_c: DEFAULT_LAMBDA_C,
            noise_rng: ChaCha12Rng::seed_from_u64(0),
            noise_enabled: false,
            freeze_preconditioner: false,
        }
    }

    pub fn rmsprop(schedule: StepSchedule, alpha: f64, lambda_c: f64, dim: usize) -> Result<Self> {
        check_accumulator_params(alpha, lambda_c)?;
        Ok(OptimizerState {
            kind: OptimizerKind::RmsProp,
            schedule,
            prior: None,
            v: Some(vec![0.0; dim]),
            alpha,
            lambda_c,
            noise_rng: ChaCha12Rng::seed_from_u64(0),
            noise_enabled: false,
            freeze_preconditioner: false,
        })
    }

    pub fn sgld(schedule: StepSchedule, prior: GaussianPrior, noise_seed: u64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgld,
            schedule,
            prior: Some(prior),
            v: None,
            alpha: DEFAULT_ALPHA,
            lambda_c: DEFAULT_LAMBDA_C,
            noise_rng: ChaCha12Rng::seed_from_u64(noise_seed),
            noise_enabled: true,
            freeze_preconditioner: false,
        }
    }

    pub fn psgld(
        schedule: StepSchedule,
        prior: GaussianPrior,
        alpha: f64,
        lambda_c: f64,
        dim: usize,
        noise_seed: u64,
    ) -> Result<Self> {
        check_accumulator_params(alpha, lambda_c)?;
        Ok(OptimizerState {
            kind: OptimizerKind::Psgld,
            schedule,
            prior: Some(prior),
            v: Some(vec![0.0; dim]),
            alpha,
            lambda_c,
            noise_rng: ChaCha12Rng::seed_from_u64(noise_seed),
            noise_enabled: true,
            freeze_preconditioner: false,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn prior(&self) -> Option<GaussianPrior> {
        self.prior
    }

    pub fn accumulator(&self) -> Option<&[f64]> {
        self.v.as_deref()
    }

    /// Test hook: force injected noise to zero.
    pub fn set_noise_enabled(&mut self, enabled: bool) {
        self.noise_enabled = enabled;
    }

    /// Test hook: freeze the second-moment accumulator at its current value.
    pub fn set_freeze_preconditioner(&mut self, frozen: bool) {
        self.freeze_preconditioner = frozen;
    }

    fn draw_noise(&mut self) -> f64 {
        StandardNormal.sample(&mut self.noise_rng)
    }

    /// Applies one update to `theta` given the already-computed gradients.
    ///
    /// `step_grad` multiplies the step size (the objective gradient);
    /// `accum_grad` feeds the second-moment accumulator and may differ for
    /// pSGLD, where the preconditioner tracks the mean data gradient while
    /// the drift uses the full posterior gradient. Rejects the step without
    /// mutating anything when `step_grad` is non-finite.
    pub fn apply(&mut self, theta: &mut [f64], step_grad: &[f64], accum_grad: &[f64]) -> Result<f64> {
        if theta.len() != step_grad.len() || theta.len() != accum_grad.len() {
            return Err(Error::Shape(format!(
                "gradient length {} / {} does not match theta length {}",
                step_grad.len(),
                accum_grad.len(),
                theta.len()
            )));
        }
        if !step_grad.iter().all(|g| g.is_finite()) {
            return Err(Error::Numeric(
                "non-finite gradient; step rejected".into(),
            ));
        }
        if let Some(v) = &self.v {
            if v.len() != theta.len() {
                return Err(Error::Shape(format!(
                    "accumulator length {} does not match theta length {}",
                    v.len(),
                    theta.len()
                )));
            }
        }
        let eps = self.schedule.current();
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, &g) in theta.iter_mut().zip(step_grad) {
                    *t -= eps * g;
                }
            }
            OptimizerKind::RmsProp => {
                let v = self.v.as_mut().expect("rmsprop constructor allocates v");
                if !self.freeze_preconditioner {
                    for (vi, &g) in v.iter_mut().zip(accum_grad) {
                        *vi = self.alpha * *vi + (1.0 - self.alpha) * g * g;
                    }
                }
                for ((t, &g), &vi) in theta.iter_mut().zip(step_grad).zip(v.iter()) {
                    *t -= eps * g / (vi.sqrt() + self.lambda_c);
                }
            }
            OptimizerKind::Sgld => {
                let half_eps = 0.5 * eps;
                let noise_std = eps.sqrt();
                for (t, &g) in theta.iter_mut().zip(step_grad) {
                    let eta = if self.noise_enabled {
                        noise_std * self.draw_noise()
                    } else {
                        0.0
                    };
                    *t -= half_eps * g + eta;
                }
            }
            OptimizerKind::Psgld => {
                if !self.freeze_preconditioner {
                    let v = self.v.as_mut().expect("psgld constructor allocates v");
                    for (vi, &g) in v.iter_mut().zip(accum_grad) {
                        *vi = self.alpha * *vi + (1.0 - self.alpha) * g * g;
                    }
                }
                let half_eps = 0.5 * eps;
                let lambda_c = self.lambda_c;
                let noise_enabled = self.noise_enabled;
                let v = self.v.as_ref().expect("psgld constructor allocates v");
                let noise_rng = &mut self.noise_rng;
                for (i, (t, &g)) in theta.iter_mut().zip(step_grad).enumerate() {
                    let precond = 1.0 / (lambda_c + v[i].sqrt());
                    let eta = if noise_enabled {
                        let z: f64 = StandardNormal.sample(noise_rng);
                        (eps * precond).sqrt() * z
                    } else {
                        0.0
                    };
                    *t -= half_eps * g * precond + eta;
                }
            }
        }
        Ok(self.schedule.advance())
    }
}

fn check_accumulator_params(alpha: f64, lambda_c: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Config(format!("decay alpha must lie in (0, 1), got {alpha}")));
    }
    if !lambda_c.is_finite() || lambda_c <= 0.0 {
        return Err(Error::Config(format!("damping lambda_c must be positive, got {lambda_c}")));
    }
    Ok(())
}

/// Gradient of the minibatch objective
/// `-log p(theta) + (N/|B|) * sum over batch of l(z, theta)`.
///
/// The prior term is exact for the Gaussian prior; the data term sums bounded
/// NLL gradients and scales them by `n_total / batch.len()`.
pub fn minibatch_loss_grad(
    params: &ModelParams,
    batch: &[Sample],
    n_total: usize,
    prior: &GaussianPrior,
    bound: &LossBound,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("minibatch_loss_grad requires a nonempty batch".into()));
    }
    if n_total < batch.len() {
        return Err(Error::Config(format!(
            "dataset size {} smaller than batch size {}",
            n_total,
            batch.len()
        )));
    }
    let scale = n_total as f64 / batch.len() as f64;
    let mut grad = backward(params, batch, bound, Mode::Eval, None)?;
    for (g, &t) in grad.iter_mut().zip(&params.theta) {
        *g = t / prior.variance() + scale * *g;
    }
    Ok(grad)
}

/// Mean per-sample NLL gradient over the batch (no prior, no scaling).
fn mean_data_grad(
    params: &ModelParams,
    batch: &[Sample],
    bound: &LossBound,
    mask_seed: Option<u64>,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("optimizer step requires a nonempty batch".into()));
    }
    let mode = if mask_seed.is_some() { Mode::Train } else { Mode::Eval };
    let mut grad = backward(params, batch, bound, mode, mask_seed)?;
    let inv = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    Ok(grad)
}

/// Conventional SGD step on the mean-batch data gradient. `mask_seed`
/// enables train-mode dropout for architectures that use it.
pub fn sgd_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    batch: &[Sample],
    bound: &LossBound,
    mask_seed: Option<u64>,
) -> Result<f64> {
    expect_kind(state, OptimizerKind::Sgd)?;
    let grad = mean_data_grad(params, batch, bound, mask_seed)?;
    state.apply(&mut params.theta, &grad, &grad)
}

/// RMSprop step: v <- alpha*v + (1-alpha)*g^2 (updated before the step), then
/// theta <- theta - eps * g / (sqrt(v) + lambda_c).
pub fn rmsprop_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    batch: &[Sample],
    bound: &LossBound,
    mask_seed: Option<u64>,
) -> Result<f64> {
    expect_kind(state, OptimizerKind::RmsProp)?;
    let grad = mean_data_grad(params, batch, bound, mask_seed)?;
    state.apply(&mut params.theta, &grad, &grad)
}

/// SGLD step: theta <- theta - (eps/2) * minibatch posterior gradient - eta,
/// eta ~ N(0, eps I) drawn per coordinate from the state's noise stream.
/// Dropout never applies; the sampled model is the plain network.
pub fn sgld_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    batch: &[Sample],
    n_total: usize,
    bound: &LossBound,
) -> Result<f64> {
    expect_kind(state, OptimizerKind::Sgld)?;
    let prior = state.prior().expect("sgld constructor sets a prior");
    let grad = minibatch_loss_grad(params, batch, n_total, &prior, bound)?;
    state.apply(&mut params.theta, &grad, &grad)
}

/// Preconditioned SGLD step: G = diag(1/(lambda_c + sqrt(v))), drift
/// -(eps/2) * G * posterior gradient, noise per coordinate N(0, eps * G_ii).
/// The accumulator v tracks the mean data gradient, RMSprop-style.
pub fn psgld_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    batch: &[Sample],
    n_total: usize,
    bound: &LossBound,
) -> Result<f64> {
    expect_kind(state, OptimizerKind::Psgld)?;
    let prior = state.prior().expect("psgld constructor sets a prior");
    let step_grad = minibatch_loss_grad(params, batch, n_total, &prior, bound)?;
    let accum_grad = mean_data_grad(params, batch, bound, None)?;
    state.apply(&mut params.theta, &step_grad, &accum_grad)
}

fn expect_kind(state: &OptimizerState, expected: OptimizerKind) -> Result<()> {
    if state.kind() != expected {
        return Err(Error::Config(format!(
            "optimizer state is {:?}, expected {:?}",
            state.kind(),
            expected
        )));
    }
    Ok(())
}

/// Finite-horizon schedule report for the step-size conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    /// Step sizes never increase over the horizon.
    pub monotone: bool,
    /// All step sizes equal (constant-step mode, allowed in practice).
    pub constant_step: bool,
    /// Strictly decreasing somewhere (the asymptotic-theory regime).
    pub decreasing: bool,
    /// S_L = sum of step sizes over the horizon.
    pub sum: f64,
    /// sum of squared steps / S_L; should shrink as the horizon grows.
    pub sq_ratio: f64,
}

/// Checks the step-size conditions over a finite horizon: every step positive
/// and non-increasing. Constant schedules are flagged, not rejected.
pub fn validate_schedule(schedule: &StepSchedule, horizon: usize) -> Result<ScheduleReport> {
    if horizon < 2 {
        return Err(Error::Config(format!("schedule horizon must be >= 2, got {horizon}")));
    }
    let mut sum = 0.0;
    let mut sq_sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut constant_step = true;
    let mut first = f64::NAN;
    for t in 0..horizon {
        let eps = schedule.step_size_at(t);
        if !eps.is_finite() || eps <= 0.0 {
            return Err(Error::Schedule(format!("step {t} has non-positive size {eps}")));
        }
        if eps > prev {
            return Err(Error::Schedule(format!(
                "step sizes increase at step {t}: {prev} -> {eps}"
            )));
        }
        if t == 0 {
            first = eps;
        } else if eps != first {
            constant_step = false;
        }
        sum += eps;
        sq_sum += eps * eps;
        prev = eps;
    }
    Ok(ScheduleReport {
        monotone: true,
        constant_step,
        decreasing: !constant_step,
        sum,
        sq_ratio: sq_sum / sum,
    })
}
