//! One-dimensional conjugate Gaussian-mean model with an analytic posterior.
//! Serves as the exactness oracle for the SGLD sampler, the weighted-average
//! convergence trend, and the end-to-end leakage bound check.

use crate::error::{Error, Result};
use crate::net::LossBound;
use crate::optim::{GaussianPrior, OptimizerState, StepSchedule};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

const SIMPSON_INTERVALS: usize = 2000;
const QUADRATURE_HALF_WIDTH_SDS: f64 = 8.0;

/// Prior theta ~ N(0, prior_var), observations x ~ N(theta, noise_var).
/// The posterior over theta given the data is Gaussian in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeanModel {
    prior_var: f64,
    noise_var: f64,
    data: Vec<f64>,
}

impl GaussianMeanModel {
    pub fn new(prior_var: f64, noise_var: f64, data: Vec<f64>) -> Result<Self> {
        if !prior_var.is_finite() || prior_var <= 0.0 {
            return Err(Error::Config(format!("prior variance must be positive, got {prior_var}")));
        }
        if !noise_var.is_finite() || noise_var <= 0.0 {
            return Err(Error::Config(format!("noise variance must be positive, got {noise_var}")));
        }
        if data.is_empty() {
            return Err(Error::Config("conjugate model needs at least one observation".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("observations must be finite".into()));
        }
        Ok(GaussianMeanModel { prior_var, noise_var, data })
    }

    /// Draws n observations from N(true_theta, noise_var).
    pub fn generate(
        n: usize,
        true_theta: f64,
        prior_var: f64,
        noise_var: f64,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("cannot generate an empty observation set".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let sd = noise_var.sqrt();
        let data = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                true_theta + sd * z
            })
            .collect();
        GaussianMeanModel::new(prior_var, noise_var, data)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Analytic posterior (mean, variance):
    /// 1/v = 1/prior_var + n/noise_var, m = v * (sum x)/noise_var.
    pub fn posterior(&self) -> (f64, f64) {
        let precision = 1.0 / self.prior_var + self.data.len() as f64 / self.noise_var;
        let v = 1.0 / precision;
        let m = v * self.data.iter().sum::<f64>() / self.noise_var;
        (m, v)
    }

    /// The same model with observation i removed.
    pub fn leave_one_out(&self, i: usize) -> Result<GaussianMeanModel> {
        if i >= self.data.len() {
            return Err(Error::Index(format!(
                "observation {i} out of range for {} observations",
                self.data.len()
            )));
        }
        let mut data = self.data.clone();
        data.remove(i);
        GaussianMeanModel::new(self.prior_var, self.noise_var, data)
    }

    /// Gradient of -log posterior (up to the data-independent constant):
    /// theta/prior_var + sum_i (theta - x_i)/noise_var.
    pub fn grad_neg_log_posterior(&self, theta: f64) -> f64 {
        theta / self.prior_var
            + self.data.iter().map(|x| (theta - x) / self.noise_var).sum::<f64>()
    }

    /// Observation density N(z; theta, noise_var).
    pub fn density(&self, z: f64, theta: f64) -> f64 {
        let sd = self.noise_var.sqrt();
        (-(z - theta) * (z - theta) / (2.0 * self.noise_var)).exp()
            / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Unclamped negative log density of z under theta.
    pub fn raw_nll(&self, z: f64, theta: f64) -> f64 {
        0.5 * (2.0 * std::f64::consts::PI * self.noise_var).ln()
            + (z - theta) * (z - theta) / (2.0 * self.noise_var)
    }

    /// Bounded loss: the density is clamped into [e^{-B}, 1] before the
    /// negative log, so the result lies in [0, B].
    pub fn clamped_loss(&self, z: f64, theta: f64, bound: &LossBound) -> f64 {
        clamp_density_loss(self.density(z, theta), bound)
    }

    /// Posterior expectation of f(theta) by Simpson quadrature over
    /// mean +/- 8 posterior standard deviations.
    pub fn posterior_expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (m, v) = self.posterior();
        let sd = v.sqrt();
        let lo = m - QUADRATURE_HALF_WIDTH_SDS * sd;
        let hi = m + QUADRATURE_HALF_WIDTH_SDS * sd;
        let n = SIMPSON_INTERVALS;
        let h = (hi - lo) / n as f64;
        let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let weight = |theta: f64| (-(theta - m) * (theta - m) / (2.0 * v)).exp() * norm;
        let mut total = f(lo) * weight(lo) + f(hi) * weight(hi);
        for k in 1..n {
            let theta = lo + h * k as f64;
            let c = if k % 2 == 1 { 4.0 } else { 2.0 };
            total += c * f(theta) * weight(theta);
        }
        total * h / 3.0
    }

    /// E_posterior[l_B(z, theta)] by quadrature.
    pub fn posterior_mean_clamped_loss(&self, z: f64, bound: &LossBound) -> f64 {
        self.posterior_expect(|theta| self.clamped_loss(z, theta, bound))
    }

    /// -ln E_posterior[e^{-l_B(z, theta)}] by quadrature.
    pub fn posterior_tp(&self, z: f64, bound: &LossBound) -> f64 {
        -self.posterior_expect(|theta| (-self.clamped_loss(z, theta, bound)).exp()).ln()
    }

    /// Closed-form E_posterior[raw_nll(z, theta)] =
    /// (1/2)ln(2 pi noise_var) + ((z - m)^2 + v)/(2 noise_var).
    pub fn posterior_mean_raw_nll(&self, z: f64) -> f64 {
        let (m, v) = self.posterior();
        0.5 * (2.0 * std::f64::consts::PI * self.noise_var).ln()
            + ((z - m) * (z - m) + v) / (2.0 * self.noise_var)
    }

    /// Full-batch SGLD trajectory, one (step size, theta after update) pair
    /// per step. The gradient is exact, so sampling error comes only from
    /// discretization and injected noise.
    pub fn run_sgld(
        &self,
        schedule: StepSchedule,
        steps: usize,
        init_theta: f64,
        noise_seed: u64,
    ) -> Result<Vec<(f64, f64)>> {
        if steps == 0 {
            return Err(Error::Config("trajectory needs at least one step".into()));
        }
        let mut state = OptimizerState::sgld(
            schedule,
            GaussianPrior::new(self.prior_var)?,
            noise_seed,
        );
        let mut theta = [init_theta];
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let grad = [self.grad_neg_log_posterior(theta[0])];
            let eps = state.apply(&mut theta, &grad, &grad)?;
            out.push((eps, theta[0]));
        }
        Ok(out)
    }

    /// Bounded loss of the trajectory-weighted predictive mixture
    /// sum_t w_t N(z; theta_t, noise_var).
    pub fn mixture_clamped_loss(
        &self,
        z: f64,
        thetas: &[f64],
        weights: &[f64],
        bound: &LossBound,
    ) -> Result<f64> {
        if thetas.is_empty() || thetas.len() != weights.len() {
            return Err(Error::Shape(format!(
                "mixture needs matching nonempty components, got {} thetas and {} weights",
                thetas.len(),
                weights.len()
            )));
        }
        let p: f64 = thetas
            .iter()
            .zip(weights)
            .map(|(&t, &w)| w * self.density(z, t))
            .sum();
        Ok(clamp_density_loss(p, bound))
    }
}

/// -ln of the density clamped into [e^{-B}, 1].
pub fn clamp_density_loss(density: f64, bound: &LossBound) -> f64 {
    -density.clamp(bound.p_min(), 1.0).ln()
}
