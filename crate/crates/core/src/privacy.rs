//! Membership-privacy leakage: the optimal-attack posterior, measure scores,
//! the Lipschitz/ensemble bounds, the uniform-bound constants, and an
//! exact-enumeration oracle for the leave-one-out bound.
//!
//! Core quantities, all driven by a measure score s and the attacker prior
//! lambda: the optimal attack posterior is P(m=1|z) = sigmoid(s + t_lambda),
//! leakage is Mpl = max(P - lambda, 0), and the 1/4-Lipschitz property of the
//! sigmoid gives Mpl <= max(s/4, 0) for every lambda.

use crate::error::{Error, Result};
use crate::net::{forward, nll_loss, LossBound, Mode, ModelParams, Sample};
use crate::posterior::{posterior_mean_loss, EnsemblePredictor};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Validates a member-ratio prior and returns its log-odds t_lambda.
pub fn lambda_logit(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 || lambda >= 1.0 {
        return Err(Error::Config(format!(
            "member ratio lambda must lie strictly in (0, 1), got {lambda}"
        )));
    }
    Ok((lambda / (1.0 - lambda)).ln())
}

/// Attacker-held samples with known membership flags, plus the attacker's
/// prior member ratio lambda. lambda is configured, not recomputed from the
/// entries: the worst-case reference set has every flag = 1, which would
/// degenerate to lambda = 1 and an infinite logit.
#[derive(Debug, Clone)]
pub struct ShadowDataset {
    entries: Vec<(Sample, bool)>,
    lambda: f64,
    t_lambda: f64,
}

impl ShadowDataset {
    pub fn new(entries: Vec<(Sample, bool)>, lambda: f64) -> Result<Self> {
        let t_lambda = lambda_logit(lambda)?;
        Ok(ShadowDataset {
            entries,
            lambda,
            t_lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t_lambda(&self) -> f64 {
        self.t_lambda
    }

    pub fn entries(&self) -> &[(Sample, bool)] {
        &self.entries
    }

    /// The member subset S_T (flags = 1), which defines the reference posterior.
    pub fn members(&self) -> Vec<&Sample> {
        self.entries
            .iter()
            .filter(|(_, m)| *m)
            .map(|(z, _)| z)
            .collect()
    }
}

/// Measure score s = t_p(z) - l(z, theta); positive when the sample's loss
/// sits below the posterior log-sum-exp threshold, i.e. looks like a member.
pub fn measure_score(t_p: f64, l: f64) -> f64 {
    debug_assert!(t_p.is_finite() && l.is_finite());
    t_p - l
}

/// Optimal-attack posterior P(m=1|z, theta, S) = sigmoid(s + t_lambda).
pub fn membership_posterior(s: f64, shadow: &ShadowDataset) -> f64 {
    debug_assert!(s.is_finite());
    sigmoid(s + shadow.t_lambda())
}

/// Membership privacy leakage: the optimal attack's advantage over always
/// predicting the prior, max(P - lambda, 0).
pub fn mpl_loss(p: f64, lambda: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "posterior {p} outside [0,1]");
    debug_assert!(lambda > 0.0 && lambda < 1.0);
    (p - lambda).max(0.0)
}

/// Lipschitz bound on the leakage: Mpl <= max(s/4, 0), uniformly in lambda.
pub fn mpl_lipschitz_bound(s: f64) -> f64 {
    debug_assert!(s.is_finite());
    (s / 4.0).max(0.0)
}

/// Ensemble measure score s~ = E_{theta~p_S}[l(z,theta)] - l~(y, y_hat);
/// feeding it to `mpl_lipschitz_bound` bounds the ensemble leakage.
pub fn ensemble_measure_score(mean_loss: f64, ensemble_loss: f64) -> f64 {
    debug_assert!(mean_loss.is_finite() && ensemble_loss.is_finite());
    mean_loss - ensemble_loss
}

/// Uniform bound on expected ensemble leakage for an SGLD-trained model:
/// (B/4)(e^{2B} - 1) + c_approx * (1/S_L + sum_sq/S_L). The remainder
/// constant is not derivable from the framework and must be supplied
/// (0 keeps the leading term only).
pub fn ensemble_mpl_bound(b: f64, s_l: f64, sum_sq: f64, c_approx: f64) -> Result<f64> {
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::Config(format!("bound B must be positive, got {b}")));
    }
    if !s_l.is_finite() || s_l <= 0.0 {
        return Err(Error::Config(format!("S_L must be positive, got {s_l}")));
    }
    if !sum_sq.is_finite() || sum_sq < 0.0 {
        return Err(Error::Config(format!("sum of squared steps must be >= 0, got {sum_sq}")));
    }
    if !c_approx.is_finite() || c_approx < 0.0 {
        return Err(Error::Config(format!("c_approx must be >= 0, got {c_approx}")));
    }
    Ok(b / 4.0 * ((2.0 * b).exp() - 1.0) + c_approx * (1.0 / s_l + sum_sq / s_l))
}

/// Bound on the leave-one-out posterior-average loss difference: B(e^{2B}-1).
pub fn loo_error_bound(b: f64) -> Result<f64> {
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::Config(format!("bound B must be positive, got {b}")));
    }
    Ok(b * ((2.0 * b).exp() - 1.0))
}

/// Leakage bound implied by a claimed (epsilon, delta)-DP guarantee:
/// Mpl <= epsilon/4 with probability 1 - delta. Formula only; no DP training
/// happens here.
pub fn dp_mpl_bound(epsilon: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Config(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(epsilon / 4.0)
}

/// Exact finite-support posterior over candidate models; the enumeration
/// oracle behind the leave-one-out bound checks.
#[derive(Debug, Clone)]
pub struct DiscretePosterior {
    support: Vec<ModelParams>,
    weights: Vec<f64>,
}

impl DiscretePosterior {
    /// Builds from explicit nonnegative weights (renormalized to sum 1).
    pub fn new(support: Vec<ModelParams>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::Shape(format!(
                "support ({}) and weights ({}) must be matching nonempty lists",
                support.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Numeric("posterior weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numeric("degenerate posterior: zero total weight".into()));
        }
        Ok(DiscretePosterior {
            support,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Exact Bayes renormalization over the support:
    /// weight_i proportional to prior_i * product over dataset of e^{-l(z, theta_i)},
    /// computed in log space with a max shift.
    pub fn from_bayes(
        support: Vec<ModelParams>,
        prior: &[f64],
        dataset: &[Sample],
        bound: &LossBound,
    ) -> Result<Self> {
        if support.is_empty() || support.len() != prior.len() {
            return Err(Error::Shape(format!(
                "support ({}) and prior ({}) must be matching nonempty lists",
                support.len(),
                prior.len()
            )));
        }
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Numeric("prior weights must be finite and nonnegative".into()));
        }
        if prior.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Numeric("degenerate posterior: zero total prior weight".into()));
        }
        let mut log_w = Vec::with_capacity(support.len());
        for (params, &p) in support.iter().zip(prior) {
            if p == 0.0 {
                log_w.push(f64::NEG_INFINITY);
                continue;
            }
            let mut lw = p.ln();
            for z in dataset {
                let probs = forward(params, &z.x, Mode::Eval, None)?;
                lw -= nll_loss(&probs, z.y, bound)?;
            }
            log_w.push(lw);
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numeric("degenerate posterior: zero total weight".into()));
        }
        let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
        DiscretePosterior::new(support, weights)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &[ModelParams] {
        &self.support
    }

    /// Posterior-average bounded loss of z over the support.
    pub fn expected_loss(&self, z: &Sample, bound: &LossBound) -> Result<f64> {
        let mut total = 0.0;
        for (params, &w) in self.support.iter().zip(&self.weights) {
            let probs = forward(params, &z.x, Mode::Eval, None)?;
            total += w * nll_loss(&probs, z.y, bound)?;
        }
        Ok(total)
    }
}

/// Result of one exact leave-one-out comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct LooCheck {
    /// |E_{p_S}[l(z)] - E_{p_D}[l(z)]| over the shared support.
    pub loo_error: f64,
    /// B(e^{2B} - 1).
    pub bound: f64,
    pub holds: bool,
}

/// Compares the posterior-average loss of z under the posteriors conditioned
/// on D and on S (typically D minus one sample) over the same support.
pub fn exact_loo_check(
    posterior_d: &DiscretePosterior,
    posterior_s: &DiscretePosterior,
    z: &Sample,
    bound: &LossBound,
) -> Result<LooCheck> {
    if posterior_d.len() != posterior_s.len() {
        return Err(Error::Config(format!(
            "posteriors have different support sizes: {} vs {}",
            posterior_d.len(),
            posterior_s.len()
        )));
    }
    for (a, b) in posterior_d.support().iter().zip(posterior_s.support()) {
        if a.theta != b.theta || a.arch != b.arch {
            return Err(Error::Config("posteriors must share one support".into()));
        }
    }
    let e_d = posterior_d.expected_loss(z, bound)?;
    let e_s = posterior_s.expected_loss(z, bound)?;
    let loo_error = (e_s - e_d).abs();
    let limit = loo_error_bound(bound.b())?;
    Ok(LooCheck {
        loo_error,
        bound: limit,
        holds: loo_error <= limit + 1e-9,
    })
}

/// Per-sample leakage audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MplReport {
    pub sample_id: String,
    /// Ensemble measure score s~.
    pub score: f64,
    /// Optimal-attack posterior P(m=1|z).
    pub posterior: f64,
    /// max(P - lambda, 0).
    pub mpl: f64,
    /// max(s~/4, 0); always >= mpl.
    pub lipschitz_bound: f64,
}

/// Audits every sample against an ensemble: measures s~ from the posterior
/// mean loss and the ensemble-prediction loss, then the attack posterior,
/// leakage, and its Lipschitz bound.
pub fn audit_ensemble(
    ensemble: &EnsemblePredictor,
    samples: &[(String, Sample)],
    lambda: f64,
    bound: &LossBound,
) -> Result<Vec<MplReport>> {
    let t_lambda = lambda_logit(lambda)?;
    let mut reports = Vec::with_capacity(samples.len());
    for (id, z) in samples {
        let mean_loss = posterior_mean_loss(ensemble.set(), z, bound)?;
        let ensemble_loss = ensemble.loss(z, bound)?;
        let score = ensemble_measure_score(mean_loss, ensemble_loss);
        let posterior = sigmoid(score + t_lambda);
        reports.push(MplReport {
            sample_id: id.clone(),
            score,
            posterior,
            mpl: mpl_loss(posterior, lambda),
            lipschitz_bound: mpl_lipschitz_bound(score),
        });
    }
    Ok(reports)
}

/// Writes reports as a delimited text table (sample id, s, P, mpl, bound).
pub fn write_mpl_reports(reports: &[MplReport], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for report in reports {
        writer
            .serialize(report)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    crate::experiment::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, MlpArchitecture};
    use crate::posterior::{EnsembleMode, PosteriorSampleSet};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn shadow(lambda: f64) -> ShadowDataset {
        ShadowDataset::new(Vec::new(), lambda).unwrap()
    }

    #[test]
    fn measure_score_is_a_difference() {
        assert_eq!(measure_score(0.5, 0.5), 0.0);
        assert!((measure_score(0.5, 0.1) - 0.4).abs() < 1e-15);
        assert!((measure_score(0.1, 0.5) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn shadow_dataset_validates_lambda() {
        assert!(ShadowDataset::new(Vec::new(), 0.0).is_err());
        assert!(ShadowDataset::new(Vec::new(), 1.0).is_err());
        assert!(ShadowDataset::new(Vec::new(), -0.2).is_err());
        let s = shadow(0.25);
        assert!((s.t_lambda() - (0.25f64 / 0.75).ln()).abs() < 1e-12);
    }

    #[test]
    fn shadow_members_filters_flags() {
        let z = Sample::new(vec![0.0], 0);
        let s = ShadowDataset::new(
            vec![(z.clone(), true), (z.clone(), false), (z, true)],
            0.5,
        )
        .unwrap();
        assert_eq!(s.members().len(), 2);
    }

    #[test]
    fn posterior_at_zero_score_equals_lambda() {
        for lambda in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let p = membership_posterior(0.0, &shadow(lambda));
            assert!((p - lambda).abs() < 1e-12, "lambda {lambda}: got {p}");
            assert_eq!(mpl_loss(p.max(lambda), lambda).min(0.0), 0.0);
        }
    }

    #[test]
    fn posterior_matches_sigmoid_examples() {
        let p = membership_posterior(0.4, &shadow(0.5));
        assert!((p - 0.598688).abs() < 1e-6, "got {p}");
        // Large negative score drives the posterior to zero.
        assert!(membership_posterior(-50.0, &shadow(0.5)) < 1e-20);
        assert!(membership_posterior(-800.0, &shadow(0.5)) >= 0.0);
    }

    #[test]
    fn posterior_is_strictly_increasing_in_score() {
        let sh = shadow(0.3);
        let mut prev = membership_posterior(-10.0, &sh);
        let mut s = -10.0 + 0.25;
        while s <= 10.0 {
            let p = membership_posterior(s, &sh);
            assert!(p > prev, "not increasing at s = {s}");
            prev = p;
            s += 0.25;
        }
    }

    #[test]
    fn mpl_loss_examples() {
        assert!((mpl_loss(0.75, 0.5) - 0.25).abs() < 1e-15);
        assert_eq!(mpl_loss(0.3, 0.5), 0.0);
        assert_eq!(mpl_loss(0.5, 0.5), 0.0);
    }

    #[test]
    fn lipschitz_bound_examples() {
        assert!((mpl_lipschitz_bound(0.4) - 0.1).abs() < 1e-15);
        let actual = mpl_loss(membership_posterior(0.4, &shadow(0.5)), 0.5);
        assert!((actual - 0.098688).abs() < 1e-6);
        assert!(actual <= 0.1);
        assert_eq!(mpl_lipschitz_bound(-3.0), 0.0);
        assert_eq!(mpl_lipschitz_bound(0.0), 0.0);
        assert!((mpl_lipschitz_bound(4.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_bound_holds_on_exhaustive_grid() {
        // s in [-10, 10] step 0.01, lambda in {0.1, 0.25, 0.5, 0.75, 0.9}.
        for lambda in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let sh = shadow(lambda);
            for i in 0..=2000 {
                let s = -10.0 + 0.01 * i as f64;
                let mpl = mpl_loss(membership_posterior(s, &sh), lambda);
                let limit = mpl_lipschitz_bound(s);
                assert!(
                    mpl <= limit + 1e-12,
                    "violation at s = {s}, lambda = {lambda}: {mpl} > {limit}"
                );
                assert!(mpl <= 1.0 - lambda + 1e-12);
            }
        }
    }

    #[test]
    fn ensemble_score_arithmetic() {
        assert_eq!(ensemble_measure_score(0.5, 0.5), 0.0);
        let s = ensemble_measure_score(0.5, 0.2);
        assert!((s - 0.3).abs() < 1e-15);
        assert!((mpl_lipschitz_bound(s) - 0.075).abs() < 1e-15);
        // Both losses in [-B, B] keeps |s~| <= 2B.
        let b = 5.0;
        assert!(ensemble_measure_score(b, -b).abs() <= 2.0 * b);
    }

    #[test]
    fn ensemble_mpl_bound_examples() {
        let leading = ensemble_mpl_bound(0.5, 1.0, 0.0, 0.0).unwrap();
        assert!((leading - 0.125 * (1.0f64.exp() - 1.0)).abs() < 1e-15);
        assert!((leading - 0.214785).abs() < 1e-6);

        let tiny = ensemble_mpl_bound(1e-9, 1.0, 0.0, 0.0).unwrap();
        assert!(tiny < 1e-15);

        // Growing S_L with fixed sum_sq decreases toward the leading term.
        let a = ensemble_mpl_bound(0.5, 10.0, 0.2, 1.0).unwrap();
        let b = ensemble_mpl_bound(0.5, 100.0, 0.2, 1.0).unwrap();
        assert!(b < a);
        assert!(b > leading);

        assert!(ensemble_mpl_bound(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ensemble_mpl_bound(0.5, 0.0, 0.0, 0.0).is_err());
        assert!(ensemble_mpl_bound(0.5, 1.0, -0.1, 0.0).is_err());
        assert!(ensemble_mpl_bound(0.5, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn loo_error_bound_examples() {
        let half = loo_error_bound(0.5).unwrap();
        assert!((half - 0.5 * (1.0f64.exp() - 1.0)).abs() < 1e-15);
        assert!((half - 0.859141).abs() < 1e-6);
        assert!(loo_error_bound(1e-9).unwrap() < 1e-15);
        // Monotone increasing in B.
        let mut prev = 0.0;
        for i in 1..=20 {
            let b = loo_error_bound(0.1 * i as f64).unwrap();
            assert!(b > prev);
            prev = b;
        }
        assert!(loo_error_bound(0.0).is_err());
    }

    #[test]
    fn dp_bound_examples() {
        assert_eq!(dp_mpl_bound(1.0).unwrap(), 0.25);
        assert_eq!(dp_mpl_bound(0.0).unwrap(), 0.0);
        assert!((dp_mpl_bound(0.4).unwrap() - 0.1).abs() < 1e-15);
        assert!(dp_mpl_bound(-0.1).is_err());
    }

    /// Linear softmax model over a single input; at x = 0 the logits are the
    /// biases, so target probabilities can be set by hand.
    fn bias_model(b0: f64, b1: f64) -> ModelParams {
        let arch = MlpArchitecture::new(vec![1, 2], Activation::Relu, 0.0).unwrap();
        ModelParams::new(arch, vec![0.0, 0.0, b0, b1]).unwrap()
    }

    #[test]
    fn loo_error_zero_when_no_sample_removed() {
        let bound = LossBound::new(1.0).unwrap();
        let support = vec![bias_model(1.0, 0.0), bias_model(-0.5, 0.5)];
        let data = vec![Sample::new(vec![0.0], 0), Sample::new(vec![0.0], 1)];
        let p = DiscretePosterior::from_bayes(support.clone(), &[0.5, 0.5], &data, &bound).unwrap();
        let q = DiscretePosterior::from_bayes(support, &[0.5, 0.5], &data, &bound).unwrap();
        let check = exact_loo_check(&p, &q, &data[0], &bound).unwrap();
        assert_eq!(check.loo_error, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn loo_check_matches_longhand_two_point_enumeration() {
        // Two-point support, |D| = 3, S = D minus z3; every quantity below is
        // recomputed with elementary operations only.
        let bound = LossBound::new(1.0).unwrap();
        let support = vec![bias_model(1.0, 0.0), bias_model(-0.5, 0.5)];
        let d = vec![
            Sample::new(vec![0.0], 0),
            Sample::new(vec![0.0], 0),
            Sample::new(vec![0.0], 1),
        ];
        let s = &d[..2];
        let probe = &d[2];

        // Longhand: p(y=0) = sigmoid(b0 - b1); clamp q = (1-2e^-1)p + e^-1.
        let p_min = (-1.0f64).exp();
        let shrink = 1.0 - 2.0 * p_min;
        let loss = |diff: f64, y: usize| -> f64 {
            let p0 = 1.0 / (1.0 + (-diff).exp());
            let p = if y == 0 { p0 } else { 1.0 - p0 };
            -(shrink * p + p_min).ln()
        };
        let (la0, la1) = (loss(1.0, 0), loss(1.0, 1)); // model a on y=0 / y=1
        let (lb0, lb1) = (loss(-1.0, 0), loss(-1.0, 1)); // model b
        let w_d = {
            let wa = 0.5 * (-(la0 + la0 + la1)).exp();
            let wb = 0.5 * (-(lb0 + lb0 + lb1)).exp();
            [wa / (wa + wb), wb / (wa + wb)]
        };
        let w_s = {
            let wa = 0.5 * (-(la0 + la0)).exp();
            let wb = 0.5 * (-(lb0 + lb0)).exp();
            [wa / (wa + wb), wb / (wa + wb)]
        };
        let e_d = w_d[0] * la1 + w_d[1] * lb1;
        let e_s = w_s[0] * la1 + w_s[1] * lb1;
        let expected_loo = (e_s - e_d).abs();
        assert!(expected_loo > 1e-4, "test should exercise a nonzero error");

        let post_d =
            DiscretePosterior::from_bayes(support.clone(), &[0.5, 0.5], &d, &bound).unwrap();
        let post_s = DiscretePosterior::from_bayes(support, &[0.5, 0.5], s, &bound).unwrap();
        let check = exact_loo_check(&post_d, &post_s, probe, &bound).unwrap();
        assert!(
            (check.loo_error - expected_loo).abs() < 1e-12,
            "enumeration {} vs longhand {expected_loo}",
            check.loo_error
        );
        assert!((check.bound - 1.0 * (2.0f64.exp() - 1.0)).abs() < 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn loo_bound_holds_on_randomized_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for trial in 0..200 {
            let b = rng.random_range(0.7..1.0);
            let bound = LossBound::new(b).unwrap();
            let arch = MlpArchitecture::new(vec![2, 2], Activation::Relu, 0.0).unwrap();
            let support_size = rng.random_range(2..=5usize);
            let support: Vec<ModelParams> = (0..support_size)
                .map(|i| ModelParams::xavier_init(arch.clone(), trial * 100 + i as u64))
                .collect();
            let prior: Vec<f64> = (0..support_size).map(|_| rng.random_range(0.1..1.0)).collect();
            let n = rng.random_range(2..=6usize);
            let data: Vec<Sample> = (0..n)
                .map(|_| {
                    Sample::new(
                        vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                        rng.random_range(0..2),
                    )
                })
                .collect();
            let removed = rng.random_range(0..n);
            let mut s = data.clone();
            let probe = s.remove(removed);

            let post_d =
                DiscretePosterior::from_bayes(support.clone(), &prior, &data, &bound).unwrap();
            let post_s =
                DiscretePosterior::from_bayes(support, &prior, &s, &bound).unwrap();
            let check = exact_loo_check(&post_d, &post_s, &probe, &bound).unwrap();
            assert!(
                check.holds,
                "trial {trial}: loo {} exceeds bound {}",
                check.loo_error, check.bound
            );
        }
    }

    #[test]
    fn from_bayes_rejects_degenerate_priors() {
        let bound = LossBound::new(1.0).unwrap();
        let support = vec![bias_model(0.0, 0.0)];
        let err = DiscretePosterior::from_bayes(support.clone(), &[0.0], &[], &bound);
        assert!(matches!(err, Err(Error::Numeric(_))));
        let err = DiscretePosterior::from_bayes(support, &[-1.0], &[], &bound);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert!(DiscretePosterior::new(Vec::new(), Vec::new()).is_err());
    }

    #[test]
    fn loo_check_rejects_mismatched_supports() {
        let bound = LossBound::new(1.0).unwrap();
        let a = DiscretePosterior::new(vec![bias_model(1.0, 0.0)], vec![1.0]).unwrap();
        let b = DiscretePosterior::new(vec![bias_model(0.0, 1.0)], vec![1.0]).unwrap();
        let z = Sample::new(vec![0.0], 0);
        assert!(matches!(
            exact_loo_check(&a, &b, &z, &bound),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn audit_reports_satisfy_invariants() {
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, 0.0).unwrap();
        let bound = LossBound::default();
        let snapshots: Vec<(Vec<f64>, f64)> = (0..4)
            .map(|i| (ModelParams::xavier_init(arch.clone(), 40 + i).theta, 0.01))
            .collect();
        let set = PosteriorSampleSet::new(arch, snapshots, 0, 1).unwrap();
        let ens = EnsemblePredictor::new(set, EnsembleMode::WeightedAll).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let samples: Vec<(String, Sample)> = (0..30)
            .map(|i| {
                (
                    format!("z{i}"),
                    Sample::new(
                        vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                        rng.random_range(0..2),
                    ),
                )
            })
            .collect();
        let lambda = 0.5;
        let reports = audit_ensemble(&ens, &samples, lambda, &bound).unwrap();
        assert_eq!(reports.len(), 30);
        for r in &reports {
            assert!(r.mpl <= r.lipschitz_bound + 1e-12, "{:?}", r);
            assert!(r.mpl <= 1.0 - lambda + 1e-12);
            assert!(r.posterior > 0.0 && r.posterior < 1.0);
        }
    }

    #[test]
    fn mpl_reports_serialize_to_delimited_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.csv");
        let reports = vec![
            MplReport {
                sample_id: "train/0".into(),
                score: 0.125,
                posterior: 0.53,
                mpl: 0.03,
                lipschitz_bound: 0.03125,
            },
            MplReport {
                sample_id: "test/1".into(),
                score: -0.5,
                posterior: 0.38,
                mpl: 0.0,
                lipschitz_bound: 0.0,
            },
        ];
        write_mpl_reports(&reports, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let parsed: Vec<MplReport> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(parsed, reports);
    }
}
