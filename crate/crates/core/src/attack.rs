//! Empirical threshold attack: score samples by normalized ensemble loss,
//! sweep thresholds for ROC/AUC, and evaluate the fixed mean-train-loss
//! operating point.
//!
//! Convention: lower normalized loss means "more likely a member", and a
//! sample is predicted member iff its score n <= t (ties predict member).

use crate::error::{Error, Result};
use crate::net::{LossBound, Sample};
use crate::posterior::Predictor;
use serde::Serialize;

/// One scored sample: normalized loss in [0, 1] plus ground-truth membership.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub member: bool,
}

/// Scored members and nonmembers, ready for ROC analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackScoreSet {
    entries: Vec<ScoreEntry>,
}

impl AttackScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("attack score set cannot be empty".into()));
        }
        for e in &entries {
            if !e.score.is_finite() || e.score < 0.0 || e.score > 1.0 + 1e-12 {
                return Err(Error::Numeric(format!(
                    "normalized loss must lie in [0, 1], got {} for {}",
                    e.score, e.id
                )));
            }
        }
        Ok(AttackScoreSet { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn member_count(&self) -> usize {
        self.entries.iter().filter(|e| e.member).count()
    }

    pub fn nonmember_count(&self) -> usize {
        self.entries.len() - self.member_count()
    }

    /// Swaps every membership flag; AUC maps to 1 - AUC under this.
    pub fn complement(&self) -> AttackScoreSet {
        AttackScoreSet {
            entries: self
                .entries
                .iter()
                .map(|e| ScoreEntry {
                    id: e.id.clone(),
                    score: e.score,
                    member: !e.member,
                })
                .collect(),
        }
    }

    fn require_both_classes(&self) -> Result<()> {
        let members = self.member_count();
        if members == 0 || members == self.entries.len() {
            return Err(Error::Config(
                "ROC analysis needs both members and nonmembers".into(),
            ));
        }
        Ok(())
    }
}

/// Threshold-attack metrics at the chosen operating point, plus AUC over the
/// full threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub auc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub operating_threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Scores members and nonmembers by normalized prediction loss l~/B.
pub fn score_samples(
    predictor: &Predictor,
    members: &[Sample],
    nonmembers: &[Sample],
    bound: &LossBound,
) -> Result<AttackScoreSet> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Config(
            "scoring requires nonempty member and nonmember lists".into(),
        ));
    }
    let mut entries = Vec::with_capacity(members.len() + nonmembers.len());
    for (flag, label, list) in [(true, "member", members), (false, "nonmember", nonmembers)] {
        for (i, z) in list.iter().enumerate() {
            let loss = predictor.loss(z, bound)?;
            entries.push(ScoreEntry {
                id: format!("{label}/{i}"),
                score: loss / bound.b(),
                member: flag,
            });
        }
    }
    AttackScoreSet::new(entries)
}

/// AUC of "predict member iff n <= t" swept over all thresholds, computed as
/// the Mann-Whitney statistic: the fraction of (member, nonmember) pairs with
/// member score strictly lower, ties counted 1/2. Rank-based, O(n log n).
pub fn roc_auc(scores: &AttackScoreSet) -> Result<f64> {
    scores.require_both_classes()?;
    let mut order: Vec<usize> = (0..scores.entries.len()).collect();
    order.sort_by(|&a, &b| {
        scores.entries[a]
            .score
            .partial_cmp(&scores.entries[b].score)
            .expect("scores validated finite")
    });

    // Average ranks over tie groups (1-based).
    let n = order.len();
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n
            && scores.entries[order[j + 1]].score == scores.entries[order[i]].score
        {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }

    let n_members = scores.member_count() as f64;
    let n_nonmembers = scores.nonmember_count() as f64;
    let member_rank_sum: f64 = scores
        .entries
        .iter()
        .zip(&ranks)
        .filter(|(e, _)| e.member)
        .map(|(_, r)| r)
        .sum();
    // Pairs where the member scores higher (ties 1/2); members-lower AUC is
    // the complement.
    let u_member_higher = member_rank_sum - n_members * (n_members + 1.0) / 2.0;
    Ok(1.0 - u_member_higher / (n_members * n_nonmembers))
}

/// Confusion matrix and metrics for "predict member iff n <= threshold",
/// with the member class positive. F1 reports 0 when precision + recall = 0.
pub fn fixed_threshold_attack(scores: &AttackScoreSet, threshold: f64) -> Result<AttackReport> {
    if !threshold.is_finite() {
        return Err(Error::Config(format!("threshold must be finite, got {threshold}")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for e in &scores.entries {
        let predicted_member = e.score <= threshold;
        match (predicted_member, e.member) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = scores.entries.len() as f64;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(AttackReport {
        auc: roc_auc(scores)?,
        f1,
        accuracy: (tp + tn) as f64 / total,
        operating_threshold: threshold,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// The attacker's operating threshold: mean normalized loss over the
/// training samples.
pub fn mean_train_loss_threshold(
    predictor: &Predictor,
    train: &[Sample],
    bound: &LossBound,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Config("threshold needs at least one training sample".into()));
    }
    let mut total = 0.0;
    for z in train {
        total += predictor.loss(z, bound)?;
    }
    Ok(total / (train.len() as f64 * bound.b()))
}

/// ROC curve as (FPR, TPR) points, one per distinct threshold, starting at
/// (0, 0) and ending at (1, 1). Exportable for external plotting.
pub fn roc_points(scores: &AttackScoreSet) -> Result<Vec<(f64, f64)>> {
    scores.require_both_classes()?;
    let mut thresholds: Vec<f64> = scores.entries.iter().map(|e| e.score).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("scores validated finite"));
    thresholds.dedup();
    let n_members = scores.member_count() as f64;
    let n_nonmembers = scores.nonmember_count() as f64;
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = scores
            .entries
            .iter()
            .filter(|e| e.member && e.score <= t)
            .count() as f64;
        let fp = scores
            .entries
            .iter()
            .filter(|e| !e.member && e.score <= t)
            .count() as f64;
        points.push((fp / n_nonmembers, tp / n_members));
    }
    if *points.last().expect("nonempty") != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, MlpArchitecture, ModelParams};
    use crate::posterior::{EnsembleMode, EnsemblePredictor, PosteriorSampleSet};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn set_from(members: &[f64], nonmembers: &[f64]) -> AttackScoreSet {
        let mut entries = Vec::new();
        for (i, &s) in members.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("member/{i}"),
                score: s,
                member: true,
            });
        }
        for (i, &s) in nonmembers.iter().enumerate() {
            entries.push(ScoreEntry {
                id: format!("nonmember/{i}"),
                score: s,
                member: false,
            });
        }
        AttackScoreSet::new(entries).unwrap()
    }

    /// O(n_m * n_u) pairwise AUC: fraction of pairs with member score lower,
    /// ties counted 1/2.
    fn brute_force_auc(scores: &AttackScoreSet) -> f64 {
        let members: Vec<f64> = scores
            .entries()
            .iter()
            .filter(|e| e.member)
            .map(|e| e.score)
            .collect();
        let nonmembers: Vec<f64> = scores
            .entries()
            .iter()
            .filter(|e| !e.member)
            .map(|e| e.score)
            .collect();
        let mut total = 0.0;
        for &m in &members {
            for &u in &nonmembers {
                total += if m < u {
                    1.0
                } else if m == u {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (members.len() * nonmembers.len()) as f64
    }

    #[test]
    fn auc_perfect_separation() {
        let s = set_from(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(roc_auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let s = set_from(&[0.4, 0.4, 0.4], &[0.4, 0.4]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn auc_hand_counted_example() {
        // Pairs: (0.1 vs 0.5) member lower, (0.1 vs 0.9) lower, (0.7 vs 0.5)
        // higher, (0.7 vs 0.9) lower -> 3/4.
        let s = set_from(&[0.1, 0.7], &[0.5, 0.9]);
        assert_eq!(roc_auc(&s).unwrap(), 0.75);
    }

    #[test]
    fn auc_rejects_single_class() {
        let entries = vec![ScoreEntry {
            id: "member/0".into(),
            score: 0.4,
            member: true,
        }];
        let s = AttackScoreSet::new(entries).unwrap();
        assert!(matches!(roc_auc(&s), Err(Error::Config(_))));
    }

    #[test]
    fn score_set_rejects_out_of_range() {
        let entries = vec![ScoreEntry {
            id: "member/0".into(),
            score: 1.5,
            member: true,
        }];
        assert!(matches!(AttackScoreSet::new(entries), Err(Error::Numeric(_))));
        assert!(AttackScoreSet::new(Vec::new()).is_err());
    }

    #[test]
    fn auc_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for trial in 0..40 {
            let n_m = rng.random_range(1..40usize);
            let n_u = rng.random_range(1..40usize);
            // Coarse grid forces plenty of ties.
            let members: Vec<f64> = (0..n_m)
                .map(|_| rng.random_range(0..20) as f64 / 20.0)
                .collect();
            let nonmembers: Vec<f64> = (0..n_u)
                .map(|_| rng.random_range(0..20) as f64 / 20.0)
                .collect();
            let s = set_from(&members, &nonmembers);
            let fast = roc_auc(&s).unwrap();
            let slow = brute_force_auc(&s);
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: rank {fast} vs pairwise {slow}"
            );
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transforms() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let members: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let nonmembers: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let base = roc_auc(&set_from(&members, &nonmembers)).unwrap();

        let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
        let auc_sq = roc_auc(&set_from(&sq(&members), &sq(&nonmembers))).unwrap();
        assert!((base - auc_sq).abs() < 1e-12);

        // 2n+1 leaves [0,1]; rescale into range first.
        let affine = |v: &[f64]| v.iter().map(|x| (2.0 * x + 1.0) / 3.0).collect::<Vec<_>>();
        let auc_affine = roc_auc(&set_from(&affine(&members), &affine(&nonmembers))).unwrap();
        assert!((base - auc_affine).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_symmetry() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let members: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let nonmembers: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let s = set_from(&members, &nonmembers);
        let auc = roc_auc(&s).unwrap();
        let flipped = roc_auc(&s.complement()).unwrap();
        assert!((auc + flipped - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_threshold_hand_confusion_matrix() {
        // Members {0.1, 0.3}, nonmembers {0.5, 0.15}, threshold 0.2:
        // TP = 1 (0.1), FN = 1 (0.3), FP = 1 (0.15), TN = 1 (0.5).
        let s = set_from(&[0.1, 0.3], &[0.5, 0.15]);
        let report = fixed_threshold_attack(&s, 0.2).unwrap();
        assert_eq!((report.tp, report.fn_, report.fp, report.tn), (1, 1, 1, 1));
        assert_eq!(report.accuracy, 0.5);
        assert_eq!(report.f1, 0.5);
        assert_eq!(report.operating_threshold, 0.2);
    }

    #[test]
    fn threshold_above_max_predicts_all_members() {
        let s = set_from(&[0.1, 0.3, 0.2], &[0.5, 0.15]);
        let report = fixed_threshold_attack(&s, 1.0).unwrap();
        assert_eq!(report.fn_, 0);
        assert_eq!(report.tn, 0);
        // Recall 1; accuracy equals the member fraction.
        assert_eq!(report.accuracy, 3.0 / 5.0);
    }

    #[test]
    fn threshold_below_min_gives_zero_f1() {
        let s = set_from(&[0.1, 0.3], &[0.5, 0.15]);
        let report = fixed_threshold_attack(&s, 0.05).unwrap();
        assert_eq!(report.tp, 0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn ties_at_threshold_predict_member() {
        let s = set_from(&[0.2], &[0.3]);
        let report = fixed_threshold_attack(&s, 0.2).unwrap();
        assert_eq!(report.tp, 1);
    }

    #[test]
    fn counts_partition_the_classes() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..20 {
            let members: Vec<f64> = (0..rng.random_range(1..30usize))
                .map(|_| rng.random::<f64>())
                .collect();
            let nonmembers: Vec<f64> = (0..rng.random_range(1..30usize))
                .map(|_| rng.random::<f64>())
                .collect();
            let s = set_from(&members, &nonmembers);
            let report = fixed_threshold_attack(&s, rng.random::<f64>()).unwrap();
            assert_eq!(report.tp + report.fn_, members.len());
            assert_eq!(report.fp + report.tn, nonmembers.len());
        }
    }

    #[test]
    fn mean_threshold_examples() {
        let arch = MlpArchitecture::new(vec![2, 2, 2], Activation::Tanh, 0.0).unwrap();
        let predictor = Predictor::Single(ModelParams::zeros(arch));
        let bound = LossBound::default();
        // Uniform prediction: every loss is -ln(0.5) (clamp invisible there),
        // so the threshold is ln(2)/B on any batch.
        let train = vec![Sample::new(vec![0.5, 0.5], 0), Sample::new(vec![1.0, 0.0], 1)];
        let t = mean_train_loss_threshold(&predictor, &train, &bound).unwrap();
        assert!((t - 2.0f64.ln() / 5.0).abs() < 1e-12);
        assert!(mean_train_loss_threshold(&predictor, &[], &bound).is_err());
        // Direct arithmetic: losses {0.2, 0.4} at B = 1 average to 0.3.
        assert!(((0.2 + 0.4) / 2.0 / 1.0 - 0.3f64).abs() < 1e-15);
    }

    #[test]
    fn scoring_uses_the_ensemble_prediction() {
        // A point-mass ensemble must score identically to the single model.
        let arch = MlpArchitecture::new(vec![2, 3, 2], Activation::Tanh, 0.0).unwrap();
        let params = ModelParams::xavier_init(arch.clone(), 12);
        let bound = LossBound::default();
        let members = vec![Sample::new(vec![0.5, -0.5], 0)];
        let nonmembers = vec![Sample::new(vec![-1.0, 1.0], 1)];

        let single = Predictor::Single(params.clone());
        let set = PosteriorSampleSet::new(arch, vec![(params.theta, 0.01)], 0, 1).unwrap();
        let ens = Predictor::Ensemble(
            EnsemblePredictor::new(set, EnsembleMode::WeightedAll).unwrap(),
        );
        let a = score_samples(&single, &members, &nonmembers, &bound).unwrap();
        let b = score_samples(&ens, &members, &nonmembers, &bound).unwrap();
        for (x, y) in a.entries().iter().zip(b.entries()) {
            assert!((x.score - y.score).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_losses_carry_no_signal() {
        let s = set_from(&[1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(roc_auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn roc_points_are_monotone_and_anchored() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let members: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let nonmembers: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let s = set_from(&members, &nonmembers);
        let points = roc_points(&s).unwrap();
        assert_eq!(points[0], (0.0, 0.0));
        assert_eq!(*points.last().unwrap(), (1.0, 1.0));
        for w in points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }
}
