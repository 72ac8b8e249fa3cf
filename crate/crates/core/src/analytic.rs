//! KL-regularized bandit objective over the score grid and its closed-form
//! maximizer.
//!
//! For a single item with reference policy `π_ref`, per-level rewards `R` and
//! regularization strength `λ > 0`, the objective
//!
//! ```text
//! F(π) = Σ_s π(s) R(s) − λ KL(π ‖ π_ref)
//! ```
//!
//! is maximized by the Boltzmann tilt of the reference
//!
//! ```text
//! π*(s) = π_ref(s) exp(R(s)/λ) / Z,    Z = Σ_s π_ref(s) exp(R(s)/λ)
//! ```
//!
//! A parametric policy is then trained to imitate `π*` with a soft-target
//! cross-entropy, whose gradient with respect to the logits is
//! `softmax(z) − π*`.

use crate::error::{Error, Result};
use crate::grid::{kl_divergence, log_softmax, log_sum_exp, softmax, ScoreDistribution, ScoreGrid};
use crate::rewards::{reward_vector, RewardSpec};

/// Default KL strength for the analytic teacher.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Closed-form optimum of the regularized objective for one item.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherPolicy {
    dist: ScoreDistribution,
    log_partition: f64,
    lambda: f64,
    reference: ScoreDistribution,
    rewards: Vec<f64>,
    target: Option<(RewardSpec, f64)>,
}

impl TeacherPolicy {
    /// The teacher distribution `π*`.
    pub fn dist(&self) -> &ScoreDistribution {
        &self.dist
    }

    pub fn probs(&self) -> &[f64] {
        self.dist.probs()
    }

    /// `ln Z`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn reference(&self) -> &ScoreDistribution {
        &self.reference
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn grid(&self) -> &ScoreGrid {
        self.dist.grid()
    }

    /// Reward spec and target score, when built from them.
    pub fn reward_spec(&self) -> Option<&RewardSpec> {
        self.target.as_ref().map(|(spec, _)| spec)
    }

    pub fn s_star(&self) -> Option<f64> {
        self.target.map(|(_, s)| s)
    }

    /// Largest elementwise difference between the stored teacher and one
    /// recomputed from its own inputs.
    pub fn recompute_drift(&self) -> Result<f64> {
        let fresh = optimal_policy(&self.reference, &self.rewards, self.lambda)?;
        Ok(self
            .probs()
            .iter()
            .zip(fresh.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!("lambda must be finite and > 0, got {lambda}")))
    }
}

fn check_rewards(grid: &ScoreGrid, rewards: &[f64]) -> Result<()> {
    if rewards.len() != grid.len() {
        return Err(Error::input(format!(
            "{} rewards for a {}-level grid",
            rewards.len(),
            grid.len()
        )));
    }
    if let Some(bad) = rewards.iter().find(|r| r.is_nan() || **r == f64::INFINITY) {
        return Err(Error::input(format!("invalid reward {bad}")));
    }
    Ok(())
}

/// `Σ π R − λ KL(π ‖ π_ref)`.
pub fn objective(
    pi: &ScoreDistribution,
    pi_ref: &ScoreDistribution,
    rewards: &[f64],
    lambda: f64,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_rewards(pi.grid(), rewards)?;
    let kl = kl_divergence(pi, pi_ref)?;
    let expected: f64 = pi
        .probs()
        .iter()
        .zip(rewards)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, r)| p * r)
        .sum();
    Ok(expected - lambda * kl)
}

/// Closed-form maximizer of [`objective`], computed in log space.
///
/// Levels where `π_ref` is zero stay exactly zero. Rewards of `-inf` are
/// allowed as long as some level with reference mass has a finite reward.
pub fn optimal_policy(
    pi_ref: &ScoreDistribution,
    rewards: &[f64],
    lambda: f64,
) -> Result<TeacherPolicy> {
    check_lambda(lambda)?;
    let grid = *pi_ref.grid();
    check_rewards(&grid, rewards)?;

    let log_weights: Vec<f64> = pi_ref
        .probs()
        .iter()
        .zip(rewards)
        .map(|(&p, &r)| if p > 0.0 { p.ln() + r / lambda } else { f64::NEG_INFINITY })
        .collect();
    let log_partition = log_sum_exp(&log_weights);
    if !log_partition.is_finite() {
        return Err(Error::Degenerate(
            "no reference mass on a level with finite reward".into(),
        ));
    }
    let probs = log_weights.iter().map(|w| (w - log_partition).exp()).collect();

    Ok(TeacherPolicy {
        dist: ScoreDistribution::from_normalized(grid, probs),
        log_partition,
        lambda,
        reference: pi_ref.clone(),
        rewards: rewards.to_vec(),
        target: None,
    })
}

/// Teacher for target `s_star` under `spec`.
pub fn teacher_for(
    pi_ref: &ScoreDistribution,
    s_star: f64,
    spec: &RewardSpec,
    lambda: f64,
) -> Result<TeacherPolicy> {
    let rewards = reward_vector(pi_ref.grid(), s_star, spec)?;
    let mut teacher = optimal_policy(pi_ref, &rewards, lambda)?;
    teacher.target = Some((*spec, s_star));
    Ok(teacher)
}

/// `−Σ_s t(s) log softmax(z)(s)` over levels with positive target mass.
pub(crate) fn cross_entropy(target: &[f64], logits: &[f64]) -> Result<f64> {
    if target.len() != logits.len() {
        return Err(Error::input(format!(
            "{} logits for a {}-level target",
            logits.len(),
            target.len()
        )));
    }
    let log_probs = log_softmax(logits)?;
    let mut acc = 0.0;
    for (&t, &lp) in target.iter().zip(&log_probs) {
        if t > 0.0 {
            acc += t * lp;
        }
    }
    Ok(-acc)
}

/// Soft-target cross-entropy of the policy `softmax(logits)` against the teacher.
pub fn soft_ce_loss(teacher: &TeacherPolicy, logits: &[f64]) -> Result<f64> {
    cross_entropy(teacher.probs(), logits)
}

/// Gradient of [`soft_ce_loss`] with respect to the logits: `softmax(z) − π*`.
pub fn soft_ce_grad(teacher: &TeacherPolicy, logits: &[f64]) -> Result<Vec<f64>> {
    let policy = softmax(logits, *teacher.grid())?;
    Ok(policy
        .probs()
        .iter()
        .zip(teacher.probs())
        .map(|(p, t)| p - t)
        .collect())
}

/// Input row for [`teacher_batch`].
#[derive(Debug, Clone)]
pub struct TeacherItem {
    pub id: String,
    pub reference: ScoreDistribution,
    pub s_star: f64,
}

/// One teacher per item, in input order. Errors carry the failing item's id.
pub fn teacher_batch(
    items: &[TeacherItem],
    spec: &RewardSpec,
    lambda: f64,
) -> Result<Vec<TeacherPolicy>> {
    items
        .iter()
        .map(|item| {
            teacher_for(&item.reference, item.s_star, spec, lambda)
                .map_err(|e| e.for_item(&item.id))
        })
        .collect()
}

/// Batch objective: the uniform average of per-item objectives.
pub fn mean_objective(
    policies: &[ScoreDistribution],
    teachers: &[TeacherPolicy],
) -> Result<f64> {
    if policies.len() != teachers.len() || policies.is_empty() {
        return Err(Error::input("need one policy per teacher and a non-empty batch"));
    }
    let mut total = 0.0;
    for (pi, t) in policies.iter().zip(teachers) {
        total += objective(pi, t.reference(), t.rewards(), t.lambda())?;
    }
    Ok(total / policies.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::RewardKind;

    fn grid3() -> ScoreGrid {
        ScoreGrid::new(1.0, 3.0, 1.0).unwrap()
    }

    /// e^{-1} / (1 + 2 e^{-1}) and 1 / (1 + 2 e^{-1}), evaluated by hand.
    fn hand_teacher() -> [f64; 3] {
        let e = (-1f64).exp();
        let z = 1.0 + 2.0 * e;
        [e / z, 1.0 / z, e / z]
    }

    #[test]
    fn hand_teacher_values() {
        let t = hand_teacher();
        assert!((t[0] - 0.211942).abs() < 1e-6);
        assert!((t[1] - 0.576117).abs() < 1e-6);
    }

    #[test]
    fn objective_examples() {
        let g = grid3();
        let u = ScoreDistribution::uniform(g);
        assert_eq!(objective(&u, &u, &[0.0; 3], 1.0).unwrap(), 0.0);

        let peak = ScoreDistribution::one_hot(g, 1).unwrap();
        let r = [-1.0, 0.0, -1.0];
        let f = objective(&peak, &u, &r, 1.0).unwrap();
        assert!((f + 3f64.ln()).abs() < 1e-12);

        let f = objective(&u, &u, &r, 1.0).unwrap();
        assert!((f + 2.0 / 3.0).abs() < 1e-12);

        assert!(matches!(objective(&u, &u, &r, 0.0), Err(Error::Input(_))));
        let holed = ScoreDistribution::new(g, vec![0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(objective(&u, &holed, &r, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn optimal_policy_examples() {
        let g = grid3();
        let u = ScoreDistribution::uniform(g);
        let t = optimal_policy(&u, &[-1.0, 0.0, -1.0], 1.0).unwrap();
        for (p, e) in t.probs().iter().zip(hand_teacher()) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((t.log_partition() - ((1.0 + 2.0 * (-1f64).exp()) / 3.0).ln()).abs() < 1e-15);

        let reference = ScoreDistribution::new(g, vec![0.1, 0.7, 0.2]).unwrap();
        let t = optimal_policy(&reference, &[3.3; 3], 0.25).unwrap();
        for (p, q) in t.probs().iter().zip(reference.probs()) {
            assert!((p - q).abs() <= 1e-12);
        }

        let t = optimal_policy(&u, &[-1.0, 0.0, -1.0], 1e9).unwrap();
        let drift = t.probs().iter().map(|p| (p - 1.0 / 3.0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-8);
    }

    #[test]
    fn zero_mass_levels_stay_zero() {
        let g = grid3();
        let reference = ScoreDistribution::new(g, vec![0.0, 0.4, 0.6]).unwrap();
        let t = optimal_policy(&reference, &[0.0, -1.0, -2.0], 0.01).unwrap();
        assert_eq!(t.probs()[0], 0.0);
        assert!(t.probs()[1] > 0.99);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let g = grid3();
        let reference = ScoreDistribution::new(g, vec![0.0, 0.0, 1.0]).unwrap();
        let err = optimal_policy(&reference, &[0.0, 0.0, f64::NEG_INFINITY], 1.0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        let u = ScoreDistribution::uniform(g);
        assert!(matches!(optimal_policy(&u, &[0.0; 3], -1.0), Err(Error::Input(_))));
        assert!(matches!(optimal_policy(&u, &[0.0; 2], 1.0), Err(Error::Input(_))));
        assert!(optimal_policy(&u, &[0.0, f64::NAN, 0.0], 1.0).is_err());
    }

    #[test]
    fn tiny_lambda_does_not_overflow() {
        let g = ScoreGrid::default();
        let u = ScoreDistribution::uniform(g);
        let t = teacher_for(&u, 2.5, &RewardSpec::abs(1.0), 1e-9).unwrap();
        assert_eq!(t.probs()[3], 1.0);
        assert!(t.log_partition().is_finite());
    }

    #[test]
    fn soft_ce_examples() {
        let g = grid3();
        let u = ScoreDistribution::uniform(g);
        let t = optimal_policy(&u, &[-1.0, 0.0, -1.0], 1.0).unwrap();
        let loss = soft_ce_loss(&t, &[0.0; 3]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!((loss - 1.098612).abs() < 1e-6);

        let matched: Vec<f64> = t.probs().iter().map(|p| p.ln()).collect();
        let at_min = soft_ce_loss(&t, &matched).unwrap();
        assert!((at_min - t.dist().entropy()).abs() < 1e-12);

        let hot = optimal_policy(&ScoreDistribution::one_hot(g, 2).unwrap(), &[0.0; 3], 1.0).unwrap();
        let loss = soft_ce_loss(&hot, &[0.0, 0.0, 60.0]).unwrap();
        assert!(loss.abs() < 1e-20);

        assert!(matches!(soft_ce_loss(&t, &[0.0; 4]), Err(Error::Input(_))));
    }

    #[test]
    fn soft_ce_grad_examples() {
        let g = grid3();
        let u = ScoreDistribution::uniform(g);
        let t = optimal_policy(&u, &[-1.0, 0.0, -1.0], 1.0).unwrap();
        let grad = soft_ce_grad(&t, &[0.0; 3]).unwrap();
        let expected = [0.121391, -0.242784, 0.121391];
        for (a, b) in grad.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(grad.iter().sum::<f64>().abs() < 1e-12);

        let matched: Vec<f64> = t.probs().iter().map(|p| p.ln()).collect();
        let grad = soft_ce_grad(&t, &matched).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn teacher_batch_examples() {
        let g = grid3();
        let spec = RewardSpec::abs(1.0);
        assert!(teacher_batch(&[], &spec, 1.0).unwrap().is_empty());

        let item = TeacherItem {
            id: "a".into(),
            reference: ScoreDistribution::uniform(g),
            s_star: 2.0,
        };
        let direct = optimal_policy(&item.reference, &[-1.0, 0.0, -1.0], 1.0).unwrap();
        let batch = teacher_batch(&[item.clone(), item.clone()], &spec, 1.0).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch[0].probs(), direct.probs());
        assert_eq!(batch[0], batch[1]);
        assert_eq!(batch[0].s_star(), Some(2.0));
        assert_eq!(batch[0].recompute_drift().unwrap(), 0.0);

        let bad = TeacherItem {
            id: "bad".into(),
            s_star: 2.5,
            ..item
        };
        match teacher_batch(&[bad], &spec, 1.0).unwrap_err() {
            Error::Item { id, source } => {
                assert_eq!(id, "bad");
                assert!(matches!(*source, Error::Input(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mean_objective_is_average() {
        let g = grid3();
        let u = ScoreDistribution::uniform(g);
        let spec = RewardSpec::with_kind(RewardKind::Accuracy);
        let a = teacher_for(&u, 1.0, &spec, 1.0).unwrap();
        let b = teacher_for(&u, 3.0, &spec, 1.0).unwrap();
        let fa = objective(&u, &u, a.rewards(), 1.0).unwrap();
        let fb = objective(&u, &u, b.rewards(), 1.0).unwrap();
        let mean = mean_objective(&[u.clone(), u.clone()], &[a, b]).unwrap();
        assert!((mean - 0.5 * (fa + fb)).abs() < 1e-15);
    }
}
