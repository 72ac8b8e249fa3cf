//! Independent numeric checks for the closed-form teacher and the analytic
//! gradients.
//!
//! [`maximize_objective_numeric`] never looks at the closed form: it runs
//! entropic mirror ascent on the simplex, so agreement between the two is
//! evidence that the closed form really is the maximizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::analytic::{objective, optimal_policy};
use crate::error::{Error, Result};
use crate::grid::{kl_divergence, log_sum_exp, ScoreDistribution, ScoreGrid};
use crate::rewards::{reward_vector, RewardSpec};

/// First step size tried by the mirror ascent; halved on rejection.
pub const INITIAL_STEP: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct NumericSolution {
    pub dist: ScoreDistribution,
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out before the iterates settled.
    pub converged: bool,
}

struct Problem<'a> {
    log_ref: Vec<f64>,
    rewards: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    fn value(&self, log_pi: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((&lp, &lr), &r) in log_pi.iter().zip(&self.log_ref).zip(self.rewards) {
            let p = lp.exp();
            if p > 0.0 {
                total += p * (r - self.lambda * (lp - lr));
            }
        }
        total
    }

    fn gradient(&self, log_pi: &[f64]) -> Vec<f64> {
        log_pi
            .iter()
            .zip(&self.log_ref)
            .zip(self.rewards)
            .map(|((&lp, &lr), &r)| r - self.lambda * (lp - lr + 1.0))
            .collect()
    }
}

fn normalize_log(mut v: Vec<f64>) -> Vec<f64> {
    let lse = log_sum_exp(&v);
    for x in &mut v {
        *x -= lse;
    }
    v
}

/// Maximizes `Σ π R − λ KL(π ‖ π_ref)` by exponentiated-gradient ascent.
///
/// Starts from the uniform distribution on the reference's support. Each
/// step is backtracked until the objective does not decrease; iteration
/// stops when no coordinate moves by `tol` or more.
pub fn maximize_objective_numeric(
    pi_ref: &ScoreDistribution,
    rewards: &[f64],
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<NumericSolution> {
    if max_iters == 0 {
        return Err(Error::input("max_iters must be at least 1"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::input(format!("lambda must be > 0, got {lambda}")));
    }
    let grid = *pi_ref.grid();
    if rewards.len() != grid.len() {
        return Err(Error::input("reward vector length does not match grid"));
    }
    let support: Vec<usize> = (0..grid.len()).filter(|&i| pi_ref.prob(i) > 0.0).collect();
    if let Some(&i) = support.iter().find(|&&i| !rewards[i].is_finite()) {
        return Err(Error::input(format!("non-finite reward at level {}", grid.level(i))));
    }

    let sub_rewards: Vec<f64> = support.iter().map(|&i| rewards[i]).collect();
    let problem = Problem {
        log_ref: support.iter().map(|&i| pi_ref.prob(i).ln()).collect(),
        rewards: &sub_rewards,
        lambda,
    };

    let mut log_pi = vec![-(support.len() as f64).ln(); support.len()];
    let mut value = problem.value(&log_pi);
    let mut step = INITIAL_STEP;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        iterations += 1;
        let grad = problem.gradient(&log_pi);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = normalize_log(
                log_pi.iter().zip(&grad).map(|(lp, g)| lp + step * g).collect(),
            );
            let candidate_value = problem.value(&candidate);
            if candidate_value >= value {
                accepted = Some((candidate, candidate_value));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, candidate_value)) = accepted else {
            // No ascent direction resolvable in f64.
            converged = true;
            break;
        };
        let movement = log_pi
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a.exp() - b.exp()).abs())
            .fold(0.0, f64::max);
        log_pi = candidate;
        value = candidate_value;
        step = (2.0 * step).min(INITIAL_STEP);
        if movement < tol {
            converged = true;
            break;
        }
    }

    let mut probs = vec![0.0; grid.len()];
    for (&i, lp) in support.iter().zip(&log_pi) {
        probs[i] = lp.exp();
    }
    let dist = ScoreDistribution::from_normalized(grid, probs);
    let objective = objective(&dist, pi_ref, rewards, lambda)?;
    Ok(NumericSolution {
        dist,
        objective,
        iterations,
        converged,
    })
}

/// Central-difference gradient of `loss` at `point`.
pub fn finite_diff_grad<F>(mut loss: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::input(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut z = point.to_vec();
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let orig = z[i];
        z[i] = orig + h;
        let up = loss(&z);
        z[i] = orig - h;
        let down = loss(&z);
        z[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::domain(format!("loss is not finite around coordinate {i}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Settings for [`verify_closed_form`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub n_instances: usize,
    pub lambdas: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Largest allowed amount by which the numeric optimum may beat the closed form.
    pub gap_tolerance: f64,
    /// Largest allowed `KL(numeric ‖ closed form)`.
    pub kl_tolerance: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_instances: 1000,
            lambdas: vec![0.1, 1.0, 10.0],
            max_iters: 5000,
            tol: 1e-10,
            gap_tolerance: 1e-8,
            kl_tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_instances == 0 {
            return Err(Error::Config("verify.n_instances must be >= 1".into()));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config("verify.lambdas must be non-empty and positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("verify.max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub instance: usize,
    pub lambda: f64,
    pub s_star: f64,
    pub analytic_objective: f64,
    pub numeric_objective: f64,
    /// `analytic − numeric`; negative means the closed form was beaten.
    pub gap: f64,
    pub kl_to_analytic: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Reference distribution drawn from a symmetric Dirichlet(1).
pub fn random_reference<R: Rng + ?Sized>(grid: ScoreGrid, rng: &mut R) -> ScoreDistribution {
    let draws: Vec<f64> = (0..grid.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    let probs = draws.into_iter().map(|x| x / total).collect();
    ScoreDistribution::from_normalized(grid, probs)
}

/// Compares closed form and numeric optimum on seeded random instances; one
/// report per (instance, λ), in instance-major order.
pub fn verify_closed_form(
    config: &VerifyConfig,
    grid: ScoreGrid,
    spec: &RewardSpec,
) -> Result<Vec<OracleReport>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reports = Vec::with_capacity(config.n_instances * config.lambdas.len());
    for instance in 0..config.n_instances {
        let reference = random_reference(grid, &mut rng);
        let s_star = grid.level(rng.random_range(0..grid.len()));
        let rewards = reward_vector(&grid, s_star, spec)?;
        for &lambda in &config.lambdas {
            reports.push(check_instance(
                instance, &reference, &rewards, s_star, lambda, config,
            )?);
        }
    }
    Ok(reports)
}

fn check_instance(
    instance: usize,
    reference: &ScoreDistribution,
    rewards: &[f64],
    s_star: f64,
    lambda: f64,
    config: &VerifyConfig,
) -> Result<OracleReport> {
    let teacher = optimal_policy(reference, rewards, lambda)?;
    let analytic = objective(teacher.dist(), reference, rewards, lambda)?;
    let numeric =
        maximize_objective_numeric(reference, rewards, lambda, config.max_iters, config.tol)?;
    Ok(OracleReport {
        instance,
        lambda,
        s_star,
        analytic_objective: analytic,
        numeric_objective: numeric.objective,
        gap: analytic - numeric.objective,
        kl_to_analytic: kl_divergence(&numeric.dist, teacher.dist())?,
        iterations: numeric.iterations,
        converged: numeric.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifySummary {
    pub reports: usize,
    pub gap_violations: usize,
    pub kl_violations: usize,
    pub min_gap: f64,
    pub max_kl: f64,
    pub unconverged: usize,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.gap_violations == 0 && self.kl_violations == 0
    }
}

pub fn summarize(reports: &[OracleReport], config: &VerifyConfig) -> VerifySummary {
    VerifySummary {
        reports: reports.len(),
        gap_violations: reports.iter().filter(|r| r.gap < -config.gap_tolerance).count(),
        kl_violations: reports
            .iter()
            .filter(|r| !(r.kl_to_analytic <= config.kl_tolerance))
            .count(),
        min_gap: reports.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min),
        max_kl: reports.iter().map(|r| r.kl_to_analytic).fold(0.0, f64::max),
        unconverged: reports.iter().filter(|r| !r.converged).count(),
    }
}
