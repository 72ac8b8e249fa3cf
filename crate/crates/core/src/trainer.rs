//! Linear score policy and the three training procedures: hard-label
//! cross-entropy (SFT), analytic soft-target imitation (ASO) and
//! group-relative policy optimization (GRPO) on the one-step bandit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::{cross_entropy, soft_ce_grad, soft_ce_loss, teacher_for, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::grid::{
    argmax_score, expected_score, kl_divergence, log_softmax, softmax, ScoreDistribution,
    ScoreGrid,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rewards::{reward_vector, RewardSpec};

/// Learning rate used for full-size vision-language backbones. Far too small
/// for the linear scorer; kept for reference only.
pub const BACKBONE_LEARNING_RATE: f64 = 5e-6;

pub const DEFAULT_FEATURE_DIM: usize = 8;

/// Logits `W φ + b` over the levels of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct LinearScorer {
    grid: ScoreGrid,
    feature_dim: usize,
    /// Row-major `levels × feature_dim` followed by `levels` biases.
    params: Vec<f64>,
}

/// On-disk form of a [`LinearScorer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    grid: ScoreGrid,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl TryFrom<Checkpoint> for LinearScorer {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        LinearScorer::from_parts(c.grid, c.feature_dim, c.weights, c.bias)
    }
}

impl From<LinearScorer> for Checkpoint {
    fn from(m: LinearScorer) -> Self {
        let split = m.grid.len() * m.feature_dim;
        Checkpoint {
            grid: m.grid,
            feature_dim: m.feature_dim,
            weights: m.params[..split].to_vec(),
            bias: m.params[split..].to_vec(),
        }
    }
}

impl LinearScorer {
    pub fn zeros(grid: ScoreGrid, feature_dim: usize) -> Self {
        LinearScorer {
            grid,
            feature_dim,
            params: vec![0.0; grid.len() * (feature_dim + 1)],
        }
    }

    pub fn from_parts(
        grid: ScoreGrid,
        feature_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::input("feature_dim must be >= 1"));
        }
        if weights.len() != grid.len() * feature_dim || bias.len() != grid.len() {
            return Err(Error::input(format!(
                "expected {}x{feature_dim} weights and {} biases, got {} and {}",
                grid.len(),
                grid.len(),
                weights.len(),
                bias.len()
            )));
        }
        let mut params = weights;
        params.extend(bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::input("non-finite model parameter"));
        }
        Ok(LinearScorer {
            grid,
            feature_dim,
            params,
        })
    }

    pub fn grid(&self) -> &ScoreGrid {
        &self.grid
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.grid.len() * self.feature_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.grid.len() * self.feature_dim..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn weight_mut(&mut self, level: usize, feature: usize) -> &mut f64 {
        &mut self.params[level * self.feature_dim + feature]
    }

    pub fn bias_mut(&mut self, level: usize) -> &mut f64 {
        let offset = self.grid.len() * self.feature_dim;
        &mut self.params[offset + level]
    }

    fn check_features(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::input(format!(
                "expected {} features, got {}",
                self.feature_dim,
                features.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("non-finite feature value"));
        }
        Ok(())
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let bias = self.bias();
        Ok(self
            .weights()
            .chunks_exact(self.feature_dim)
            .zip(bias)
            .map(|(row, b)| row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect())
    }

    pub fn policy(&self, features: &[f64]) -> Result<ScoreDistribution> {
        softmax(&self.forward(features)?, self.grid)
    }

    /// Adds `scale · ∂(logit_grad · z)/∂θ` into `out`.
    fn accumulate_grad(&self, out: &mut [f64], logit_grad: &[f64], features: &[f64], scale: f64) {
        let split = self.grid.len() * self.feature_dim;
        let (w, b) = out.split_at_mut(split);
        for (k, &g) in logit_grad.iter().enumerate() {
            let g = g * scale;
            for (wk, x) in w[k * self.feature_dim..(k + 1) * self.feature_dim]
                .iter_mut()
                .zip(features)
            {
                *wk += g * x;
            }
            b[k] += g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    #[default]
    Expected,
    Argmax,
}

pub fn predict(model: &LinearScorer, features: &[f64], mode: PredictMode) -> Result<f64> {
    let dist = model.policy(features)?;
    Ok(match mode {
        PredictMode::Expected => expected_score(&dist),
        PredictMode::Argmax => argmax_score(&dist),
    })
}

/// Reference policy `π_ref` used by ASO and GRPO.
#[derive(Debug, Clone)]
pub enum Reference {
    Uniform(ScoreGrid),
    /// A frozen copy of a scorer.
    Frozen(LinearScorer),
}

impl Reference {
    pub fn distribution(&self, features: &[f64]) -> Result<ScoreDistribution> {
        match self {
            Reference::Uniform(grid) => Ok(ScoreDistribution::uniform(*grid)),
            Reference::Frozen(model) => model.policy(features),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Snapshot of the model at the start of training.
    #[default]
    Snapshot,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sft,
    #[default]
    Aso,
    Grpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_coeff: f64,
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_coeff: 0.1,
            std_floor: 1e-6,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config("grpo.group_size must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config("grpo.clip_epsilon must lie in (0, 1)".into()));
        }
        if !(self.std_floor > 0.0) {
            return Err(Error::Config("grpo.std_floor must be > 0".into()));
        }
        if !(self.kl_coeff.is_finite() && self.kl_coeff >= 0.0) {
            return Err(Error::Config("grpo.kl_coeff must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub reference: ReferenceMode,
    pub predict_mode: PredictMode,
    /// Analytic teacher KL strength.
    #[serde(skip)]
    pub lambda: f64,
    #[serde(skip)]
    pub grpo: GrpoConfig,
    #[serde(skip)]
    pub reward: RewardSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Aso,
            learning_rate: 1e-2,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerKind::AdaptiveMoments,
            reference: ReferenceMode::Snapshot,
            predict_mode: PredictMode::Expected,
            lambda: DEFAULT_LAMBDA,
            grpo: GrpoConfig::default(),
            reward: RewardSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config("aso.lambda must be > 0".into()));
        }
        self.grpo.validate()?;
        self.reward.validate()
    }

    pub fn optimizer_for(&self, model: &LinearScorer) -> Result<Optimizer> {
        Optimizer::new(self.optimizer, self.learning_rate, model.params.len())
    }
}

/// One training item: features and an on-grid target score.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    pub target: f64,
}

/// Hard-label cross-entropy `−log softmax(z)(gt)`.
pub fn sft_loss(grid: &ScoreGrid, gt: f64, logits: &[f64]) -> Result<f64> {
    let idx = grid.require_index(gt)?;
    if logits.len() != grid.len() {
        return Err(Error::input("logit count does not match grid"));
    }
    Ok(-log_softmax(logits)?[idx])
}

/// Gradient of [`sft_loss`] with respect to the logits.
pub fn sft_logit_grad(grid: &ScoreGrid, gt: f64, logits: &[f64]) -> Result<Vec<f64>> {
    let idx = grid.require_index(gt)?;
    let mut grad = softmax(logits, *grid)?.into_probs();
    grad[idx] -= 1.0;
    Ok(grad)
}

/// Soft-target gradient for one item against its analytic teacher.
pub fn aso_logit_grad(
    model: &LinearScorer,
    example: &Example,
    reference: &Reference,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let logits = model.forward(&example.features)?;
    let pi_ref = reference.distribution(&example.features)?;
    let teacher = teacher_for(&pi_ref, example.target, &config.reward, config.lambda)?;
    soft_ce_grad(&teacher, &logits)
}

fn check_batch(batch: &[Example]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::input("empty batch"))
    } else {
        Ok(())
    }
}

/// Batch-mean hard-label step. Returns the pre-update mean loss.
pub fn sft_step(
    model: &mut LinearScorer,
    optimizer: &mut Optimizer,
    batch: &[Example],
) -> Result<f64> {
    check_batch(batch)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for ex in batch {
        let step = || -> Result<(f64, Vec<f64>)> {
            let logits = model.forward(&ex.features)?;
            Ok((
                sft_loss(&model.grid, ex.target, &logits)?,
                sft_logit_grad(&model.grid, ex.target, &logits)?,
            ))
        };
        let (l, g) = step().map_err(|e| e.for_item(&ex.id))?;
        loss += l;
        model.accumulate_grad(&mut grad, &g, &ex.features, scale);
    }
    optimizer.step(&mut model.params, &grad)?;
    Ok(loss * scale)
}

/// Batch-mean soft-target step toward each item's analytic teacher. Uses no
/// randomness. Returns the pre-update mean loss.
pub fn aso_step(
    model: &mut LinearScorer,
    optimizer: &mut Optimizer,
    batch: &[Example],
    reference: &Reference,
    config: &TrainConfig,
) -> Result<f64> {
    check_batch(batch)?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for ex in batch {
        let step = || -> Result<(f64, Vec<f64>)> {
            let logits = model.forward(&ex.features)?;
            let pi_ref = reference.distribution(&ex.features)?;
            let teacher = teacher_for(&pi_ref, ex.target, &config.reward, config.lambda)?;
            Ok((soft_ce_loss(&teacher, &logits)?, soft_ce_grad(&teacher, &logits)?))
        };
        let (l, g) = step().map_err(|e| e.for_item(&ex.id))?;
        loss += l;
        model.accumulate_grad(&mut grad, &g, &ex.features, scale);
    }
    optimizer.step(&mut model.params, &grad)?;
    Ok(loss * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GrpoStats {
    /// Pre-update mean of `−surrogate + kl_coeff · KL`.
    pub loss: f64,
    /// Mean sampled reward.
    pub mean_reward: f64,
    /// Groups whose rewards were all (numerically) equal.
    pub flat_groups: usize,
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Group-standardized advantages; all zero when the group's reward spread is
/// below `std_floor`.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    if std < std_floor {
        return vec![0.0; rewards.len()];
    }
    let denom = std.max(std_floor);
    rewards.iter().map(|r| (r - mean) / denom).collect()
}

/// Gradient of `KL(softmax(z) ‖ q)` with respect to `z`.
fn kl_logit_grad(policy: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut kl = 0.0;
    let mut terms = Vec::with_capacity(policy.len());
    for (&p, &q) in policy.iter().zip(reference) {
        if p == 0.0 {
            terms.push(0.0);
            continue;
        }
        if q == 0.0 {
            return Err(Error::domain("policy has mass where the reference has none"));
        }
        let l = p.ln() - q.ln();
        kl += p * l;
        terms.push(l);
    }
    Ok((kl, policy.iter().zip(terms).map(|(p, l)| p * (l - kl)).collect()))
}

/// One GRPO update on the batch mean. For each item a group of scores is
/// sampled from the current policy (which is also the sampling-time policy
/// for the probability ratio, since there is a single inner epoch).
pub fn grpo_step<R: Rng + ?Sized>(
    model: &mut LinearScorer,
    optimizer: &mut Optimizer,
    batch: &[Example],
    reference: &Reference,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<GrpoStats> {
    check_batch(batch)?;
    let grpo = &config.grpo;
    let grid = model.grid;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut stats = GrpoStats::default();

    for ex in batch {
        let mut item = || -> Result<(f64, f64, bool, Vec<f64>)> {
            let logits = model.forward(&ex.features)?;
            let policy = softmax(&logits, grid)?.into_probs();
            let sampling = policy.clone();
            let samples: Vec<usize> =
                (0..grpo.group_size).map(|_| sample_index(&sampling, rng)).collect();
            let rewards = samples
                .iter()
                .map(|&a| config.reward.evaluate(&grid, grid.level(a), ex.target))
                .collect::<Result<Vec<f64>>>()?;
            let advantages = group_advantages(&rewards, grpo.std_floor);
            let flat = advantages.iter().all(|a| *a == 0.0);

            let g = grpo.group_size as f64;
            let mut logit_grad = vec![0.0; grid.len()];
            let mut surrogate = 0.0;
            for (&a, &adv) in samples.iter().zip(&advantages) {
                let ratio = policy[a] / sampling[a];
                let clipped = ratio.clamp(1.0 - grpo.clip_epsilon, 1.0 + grpo.clip_epsilon);
                let (unclipped_term, clipped_term) = (ratio * adv, clipped * adv);
                surrogate += unclipped_term.min(clipped_term);
                if unclipped_term <= clipped_term && adv != 0.0 {
                    // d(ratio · A)/dz = A · ratio · (e_a − p); descend on −surrogate.
                    for (k, gk) in logit_grad.iter_mut().enumerate() {
                        let indicator = if k == a { 1.0 } else { 0.0 };
                        *gk -= adv * ratio * (indicator - policy[k]) / g;
                    }
                }
            }
            let pi_ref = reference.distribution(&ex.features)?;
            let (kl, kl_grad) = kl_logit_grad(&policy, pi_ref.probs())?;
            for (gk, kg) in logit_grad.iter_mut().zip(kl_grad) {
                *gk += grpo.kl_coeff * kg;
            }
            let loss = -surrogate / g + grpo.kl_coeff * kl;
            let mean_reward = rewards.iter().sum::<f64>() / g;
            Ok((loss, mean_reward, flat, logit_grad))
        };
        let (loss, reward, flat, logit_grad) = item().map_err(|e| e.for_item(&ex.id))?;
        stats.loss += loss * scale;
        stats.mean_reward += reward * scale;
        stats.flat_groups += flat as usize;
        model.accumulate_grad(&mut grad, &logit_grad, &ex.features, scale);
    }
    optimizer.step(&mut model.params, &grad)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

/// Expected reward and `KL(π_θ ‖ π_ref)` averaged over `data`.
pub fn policy_summary(
    model: &LinearScorer,
    data: &[Example],
    reference: &Reference,
    reward: &RewardSpec,
) -> Result<(f64, f64)> {
    let mut reward_total = 0.0;
    let mut kl_total = 0.0;
    for ex in data {
        let policy = model.policy(&ex.features)?;
        let rewards = reward_vector(&model.grid, ex.target, reward)?;
        reward_total += policy.probs().iter().zip(&rewards).map(|(p, r)| p * r).sum::<f64>();
        kl_total += kl_divergence(&policy, &reference.distribution(&ex.features)?)?;
    }
    let n = data.len() as f64;
    Ok((reward_total / n, kl_total / n))
}

/// Trains `initial` (or a zero model) on `dataset`.
///
/// For ASO and GRPO the reference is the model as it stands before the first
/// update, unless `config.reference` asks for a uniform one.
pub fn train(
    dataset: &[Example],
    config: &TrainConfig,
    grid: ScoreGrid,
    initial: Option<LinearScorer>,
) -> Result<(LinearScorer, TrainHistory)> {
    config.validate()?;
    let Some(first) = dataset.first() else {
        return Err(Error::input("empty training set"));
    };
    let feature_dim = first.features.len();
    let mut model = match initial {
        Some(m) => {
            if m.grid != grid || m.feature_dim != feature_dim {
                return Err(Error::input("initial model does not match grid/feature dimension"));
            }
            m
        }
        None => LinearScorer::zeros(grid, feature_dim),
    };
    for ex in dataset {
        model.check_features(&ex.features).map_err(|e| e.for_item(&ex.id))?;
        grid.require_index(ex.target).map_err(|e| e.for_item(&ex.id))?;
    }

    let reference = match config.reference {
        ReferenceMode::Snapshot => Reference::Frozen(model.clone()),
        ReferenceMode::Uniform => Reference::Uniform(grid),
    };
    let mut optimizer = config.optimizer_for(&model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let loss = match config.method {
                Method::Sft => sft_step(&mut model, &mut optimizer, &batch)?,
                Method::Aso => aso_step(&mut model, &mut optimizer, &batch, &reference, config)?,
                Method::Grpo => {
                    grpo_step(&mut model, &mut optimizer, &batch, &reference, config, &mut rng)?
                        .loss
                }
            };
            loss_total += loss * chunk.len() as f64;
        }
        let (mean_reward, mean_kl) = policy_summary(&model, dataset, &reference, &config.reward)?;
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            loss: loss_total / dataset.len() as f64,
            mean_reward,
            mean_kl,
        });
    }
    Ok((model, history))
}

/// `−Σ t log softmax(z)` for an arbitrary target distribution.
pub fn soft_target_loss(target: &ScoreDistribution, logits: &[f64]) -> Result<f64> {
    cross_entropy(target.probs(), logits)
}

/// Gradient of [`soft_target_loss`] with respect to the logits.
pub fn soft_target_grad(target: &ScoreDistribution, logits: &[f64]) -> Result<Vec<f64>> {
    if target.probs().len() != logits.len() {
        return Err(Error::input(format!(
            "{} logits for a {}-level target",
            logits.len(),
            target.probs().len()
        )));
    }
    let policy = softmax(logits, *target.grid())?;
    Ok(policy.probs().iter().zip(target.probs()).map(|(p, t)| p - t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::finite_diff_grad;

    fn grid3() -> ScoreGrid {
        ScoreGrid::new(1.0, 3.0, 1.0).unwrap()
    }

    fn model_with(seed: u64, grid: ScoreGrid, d: usize) -> LinearScorer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = LinearScorer::zeros(grid, d);
        for p in &mut m.params {
            *p = rng.random_range(-1.0..1.0);
        }
        m
    }

    fn item(id: &str, features: Vec<f64>, target: f64) -> Example {
        Example {
            id: id.into(),
            features,
            target,
        }
    }

    #[test]
    fn forward_examples() {
        let g = grid3();
        let zero = LinearScorer::zeros(g, 2);
        assert_eq!(zero.forward(&[0.3, -1.0]).unwrap(), vec![0.0; 3]);
        let u = zero.policy(&[0.3, -1.0]).unwrap();
        assert!(u.probs().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));

        let m = LinearScorer::from_parts(g, 1, vec![0.0, 1.0, 0.0], vec![0.0; 3]).unwrap();
        assert_eq!(m.forward(&[1.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(m.forward(&[1.0]).unwrap(), m.forward(&[1.0]).unwrap());
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Input(_))));
    }

    #[test]
    fn checkpoint_json_layout() {
        let g = grid3();
        let m = LinearScorer::from_parts(g, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, 0.25, 0.125])
            .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"grid":{"min":1.0,"max":3.0,"step":1.0},"feature_dim":2,"weights":[1.0,2.0,3.0,4.0,5.0,6.0],"bias":[0.5,0.25,0.125]}"#
        );
        let back: LinearScorer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<LinearScorer>(
            r#"{"grid":{"min":1.0,"max":3.0,"step":1.0},"feature_dim":2,"weights":[1.0],"bias":[0.5,0.25,0.125]}"#
        )
        .is_err());
    }

    #[test]
    fn predict_examples() {
        let g = ScoreGrid::default();
        let zero = LinearScorer::zeros(g, 3);
        assert_eq!(predict(&zero, &[1.0, 2.0, 3.0], PredictMode::Argmax).unwrap(), 1.0);
        assert!((predict(&zero, &[1.0, 2.0, 3.0], PredictMode::Expected).unwrap() - 3.0).abs() < 1e-12);

        let mut peaked = LinearScorer::zeros(g, 3);
        *peaked.bias_mut(6) = 60.0;
        let a = predict(&peaked, &[0.0; 3], PredictMode::Argmax).unwrap();
        let e = predict(&peaked, &[0.0; 3], PredictMode::Expected).unwrap();
        assert_eq!(a, 4.0);
        assert!((e - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sft_loss_examples() {
        let g = ScoreGrid::default();
        assert!((sft_loss(&g, 3.0, &[0.0; 9]).unwrap() - 9f64.ln()).abs() < 1e-12);
        let mut z = vec![0.0; 9];
        z[4] = 50.0;
        assert!(sft_loss(&g, 3.0, &z).unwrap() <= 1e-20);
        assert!(sft_loss(&g, 3.2, &z).is_err());
    }

    #[test]
    fn sft_equals_one_hot_soft_ce_bitwise() {
        let g = ScoreGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let z: Vec<f64> = (0..9).map(|_| rng.random_range(-8.0..8.0)).collect();
            let idx = rng.random_range(0..9);
            let hot = ScoreDistribution::one_hot(g, idx).unwrap();
            let teacher = crate::analytic::optimal_policy(&hot, &[0.0; 9], 1.0).unwrap();
            assert_eq!(teacher.probs(), hot.probs());
            let soft = soft_ce_loss(&teacher, &z).unwrap();
            let hard = sft_loss(&g, g.level(idx), &z).unwrap();
            assert_eq!(soft.to_bits(), hard.to_bits());
        }
    }

    #[test]
    fn sft_gradient_matches_finite_differences() {
        let g = ScoreGrid::default();
        let z: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let analytic = sft_logit_grad(&g, 2.5, &z).unwrap();
        let numeric = finite_diff_grad(|z| sft_loss(&g, 2.5, z).unwrap(), &z, 1e-5).unwrap();
        for (a, n) in analytic.iter().zip(numeric) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn aso_step_at_teacher_is_stationary() {
        let g = grid3();
        let model = model_with(1, g, 2);
        let config = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            lambda: 1e12,
            ..Default::default()
        };
        // With λ this large the teacher equals the frozen snapshot.
        let reference = Reference::Frozen(model.clone());
        let batch = vec![item("a", vec![0.5, -0.3], 2.0), item("b", vec![-1.0, 0.2], 1.0)];
        let mut updated = model.clone();
        let mut opt = config.optimizer_for(&updated).unwrap();
        aso_step(&mut updated, &mut opt, &batch, &reference, &config).unwrap();
        for (a, b) in updated.params().iter().zip(model.params()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn aso_matches_sft_as_lambda_vanishes() {
        let g = ScoreGrid::default();
        let model = model_with(2, g, 4);
        let config = TrainConfig {
            lambda: 1e-6,
            ..Default::default()
        };
        let reference = Reference::Frozen(model_with(3, g, 4));
        let ex = item("x", vec![0.1, 0.4, -0.2, 1.0], 3.5);
        let aso = aso_logit_grad(&model, &ex, &reference, &config).unwrap();
        let sft = sft_logit_grad(&g, 3.5, &model.forward(&ex.features).unwrap()).unwrap();
        for (a, s) in aso.iter().zip(&sft) {
            assert!((a - s).abs() <= 1e-9);
        }
    }

    #[test]
    fn duplicate_items_match_single_item_update() {
        let g = grid3();
        let model = model_with(4, g, 2);
        let config = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        let reference = Reference::Uniform(g);
        let ex = item("a", vec![0.5, 1.5], 3.0);
        let mut one = model.clone();
        let mut opt = config.optimizer_for(&one).unwrap();
        aso_step(&mut one, &mut opt, std::slice::from_ref(&ex), &reference, &config).unwrap();
        let mut two = model.clone();
        let mut opt = config.optimizer_for(&two).unwrap();
        aso_step(&mut two, &mut opt, &[ex.clone(), ex], &reference, &config).unwrap();
        for (a, b) in one.params().iter().zip(two.params()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn advantages() {
        assert_eq!(group_advantages(&[1.0; 4], 1e-6), vec![0.0; 4]);
        let a = group_advantages(&[0.0, 2.0], 1e-6);
        assert_eq!(a, vec![-1.0, 1.0]);
        let a = group_advantages(&[1.0, 2.0, 3.0, 6.0], 1e-6);
        assert!(a.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn grpo_degenerate_group_without_kl_leaves_model_unchanged() {
        let g = grid3();
        let mut model = LinearScorer::zeros(g, 1);
        *model.bias_mut(1) = 80.0; // effectively deterministic policy
        let config = TrainConfig {
            method: Method::Grpo,
            grpo: GrpoConfig {
                kl_coeff: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let batch = vec![item("a", vec![1.0], 3.0)];
        let before = model.clone();
        let mut opt = config.optimizer_for(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stats =
            grpo_step(&mut model, &mut opt, &batch, &Reference::Uniform(g), &config, &mut rng)
                .unwrap();
        assert_eq!(stats.flat_groups, 1);
        assert_eq!(model, before);

        // With a KL term the same flat group still moves the model toward the reference.
        let config = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            grpo: GrpoConfig::default(),
            ..config
        };
        let mut opt = config.optimizer_for(&model).unwrap();
        let mut peaked = LinearScorer::zeros(g, 1);
        *peaked.bias_mut(1) = 5.0;
        let reference = Reference::Uniform(g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        grpo_step(&mut peaked, &mut opt, &batch, &reference, &config, &mut rng).unwrap();
        assert!(peaked.bias()[1] < 5.0);
    }

    #[test]
    fn grpo_gradient_matches_finite_differences_of_surrogate() {
        // With all samples fixed, the per-item loss is
        //   −(1/G) Σ A_i p(a_i)/p_old(a_i) + c KL(p ‖ q),
        // evaluated at p = p_old; compare the step's logit gradient with FD on it.
        let g = ScoreGrid::default();
        let logits: Vec<f64> = (0..9).map(|i| ((i * 3) as f64).cos()).collect();
        let p_old = softmax(&logits, g).unwrap().into_probs();
        let q = ScoreDistribution::uniform(g);
        let samples = [0usize, 4, 4, 8];
        let adv = [1.0, -0.5, -0.5, 0.0];
        let c = 0.1;
        let loss = |z: &[f64]| {
            let p = softmax(z, g).unwrap();
            let surrogate: f64 = samples
                .iter()
                .zip(adv)
                .map(|(&a, v)| v * p.prob(a) / p_old[a])
                .sum::<f64>()
                / samples.len() as f64;
            -surrogate + c * kl_divergence(&p, &q).unwrap()
        };
        let numeric = finite_diff_grad(loss, &logits, 1e-5).unwrap();

        let mut analytic = vec![0.0; 9];
        for (&a, v) in samples.iter().zip(adv) {
            for k in 0..9 {
                let ind = if k == a { 1.0 } else { 0.0 };
                analytic[k] -= v * (ind - p_old[k]) / samples.len() as f64;
            }
        }
        let (_, klg) = kl_logit_grad(&p_old, q.probs()).unwrap();
        for (a, k) in analytic.iter_mut().zip(klg) {
            *a += c * k;
        }
        for (a, n) in analytic.iter().zip(numeric) {
            assert!((a - n).abs() < 1e-8, "{a} vs {n}");
        }
    }

    #[test]
    fn train_zero_epochs_and_empty() {
        let g = grid3();
        let data = vec![item("a", vec![1.0], 2.0)];
        let config = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let init = model_with(9, g, 1);
        let (m, h) = train(&data, &config, g, Some(init.clone())).unwrap();
        assert_eq!(m, init);
        assert!(h.records.is_empty());
        assert!(matches!(train(&[], &config, g, None), Err(Error::Input(_))));
        let bad = vec![item("a", vec![1.0], 2.0), item("b", vec![1.0, 2.0], 2.0)];
        assert!(train(&bad, &config, g, None).is_err());
    }

    fn toy_set(n: usize, seed: u64) -> Vec<Example> {
        let g = ScoreGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let q: f64 = rng.random_range(1.0..5.0);
                item(&i.to_string(), vec![q, 1.0 - q], g.snap(q).unwrap())
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic() {
        let g = ScoreGrid::default();
        let data = toy_set(64, 1);
        for method in [Method::Sft, Method::Aso, Method::Grpo] {
            let config = TrainConfig {
                method,
                epochs: 3,
                batch_size: 16,
                seed: 7,
                ..Default::default()
            };
            let (a, ha) = train(&data, &config, g, None).unwrap();
            let (b, hb) = train(&data, &config, g, None).unwrap();
            assert_eq!(a, b);
            assert_eq!(ha, hb);
            assert_eq!(ha.records.len(), 3);
        }
    }

    #[test]
    fn aso_ignores_seed_grpo_does_not() {
        let g = ScoreGrid::default();
        let model = model_with(8, g, 2);
        let batch: Vec<Example> = toy_set(16, 2);
        let reference = Reference::Frozen(model_with(9, g, 2));
        let config = TrainConfig::default();

        let run_aso = || {
            let mut m = model.clone();
            let mut opt = config.optimizer_for(&m).unwrap();
            aso_step(&mut m, &mut opt, &batch, &reference, &config).unwrap();
            m
        };
        assert_eq!(run_aso(), run_aso());

        let run_grpo = |seed| {
            let mut m = model.clone();
            let mut opt = config.optimizer_for(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            grpo_step(&mut m, &mut opt, &batch, &reference, &config, &mut rng).unwrap();
            m
        };
        assert_eq!(run_grpo(1), run_grpo(1));
        assert_ne!(run_grpo(1), run_grpo(2));
    }

    #[test]
    fn single_item_aso_converges_to_teacher_kl() {
        let g = ScoreGrid::default();
        let start = model_with(11, g, 2);
        let data = vec![item("only", vec![0.3, -0.8], 4.0)];
        let config = TrainConfig {
            epochs: 4000,
            batch_size: 1,
            learning_rate: 1.0,
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        let (m, h) = train(&data, &config, g, Some(start.clone())).unwrap();
        let reference = start.policy(&data[0].features).unwrap();
        let teacher = teacher_for(&reference, 4.0, &config.reward, config.lambda).unwrap();
        let target_kl = kl_divergence(teacher.dist(), &reference).unwrap();
        let achieved = kl_divergence(&m.policy(&data[0].features).unwrap(), &reference).unwrap();
        assert!((achieved - target_kl).abs() < 1e-4, "{achieved} vs {target_kl}");
        assert!((h.records.last().unwrap().mean_kl - achieved).abs() < 1e-12);
    }
}
