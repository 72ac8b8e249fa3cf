//! Scalar rewards `R(s, s*)` and per-level reward vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScoreGrid;

/// Constant in the distribution reward `5 - |pred - gt|`.
pub const DISTRIBUTION_REWARD_CEILING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `-beta * |s - s*|`
    #[default]
    Abs,
    /// `-beta * (s - s*)^2`
    Squared,
    /// 1 when prediction and target snap to the same level.
    Accuracy,
    /// `5 - |pred - gt|`
    Distribution,
    /// `w_acc * accuracy + w_dist * distribution`
    Composite,
}

/// Reward family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub beta: f64,
    pub w_acc: f64,
    pub w_dist: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            kind: RewardKind::Abs,
            beta: 1.0,
            w_acc: 1.0,
            w_dist: 1.0,
        }
    }
}

impl RewardSpec {
    pub fn abs(beta: f64) -> Self {
        RewardSpec {
            kind: RewardKind::Abs,
            beta,
            ..Default::default()
        }
    }

    pub fn with_kind(kind: RewardKind) -> Self {
        RewardSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn composite(w_acc: f64, w_dist: f64) -> Self {
        RewardSpec {
            kind: RewardKind::Composite,
            w_acc,
            w_dist,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::input(format!("reward beta must be >= 0, got {}", self.beta)));
        }
        if matches!(self.kind, RewardKind::Abs | RewardKind::Squared) && self.beta <= 0.0 {
            return Err(Error::input("reward beta must be > 0 for distance rewards"));
        }
        for (name, w) in [("w_acc", self.w_acc), ("w_dist", self.w_dist)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::input(format!("reward {name} must be >= 0, got {w}")));
            }
        }
        if self.kind == RewardKind::Composite && self.w_acc + self.w_dist <= 0.0 {
            return Err(Error::input("composite reward needs w_acc + w_dist > 0"));
        }
        Ok(())
    }

    /// Reward for predicting `pred` when the target is `gt`.
    ///
    /// Distance rewards require both arguments on the grid; the accuracy,
    /// distribution and composite rewards accept any finite values.
    pub fn evaluate(&self, grid: &ScoreGrid, pred: f64, gt: f64) -> Result<f64> {
        match self.kind {
            RewardKind::Abs => reward_abs(grid, pred, gt, self.beta),
            RewardKind::Squared => reward_squared(grid, pred, gt, self.beta),
            RewardKind::Accuracy => reward_accuracy(pred, gt, grid),
            RewardKind::Distribution => finite_pair(pred, gt).map(|_| reward_distribution(pred, gt)),
            RewardKind::Composite => reward_composite(pred, gt, self, grid),
        }
    }
}

fn finite_pair(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::input(format!("non-finite reward arguments ({a}, {b})")))
    }
}

fn check_distance_args(grid: &ScoreGrid, s: f64, s_star: f64, beta: f64) -> Result<()> {
    grid.require_index(s)?;
    grid.require_index(s_star)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::input(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

pub fn reward_abs(grid: &ScoreGrid, s: f64, s_star: f64, beta: f64) -> Result<f64> {
    check_distance_args(grid, s, s_star, beta)?;
    Ok(-beta * (s - s_star).abs())
}

pub fn reward_squared(grid: &ScoreGrid, s: f64, s_star: f64, beta: f64) -> Result<f64> {
    check_distance_args(grid, s, s_star, beta)?;
    let d = s - s_star;
    Ok(-beta * d * d)
}

/// 1.0 when `pred` and `gt` snap to the same grid level, else 0.0.
pub fn reward_accuracy(pred: f64, gt: f64, grid: &ScoreGrid) -> Result<f64> {
    let hit = grid.snap_index(pred)? == grid.snap_index(gt)?;
    Ok(if hit { 1.0 } else { 0.0 })
}

pub fn reward_distribution(pred: f64, gt: f64) -> f64 {
    DISTRIBUTION_REWARD_CEILING - (pred - gt).abs()
}

pub fn reward_composite(pred: f64, gt: f64, spec: &RewardSpec, grid: &ScoreGrid) -> Result<f64> {
    if spec.kind != RewardKind::Composite {
        return Err(Error::input(format!(
            "reward_composite called with {:?} spec",
            spec.kind
        )));
    }
    finite_pair(pred, gt)?;
    let acc = reward_accuracy(pred, gt, grid)?;
    Ok(spec.w_acc * acc + spec.w_dist * reward_distribution(pred, gt))
}

/// Reward of every level against the target `s_star`.
pub fn reward_vector(grid: &ScoreGrid, s_star: f64, spec: &RewardSpec) -> Result<Vec<f64>> {
    grid.require_index(s_star)?;
    spec.validate()?;
    grid.levels().map(|s| spec.evaluate(grid, s, s_star)).collect()
}
