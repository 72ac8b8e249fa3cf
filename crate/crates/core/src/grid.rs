//! The discrete score set and probability distributions over it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a grid's range is a whole number of steps
/// and when matching a value to a level.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Tolerance on the total mass of a [`ScoreDistribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A finite, uniformly spaced, ordered set of score levels.
///
/// Levels run from `min` to `max` inclusive in increments of `step`. The grid
/// is `Copy`; levels are computed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct ScoreGrid {
    min: f64,
    max: f64,
    step: f64,
    len: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GridSpec {
    min: f64,
    max: f64,
    step: f64,
}

impl TryFrom<GridSpec> for ScoreGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        ScoreGrid::new(spec.min, spec.max, spec.step)
    }
}

impl From<ScoreGrid> for GridSpec {
    fn from(grid: ScoreGrid) -> Self {
        GridSpec {
            min: grid.min,
            max: grid.max,
            step: grid.step,
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        ScoreGrid::default().into()
    }
}

impl Default for ScoreGrid {
    /// 1.0 to 5.0 in steps of 0.5 (nine levels).
    fn default() -> Self {
        ScoreGrid {
            min: 1.0,
            max: 5.0,
            step: 0.5,
            len: 9,
        }
    }
}

impl ScoreGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(Error::input("grid bounds and step must be finite"));
        }
        if step <= 0.0 {
            return Err(Error::input(format!("grid step must be positive, got {step}")));
        }
        if max < min {
            return Err(Error::input(format!("grid max {max} is below min {min}")));
        }
        let steps = (max - min) / step;
        let whole = steps.round();
        if (steps - whole).abs() > GRID_TOLERANCE {
            return Err(Error::input(format!(
                "grid range {min}..{max} is not a whole number of {step} steps"
            )));
        }
        Ok(ScoreGrid {
            min,
            max,
            step,
            len: whole as usize + 1,
        })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of levels.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Score at `index`. Panics if out of range.
    pub fn level(&self, index: usize) -> f64 {
        assert!(index < self.len, "level index {index} out of range");
        if index + 1 == self.len {
            self.max
        } else {
            self.min + index as f64 * self.step
        }
    }

    pub fn levels(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.level(i))
    }

    /// Index of `value` if it lies on the grid (within [`GRID_TOLERANCE`]).
    pub fn index_of(&self, value: f64) -> Option<usize> {
        if !value.is_finite() {
            return None;
        }
        let pos = ((value - self.min) / self.step).round();
        if pos < 0.0 || pos >= self.len as f64 {
            return None;
        }
        let index = pos as usize;
        ((self.level(index) - value).abs() <= GRID_TOLERANCE * value.abs().max(1.0)).then_some(index)
    }

    /// Like [`index_of`](Self::index_of) but reports off-grid values as errors.
    pub fn require_index(&self, value: f64) -> Result<usize> {
        self.index_of(value)
            .ok_or_else(|| Error::input(format!("score {value} is not a level of {self}")))
    }

    /// Index of the nearest level. Exact midpoints round half-to-even in
    /// index units; values beyond the range clamp to the end levels.
    pub fn snap_index(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::input(format!("cannot snap non-finite value {value}")));
        }
        let pos = ((value - self.min) / self.step).round_ties_even();
        Ok(pos.clamp(0.0, (self.len - 1) as f64) as usize)
    }

    /// Nearest grid level to `value`.
    pub fn snap(&self, value: f64) -> Result<f64> {
        self.snap_index(value).map(|i| self.level(i))
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

impl std::fmt::Display for ScoreGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "grid[{}..{} step {}]", self.min, self.max, self.step)
    }
}

/// A probability mass function over the levels of a [`ScoreGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    grid: ScoreGrid,
    probs: Vec<f64>,
}

impl ScoreDistribution {
    /// Validates length, non-negativity and total mass. No renormalization is
    /// performed.
    pub fn new(grid: ScoreGrid, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::input(format!(
                "distribution has {} entries but {grid} has {} levels",
                probs.len(),
                grid.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::input(format!("invalid probability {bad}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::input(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ScoreDistribution { grid, probs })
    }

    pub(crate) fn from_normalized(grid: ScoreGrid, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), grid.len());
        ScoreDistribution { grid, probs }
    }

    pub fn uniform(grid: ScoreGrid) -> Self {
        let p = 1.0 / grid.len() as f64;
        ScoreDistribution {
            grid,
            probs: vec![p; grid.len()],
        }
    }

    pub fn one_hot(grid: ScoreGrid, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::input(format!("level index {index} out of range for {grid}")));
        }
        let mut probs = vec![0.0; grid.len()];
        probs[index] = 1.0;
        Ok(ScoreDistribution { grid, probs })
    }

    pub fn grid(&self) -> &ScoreGrid {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

/// Log-softmax with max subtraction. Logits must be finite.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::input("empty logits"));
    }
    if let Some(bad) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::input(format!("non-finite logit {bad}")));
    }
    let lse = log_sum_exp(logits);
    Ok(logits.iter().map(|z| z - lse).collect())
}

/// `ln Σ exp(x_i)`, ignoring `-inf` entries. Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn softmax(logits: &[f64], grid: ScoreGrid) -> Result<ScoreDistribution> {
    if logits.len() != grid.len() {
        return Err(Error::input(format!(
            "{} logits for a {}-level grid",
            logits.len(),
            grid.len()
        )));
    }
    let probs = log_softmax(logits)?.into_iter().map(f64::exp).collect();
    Ok(ScoreDistribution::from_normalized(grid, probs))
}

/// `KL(p ‖ q)` in nats, with `0 · ln 0 = 0`.
pub fn kl_divergence(p: &ScoreDistribution, q: &ScoreDistribution) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::input(format!(
            "KL between distributions on different grids ({} vs {})",
            p.grid, q.grid
        )));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::domain(format!(
                "KL support violation at level {}: p = {pi}, q = 0",
                p.grid.level(i)
            )));
        }
        total += pi * (pi.ln() - qi.ln());
    }
    Ok(total.max(0.0))
}

/// Mean score `Σ s · d(s)`.
pub fn expected_score(d: &ScoreDistribution) -> f64 {
    let mean: f64 = d.grid.levels().zip(&d.probs).map(|(s, p)| s * p).sum();
    mean.clamp(d.grid.min, d.grid.max)
}

/// Level with maximal mass; ties resolve to the lowest score.
pub fn argmax_score(d: &ScoreDistribution) -> f64 {
    d.grid.level(argmax_index(&d.probs))
}

pub(crate) fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
