//! Per-dimension evaluation metrics: Acc@tol, SRCC, PLCC and MAE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for [`acc_at`]: half a level on the 0.5-step grid.
pub const DEFAULT_ACC_TOLERANCE: f64 = 0.5;

fn check_pair(preds: &[f64], gts: &[f64], min_len: usize) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::input(format!(
            "{} predictions vs {} ground-truth values",
            preds.len(),
            gts.len()
        )));
    }
    if preds.len() < min_len {
        return Err(Error::input(format!(
            "need at least {min_len} pairs, got {}",
            preds.len()
        )));
    }
    if preds.iter().chain(gts).any(|v| !v.is_finite()) {
        return Err(Error::input("metric inputs must be finite"));
    }
    Ok(())
}

/// Fraction of pairs with `|pred − gt| ≤ tol`.
pub fn acc_at(preds: &[f64], gts: &[f64], tol: f64) -> Result<f64> {
    check_pair(preds, gts, 1)?;
    if !(tol >= 0.0) {
        return Err(Error::input(format!("tolerance must be >= 0, got {tol}")));
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(p, g)| (*p - *g).abs() <= tol)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mae(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pair(preds, gts, 1)?;
    let total: f64 = preds.iter().zip(gts).map(|(p, g)| (p - g).abs()).sum();
    Ok(total / preds.len() as f64)
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// Pearson product-moment correlation.
pub fn plcc(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pair(preds, gts, 2)?;
    if is_constant(preds) || is_constant(gts) {
        return Err(Error::undefined("PLCC: zero variance"));
    }
    let n = preds.len() as f64;
    let mx = preds.iter().sum::<f64>() / n;
    let my = gts.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in preds.iter().zip(gts) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::undefined("PLCC: zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pair(preds, gts, 2)?;
    if is_constant(preds) || is_constant(gts) {
        return Err(Error::undefined("SRCC: zero rank variance"));
    }
    plcc(&average_ranks(preds), &average_ranks(gts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dimension: String,
    pub n: usize,
    pub acc: f64,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub mae: f64,
    /// Reasons for any absent metric.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn is_complete(&self) -> bool {
        self.srcc.is_some() && self.plcc.is_some()
    }
}

fn optional(result: Result<f64>, notes: &mut Vec<String>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(reason)) => {
            notes.push(reason);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// All four metrics; correlations that are undefined are recorded as absent.
pub fn evaluate(preds: &[f64], gts: &[f64], dimension: &str) -> Result<EvalReport> {
    check_pair(preds, gts, 1)?;
    let mut notes = Vec::new();
    let (srcc, plcc) = if preds.len() < 2 {
        notes.push("fewer than 2 items".to_string());
        (None, None)
    } else {
        (
            optional(srcc(preds, gts), &mut notes)?,
            optional(plcc(preds, gts), &mut notes)?,
        )
    };
    Ok(EvalReport {
        dimension: dimension.to_string(),
        n: preds.len(),
        acc: acc_at(preds, gts, DEFAULT_ACC_TOLERANCE)?,
        srcc,
        plcc,
        mae: mae(preds, gts)?,
        notes,
    })
}
