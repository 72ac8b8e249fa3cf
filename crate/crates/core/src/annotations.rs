//! Multi-rater annotations: aggregation into labels, agreement statistics and
//! MOS range normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScoreGrid;

/// One rater's score for one (video, dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub dimension: String,
    pub rater_id: String,
    pub score: f64,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() || self.dimension.is_empty() || self.rater_id.is_empty() {
            return Err(Error::input("annotation ids must be non-empty"));
        }
        if !self.score.is_finite() {
            return Err(Error::input(format!(
                "non-finite score for {}/{}",
                self.video_id, self.dimension
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterReason {
    InsufficientRaters,
    ExcessiveVariance,
}

impl FilterReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterReason::InsufficientRaters => "insufficient_raters",
            FilterReason::ExcessiveVariance => "excessive_variance",
        }
    }
}

/// Ground-truth label for one (video, dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatedLabel {
    pub video_id: String,
    pub dimension: String,
    pub mos_raw: f64,
    pub mos_snapped: f64,
    pub n_raters: usize,
    /// Population variance of the ratings.
    pub variance: f64,
    pub filtered: bool,
    #[serde(default)]
    pub filter_reason: Option<FilterReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregateOptions {
    pub min_raters: usize,
    /// Labels whose rating variance exceeds this are filtered (score units²).
    pub var_threshold: f64,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            min_raters: 3,
            var_threshold: 1.0,
        }
    }
}

type UnitKey = (String, String);

fn group_scores<'a>(
    records: impl IntoIterator<Item = &'a AnnotationRecord>,
) -> Result<BTreeMap<UnitKey, Vec<f64>>> {
    let mut groups: BTreeMap<UnitKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        r.validate()?;
        groups
            .entry((r.video_id.clone(), r.dimension.clone()))
            .or_default()
            .push(r.score);
    }
    for scores in groups.values_mut() {
        scores.sort_by(f64::total_cmp);
    }
    Ok(groups)
}

/// Mean, population variance and snapped MOS per (video, dimension), sorted by
/// key. Filtered labels keep their statistics.
pub fn aggregate(
    records: &[AnnotationRecord],
    grid: &ScoreGrid,
    options: &AggregateOptions,
) -> Result<Vec<AggregatedLabel>> {
    if !(options.var_threshold > 0.0) {
        return Err(Error::input("var_threshold must be > 0"));
    }
    let groups = group_scores(records)?;
    let mut labels = Vec::with_capacity(groups.len());
    for ((video_id, dimension), scores) in groups {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let variance = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let filter_reason = if scores.len() < options.min_raters {
            Some(FilterReason::InsufficientRaters)
        } else if variance > options.var_threshold {
            Some(FilterReason::ExcessiveVariance)
        } else {
            None
        };
        labels.push(AggregatedLabel {
            video_id,
            dimension,
            mos_raw: mean,
            mos_snapped: grid.snap(mean)?,
            n_raters: scores.len(),
            variance,
            filtered: filter_reason.is_some(),
            filter_reason,
        });
    }
    Ok(labels)
}

/// Pooled pairwise agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxedMatch {
    pub value: f64,
    pub n_pairs: usize,
    pub n_units: usize,
}

pub const DEFAULT_RELAXED_THRESHOLD: f64 = 1.0;

/// Fraction of unordered within-unit rater pairs whose scores differ by at
/// most `threshold`, pooled over all units.
pub fn relaxed_match(records: &[AnnotationRecord], threshold: f64) -> Result<RelaxedMatch> {
    let groups = group_scores(records)?;
    let (mut pairs, mut hits, mut units) = (0usize, 0usize, 0usize);
    for scores in groups.values().filter(|s| s.len() >= 2) {
        units += 1;
        for (i, a) in scores.iter().enumerate() {
            for b in &scores[i + 1..] {
                pairs += 1;
                if (a - b).abs() <= threshold {
                    hits += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::undefined("relaxed match: no unit has two ratings"));
    }
    Ok(RelaxedMatch {
        value: hits as f64 / pairs as f64,
        n_pairs: pairs,
        n_units: units,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    #[default]
    Interval,
    Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alpha {
    pub value: f64,
    pub n_units: usize,
    /// Number of pairable values.
    pub n_values: usize,
}

/// Krippendorff's alpha via the coincidence matrix. Units with a single
/// rating are ignored.
pub fn krippendorff_alpha(records: &[AnnotationRecord], metric: AlphaMetric) -> Result<Alpha> {
    let groups = group_scores(records)?;
    let units: Vec<&Vec<f64>> = groups.values().filter(|s| s.len() >= 2).collect();

    let mut distinct: Vec<f64> = units.iter().flat_map(|u| u.iter().copied()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let n_values: usize = units.iter().map(|u| u.len()).sum();
    if n_values < 2 {
        return Err(Error::undefined("alpha: fewer than two pairable values"));
    }

    let v = distinct.len();
    let index = |x: f64| distinct.binary_search_by(|d| d.total_cmp(&x)).unwrap();
    let mut coincidence = vec![vec![0.0; v]; v];
    for unit in &units {
        let weight = 1.0 / (unit.len() - 1) as f64;
        let idx: Vec<usize> = unit.iter().map(|&x| index(x)).collect();
        for (i, &a) in idx.iter().enumerate() {
            for (j, &b) in idx.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += weight;
                }
            }
        }
    }
    let margins: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = margins.iter().sum();

    let delta = distance_matrix(&distinct, &margins, metric);
    let (mut observed, mut expected) = (0.0, 0.0);
    for c in 0..v {
        for k in 0..v {
            observed += coincidence[c][k] * delta[c][k];
            expected += margins[c] * margins[k] * delta[c][k];
        }
    }
    if expected == 0.0 {
        return Err(Error::undefined(
            "alpha: all pooled values identical, expected disagreement is zero",
        ));
    }
    Ok(Alpha {
        value: 1.0 - (n - 1.0) * observed / expected,
        n_units: units.len(),
        n_values,
    })
}

fn distance_matrix(values: &[f64], margins: &[f64], metric: AlphaMetric) -> Vec<Vec<f64>> {
    let v = values.len();
    let mut delta = vec![vec![0.0; v]; v];
    for c in 0..v {
        for k in c + 1..v {
            let d = match metric {
                AlphaMetric::Interval => {
                    let d = values[c] - values[k];
                    d * d
                }
                AlphaMetric::Ordinal => {
                    let span: f64 = margins[c..=k].iter().sum();
                    let d = span - 0.5 * (margins[c] + margins[k]);
                    d * d
                }
            };
            delta[c][k] = d;
            delta[k][c] = d;
        }
    }
    delta
}

/// One row of the per-dimension agreement table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IaaRow {
    pub dimension: String,
    pub relaxed_match: Option<f64>,
    pub alpha: Option<f64>,
    pub n_units: usize,
    pub n_pairs: usize,
    #[serde(skip)]
    pub notes: Vec<String>,
}

pub fn by_dimension(records: &[AnnotationRecord]) -> BTreeMap<String, Vec<AnnotationRecord>> {
    let mut out: BTreeMap<String, Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.dimension.clone()).or_default().push(r.clone());
    }
    out
}

/// Relaxed match and alpha for every dimension, sorted by dimension name.
pub fn iaa_table(
    records: &[AnnotationRecord],
    threshold: f64,
    metric: AlphaMetric,
) -> Result<Vec<IaaRow>> {
    let mut rows = Vec::new();
    for (dimension, recs) in by_dimension(records) {
        let mut notes = Vec::new();
        let rm = match relaxed_match(&recs, threshold) {
            Ok(rm) => Some(rm),
            Err(Error::UndefinedMetric(m)) => {
                notes.push(m);
                None
            }
            Err(e) => return Err(e),
        };
        let alpha = match krippendorff_alpha(&recs, metric) {
            Ok(a) => Some(a.value),
            Err(Error::UndefinedMetric(m)) => {
                notes.push(m);
                None
            }
            Err(e) => return Err(e),
        };
        rows.push(IaaRow {
            dimension,
            relaxed_match: rm.map(|r| r.value),
            alpha,
            n_units: rm.map_or(0, |r| r.n_units),
            n_pairs: rm.map_or(0, |r| r.n_pairs),
            notes,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalized {
    pub value: f64,
    /// True when the input lay outside the source range and was clamped.
    pub clamped: bool,
}

/// Maps `value` from `[src_min, src_max]` affinely onto the 1–5 scale.
pub fn normalize_mos(value: f64, src_min: f64, src_max: f64) -> Result<Normalized> {
    if !(src_min.is_finite() && src_max.is_finite()) || src_max <= src_min {
        return Err(Error::input(format!(
            "source range must satisfy min < max, got [{src_min}, {src_max}]"
        )));
    }
    if !value.is_finite() {
        return Err(Error::input(format!("cannot normalize non-finite value {value}")));
    }
    let clamped_value = value.clamp(src_min, src_max);
    Ok(Normalized {
        value: 1.0 + 4.0 * (clamped_value - src_min) / (src_max - src_min),
        clamped: clamped_value != value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(video: &str, rater: &str, score: f64) -> AnnotationRecord {
        AnnotationRecord {
            video_id: video.into(),
            dimension: "motion_quality".into(),
            rater_id: rater.into(),
            score,
            tags: vec![],
        }
    }

    fn unit(video: &str, scores: &[f64]) -> Vec<AnnotationRecord> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| rec(video, &format!("r{i}"), s))
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        let g = ScoreGrid::default();
        let opts = AggregateOptions::default();
        let labels = aggregate(&unit("v", &[3.0, 3.0, 3.0]), &g, &opts).unwrap();
        assert_eq!(labels.len(), 1);
        let l = &labels[0];
        assert_eq!((l.mos_raw, l.variance, l.mos_snapped, l.filtered), (3.0, 0.0, 3.0, false));

        let spread = unit("v", &[2.0, 3.0, 4.0]);
        let l = &aggregate(&spread, &g, &opts).unwrap()[0];
        assert_eq!(l.mos_raw, 3.0);
        assert!((l.variance - 2.0 / 3.0).abs() < 1e-15);
        assert!(!l.filtered);
        let tight = AggregateOptions {
            var_threshold: 0.6,
            ..opts
        };
        let l = &aggregate(&spread, &g, &tight).unwrap()[0];
        assert_eq!(l.filter_reason, Some(FilterReason::ExcessiveVariance));
        assert_eq!(l.mos_snapped, 3.0);

        let l = &aggregate(&unit("v", &[3.0, 3.5]), &g, &opts).unwrap()[0];
        assert!(l.filtered);
        assert_eq!(l.filter_reason, Some(FilterReason::InsufficientRaters));
        assert_eq!(l.n_raters, 2);

        assert!(aggregate(&spread, &g, &AggregateOptions { var_threshold: 0.0, ..opts }).is_err());
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let g = ScoreGrid::default();
        let mut records = unit("a", &[1.5, 4.0, 2.5, 3.0]);
        records.extend(unit("b", &[5.0, 4.5, 4.5]));
        let forward = aggregate(&records, &g, &AggregateOptions::default()).unwrap();
        records.reverse();
        let backward = aggregate(&records, &g, &AggregateOptions::default()).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn relaxed_match_examples() {
        let mut same = unit("a", &[3.0, 3.0, 3.0]);
        same.extend(unit("b", &[2.0, 2.0]));
        assert_eq!(relaxed_match(&same, 1.0).unwrap().value, 1.0);

        let rm = relaxed_match(&unit("a", &[1.0, 2.0, 3.5]), 1.0).unwrap();
        assert!((rm.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rm.n_pairs, 3);

        // unit a: 1 of 3 pairs; unit b: 1 of 1 pair -> pooled 2/4, not mean 2/3
        let mut two = unit("a", &[1.0, 2.0, 3.5]);
        two.extend(unit("b", &[4.0, 4.5]));
        let rm = relaxed_match(&two, 1.0).unwrap();
        assert_eq!(rm.value, 0.5);
        assert_eq!((rm.n_pairs, rm.n_units), (4, 2));

        assert!(matches!(
            relaxed_match(&unit("a", &[1.0]), 1.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn alpha_examples() {
        let mut perfect = unit("a", &[1.0, 1.0]);
        perfect.extend(unit("b", &[2.0, 2.0]));
        perfect.extend(unit("c", &[3.0, 3.0]));
        assert_eq!(krippendorff_alpha(&perfect, AlphaMetric::Interval).unwrap().value, 1.0);
        assert_eq!(krippendorff_alpha(&perfect, AlphaMetric::Ordinal).unwrap().value, 1.0);

        let mut swapped = unit("a", &[1.0, 2.0]);
        swapped.extend(unit("b", &[2.0, 1.0]));
        assert_eq!(krippendorff_alpha(&swapped, AlphaMetric::Interval).unwrap().value, -0.5);

        let mut flat = unit("a", &[3.0, 3.0]);
        flat.extend(unit("b", &[3.0, 3.0, 3.0]));
        assert!(matches!(
            krippendorff_alpha(&flat, AlphaMetric::Interval),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn alpha_ignores_singletons_and_shifts() {
        let mut records = unit("a", &[1.0, 1.5, 2.0]);
        records.extend(unit("b", &[4.0, 4.5]));
        records.extend(unit("c", &[2.5, 3.5, 3.0]));
        let base = krippendorff_alpha(&records, AlphaMetric::Interval).unwrap();
        let mut with_single = records.clone();
        with_single.push(rec("lonely", "r0", 5.0));
        let same = krippendorff_alpha(&with_single, AlphaMetric::Interval).unwrap();
        assert_eq!(base.value, same.value);
        assert_eq!(base.n_values, 8);

        let shifted: Vec<_> = records
            .iter()
            .map(|r| AnnotationRecord { score: r.score + 10.0, ..r.clone() })
            .collect();
        let moved = krippendorff_alpha(&shifted, AlphaMetric::Interval).unwrap();
        assert!((moved.value - base.value).abs() < 1e-12);
    }

    #[test]
    fn ordinal_alpha_known_value() {
        // values {1,2}: one agreeing unit per value plus one disagreeing unit.
        // n_1 = n_2 = 3, delta(1,2) = (3 + 3 - 3)^2 = 9.
        // observed = 2 * 9 = 18, expected = 2 * 9 * 9 = 162, n = 6.
        let mut records = unit("a", &[1.0, 1.0]);
        records.extend(unit("b", &[2.0, 2.0]));
        records.extend(unit("c", &[1.0, 2.0]));
        let a = krippendorff_alpha(&records, AlphaMetric::Ordinal).unwrap();
        assert!((a.value - (1.0 - 5.0 * 18.0 / 162.0)).abs() < 1e-15);
        // Interval on the same data: delta = 1, observed 2, expected 18.
        let i = krippendorff_alpha(&records, AlphaMetric::Interval).unwrap();
        assert!((i.value - (1.0 - 5.0 * 2.0 / 18.0)).abs() < 1e-15);
    }

    #[test]
    fn iaa_table_per_dimension() {
        let mut records = unit("a", &[1.0, 2.0]);
        records.extend(unit("b", &[2.0, 1.0]));
        let mut other = unit("a", &[4.0]);
        for r in &mut other {
            r.dimension = "clarity_quality".into();
        }
        records.extend(other);
        let rows = iaa_table(&records, 1.0, AlphaMetric::Interval).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].dimension, "clarity_quality");
        assert_eq!(rows[0].relaxed_match, None);
        assert_eq!(rows[0].alpha, None);
        assert_eq!(rows[1].alpha, Some(-0.5));
        assert_eq!(rows[1].relaxed_match, Some(1.0));
        assert_eq!((rows[1].n_units, rows[1].n_pairs), (2, 2));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_mos(50.0, 0.0, 100.0).unwrap().value, 3.0);
        assert_eq!(normalize_mos(0.0, 0.0, 100.0).unwrap().value, 1.0);
        assert_eq!(normalize_mos(100.0, 0.0, 100.0).unwrap().value, 5.0);
        assert_eq!(normalize_mos(2.5, 1.0, 5.0).unwrap().value, 2.5);
        let out = normalize_mos(120.0, 0.0, 100.0).unwrap();
        assert_eq!((out.value, out.clamped), (5.0, true));
        assert!(normalize_mos(1.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn records_reject_bad_values() {
        let mut r = rec("a", "x", f64::NAN);
        assert!(r.validate().is_err());
        r.score = 2.0;
        r.rater_id.clear();
        assert!(r.validate().is_err());
    }
}
