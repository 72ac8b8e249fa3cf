//! Brute-force reference implementations and helpers shared by the
//! integration tests. These are deliberately written from the textbook
//! definitions and share no code with the library.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use aso_core::annotations::AnnotationRecord;
use rand::Rng;

/// Average rank of each value (1-based), by counting.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let equal = x.iter().filter(|&&xj| xj == xi).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn brute_srcc(x: &[f64], y: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(x), &brute_ranks(y))
}

/// `1 − 6 Σ d² / (n (n² − 1))`, valid only without ties.
pub fn srcc_tie_free(x: &[f64], y: &[f64]) -> f64 {
    let rx = brute_ranks(x);
    let ry = brute_ranks(y);
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn brute_mae(x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.len() {
        total += (x[i] - y[i]).abs();
    }
    total / x.len() as f64
}

pub fn brute_acc(x: &[f64], y: &[f64], tol: f64) -> f64 {
    let mut hits = 0;
    for i in 0..x.len() {
        if (x[i] - y[i]).abs() <= tol {
            hits += 1;
        }
    }
    hits as f64 / x.len() as f64
}

/// Interval Krippendorff's alpha from pairwise disagreements:
/// `D_o` averages within-unit ordered pairs (each unit weighted by
/// `1/(m_u − 1)`), `D_e` averages all ordered pairs of pairable values.
pub fn brute_alpha_interval(units: &[Vec<f64>]) -> f64 {
    let pairable: Vec<&Vec<f64>> = units.iter().filter(|u| u.len() >= 2).collect();
    let all: Vec<f64> = pairable.iter().flat_map(|u| u.iter().copied()).collect();
    let n = all.len() as f64;
    let mut d_o = 0.0;
    for u in &pairable {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    d_o += (u[i] - u[j]).powi(2) / (m - 1.0);
                }
            }
        }
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += (all[i] - all[j]).powi(2);
            }
        }
    }
    d_e /= n * (n - 1.0);
    1.0 - d_o / d_e
}

/// Share of unordered within-unit pairs within `threshold`, pooled.
pub fn brute_relaxed_match(units: &[Vec<f64>], threshold: f64) -> f64 {
    let mut pairs = 0;
    let mut hits = 0;
    for u in units {
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                pairs += 1;
                if (u[i] - u[j]).abs() <= threshold {
                    hits += 1;
                }
            }
        }
    }
    hits as f64 / pairs as f64
}

/// Flattens units into annotation records, one rater id per position.
pub fn records_from_units(units: &[Vec<f64>]) -> Vec<AnnotationRecord> {
    let mut out = Vec::new();
    for (u, values) in units.iter().enumerate() {
        for (r, &score) in values.iter().enumerate() {
            out.push(AnnotationRecord {
                video_id: format!("u{u}"),
                dimension: "d".into(),
                rater_id: format!("r{r}"),
                score,
                tags: Vec::new(),
            });
        }
    }
    out
}

/// Random grid value in {1.0, 1.5, ..., 5.0}.
pub fn grid_value<R: Rng>(rng: &mut R) -> f64 {
    1.0 + 0.5 * rng.random_range(0..9) as f64
}

/// Random annotation units with 1 to 4 ratings each; at least two units
/// carry two or more ratings and the pooled values are not all equal.
pub fn random_units<R: Rng>(rng: &mut R) -> Vec<Vec<f64>> {
    loop {
        let n_units = rng.random_range(5..40);
        let units: Vec<Vec<f64>> = (0..n_units)
            .map(|_| {
                let m = rng.random_range(1..=4);
                let centre = grid_value(rng);
                (0..m)
                    .map(|_| {
                        if rng.random_bool(0.6) {
                            centre
                        } else {
                            grid_value(rng)
                        }
                    })
                    .collect()
            })
            .collect();
        let pairable: Vec<f64> = units.iter().filter(|u| u.len() >= 2).flatten().copied().collect();
        let multi = units.iter().filter(|u| u.len() >= 2).count();
        if multi >= 2 && pairable.iter().any(|&v| v != pairable[0]) {
            return units;
        }
    }
}

pub fn aso(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aso"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("aso binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
