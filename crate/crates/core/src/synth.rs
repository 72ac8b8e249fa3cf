//! Seeded synthetic corpus: per-dimension features that are a noisy linear
//! function of a latent quality, plus noisy multi-rater scores of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::annotations::AnnotationRecord;
use crate::error::{Error, Result};
use crate::grid::ScoreGrid;

/// Names of the five quality dimensions; further dimensions are `dim_<k>`.
pub const DIMENSIONS: [&str; 5] = [
    "motion_quality",
    "motion_amplitude",
    "aesthetic_quality",
    "content_quality",
    "clarity_quality",
];

pub fn dimension_name(k: usize) -> String {
    DIMENSIONS
        .get(k)
        .map_or_else(|| format!("dim_{k}"), |s| s.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_raters: usize,
    pub n_dims: usize,
    pub feature_dim: usize,
    /// Rater noise standard deviation in score units.
    pub rater_noise_sigma: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 2000,
            n_raters: 3,
            n_dims: 5,
            feature_dim: 8,
            rater_noise_sigma: 0.4,
            feature_noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::Config("synth.n_items must be >= 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("synth.feature_dim must be >= 1".into()));
        }
        if self.n_dims == 0 || self.n_raters == 0 {
            return Err(Error::Config("synth.n_dims and synth.n_raters must be >= 1".into()));
        }
        for (name, v) in [
            ("rater_noise_sigma", self.rater_noise_sigma),
            ("feature_noise_sigma", self.feature_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("synth.{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRow {
    pub video_id: String,
    pub dimension: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentRow {
    pub video_id: String,
    pub dimension: String,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub features: Vec<FeatureRow>,
    pub annotations: Vec<AnnotationRecord>,
    pub latent: Vec<LatentRow>,
}

pub fn video_id(i: usize) -> String {
    format!("v{i:05}")
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates the corpus. Rows are ordered item-major, then dimension, then rater.
pub fn generate(config: &SynthConfig, grid: &ScoreGrid) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let directions: Vec<Vec<f64>> = (0..config.n_dims)
        .map(|_| unit_direction(&mut rng, config.feature_dim))
        .collect();
    let names: Vec<String> = (0..config.n_dims).map(dimension_name).collect();
    let (lo, hi) = (grid.min(), grid.max());

    let mut data = SynthData {
        features: Vec::with_capacity(config.n_items * config.n_dims),
        annotations: Vec::with_capacity(config.n_items * config.n_dims * config.n_raters),
        latent: Vec::with_capacity(config.n_items * config.n_dims),
    };
    for item in 0..config.n_items {
        let vid = video_id(item);
        for (direction, name) in directions.iter().zip(&names) {
            let quality = lo + (hi - lo) * rng.random::<f64>();
            let features = direction
                .iter()
                .map(|w| {
                    let noise: f64 = rng.sample(StandardNormal);
                    w * quality + config.feature_noise_sigma * noise
                })
                .collect();
            for r in 0..config.n_raters {
                let noise: f64 = rng.sample(StandardNormal);
                let raw = (quality + config.rater_noise_sigma * noise).clamp(lo, hi);
                data.annotations.push(AnnotationRecord {
                    video_id: vid.clone(),
                    dimension: name.clone(),
                    rater_id: format!("r{r}"),
                    score: grid.snap(raw)?,
                    tags: Vec::new(),
                });
            }
            data.features.push(FeatureRow {
                video_id: vid.clone(),
                dimension: name.clone(),
                features,
            });
            data.latent.push(LatentRow {
                video_id: vid.clone(),
                dimension: name.clone(),
                quality,
            });
        }
    }
    Ok(data)
}
