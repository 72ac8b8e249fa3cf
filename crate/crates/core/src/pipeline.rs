//! Glue between the data modules and the trainer: dataset assembly, hold-out
//! splits, and the SFT / GRPO / ASO comparison on synthetic data.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::annotations::{aggregate, AggregateOptions, AggregatedLabel};
use crate::error::{Error, Result};
use crate::grid::ScoreGrid;
use crate::metrics::{evaluate, EvalReport};
use crate::synth::{generate, FeatureRow, SynthConfig};
use crate::trainer::{predict, train, Example, LinearScorer, Method, TrainConfig};

/// Joins feature rows with unfiltered labels, grouped by dimension and
/// ordered by video id. Features without a usable label are skipped.
pub fn join_examples(
    features: &[FeatureRow],
    labels: &[AggregatedLabel],
) -> BTreeMap<String, Vec<Example>> {
    let targets: HashMap<(&str, &str), f64> = labels
        .iter()
        .filter(|l| !l.filtered)
        .map(|l| ((l.video_id.as_str(), l.dimension.as_str()), l.mos_snapped))
        .collect();
    let mut out: BTreeMap<String, Vec<Example>> = BTreeMap::new();
    for row in features {
        if let Some(&target) = targets.get(&(row.video_id.as_str(), row.dimension.as_str())) {
            out.entry(row.dimension.clone()).or_default().push(Example {
                id: row.video_id.clone(),
                features: row.features.clone(),
                target,
            });
        }
    }
    for examples in out.values_mut() {
        examples.sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

/// Seeded split into `(train, held_out)`; both halves keep input order.
pub fn split_holdout(examples: &[Example], fraction: f64, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::input(format!("hold-out fraction must be in [0, 1), got {fraction}")));
    }
    let n_test = (examples.len() as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; examples.len()];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(e, _)| e).collect(),
        test.into_iter().map(|(e, _)| e).collect(),
    ))
}

pub fn evaluate_model(
    model: &LinearScorer,
    examples: &[Example],
    config: &TrainConfig,
    dimension: &str,
) -> Result<EvalReport> {
    let preds = examples
        .iter()
        .map(|e| predict(model, &e.features, config.predict_mode))
        .collect::<Result<Vec<f64>>>()?;
    let gts: Vec<f64> = examples.iter().map(|e| e.target).collect();
    evaluate(&preds, &gts, dimension)
}

/// Settings for [`run_ablation`].
#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub synth: SynthConfig,
    pub grid: ScoreGrid,
    pub aggregate: AggregateOptions,
    /// Training seeds; the synthetic corpus is shared across seeds.
    pub seeds: Vec<u64>,
    pub holdout_fraction: f64,
    /// Hard-label stage that produces the checkpoint GRPO and ASO start from.
    pub sft_epochs: usize,
    /// Template for every stage; `method` and `seed` are overridden.
    pub train: TrainConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            synth: SynthConfig::default(),
            grid: ScoreGrid::default(),
            aggregate: AggregateOptions::default(),
            seeds: (0..5).collect(),
            holdout_fraction: 0.2,
            sft_epochs: 50,
            train: TrainConfig::default(),
        }
    }
}

/// Held-out metrics averaged over dimensions, for one method and seed.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRun {
    pub method: Method,
    pub seed: u64,
    pub srcc: f64,
    pub plcc: f64,
    pub mae: f64,
    pub acc: f64,
    pub per_dimension: Vec<EvalReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSummary {
    pub method: Method,
    pub srcc_mean: f64,
    pub srcc_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub acc_mean: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AblationSummary {
    pub fn from_runs(method: Method, runs: &[AblationRun]) -> Self {
        let pick = |f: fn(&AblationRun) -> f64| -> Vec<f64> {
            runs.iter().filter(|r| r.method == method).map(f).collect()
        };
        let (srcc_mean, srcc_std) = mean_std(&pick(|r| r.srcc));
        let (mae_mean, mae_std) = mean_std(&pick(|r| r.mae));
        let (acc_mean, _) = mean_std(&pick(|r| r.acc));
        AblationSummary {
            method,
            srcc_mean,
            srcc_std,
            mae_mean,
            mae_std,
            acc_mean,
        }
    }
}

fn average_reports(method: Method, seed: u64, reports: Vec<EvalReport>) -> Result<AblationRun> {
    let n = reports.len() as f64;
    let mut run = AblationRun {
        method,
        seed,
        srcc: 0.0,
        plcc: 0.0,
        mae: 0.0,
        acc: 0.0,
        per_dimension: Vec::new(),
    };
    for r in &reports {
        let (Some(s), Some(p)) = (r.srcc, r.plcc) else {
            return Err(Error::undefined(format!(
                "{method:?} seed {seed}: correlation undefined on {}",
                r.dimension
            )));
        };
        run.srcc += s / n;
        run.plcc += p / n;
        run.mae += r.mae / n;
        run.acc += r.acc / n;
    }
    run.per_dimension = reports;
    Ok(run)
}

/// Trains SFT, then GRPO and ASO from the SFT checkpoint, per dimension and
/// seed, and evaluates each on a held-out split. The SFT baseline is the
/// checkpoint itself.
pub fn run_ablation(config: &AblationConfig) -> Result<Vec<AblationRun>> {
    let data = generate(&config.synth, &config.grid)?;
    let labels = aggregate(&data.annotations, &config.grid, &config.aggregate)?;
    let by_dim = join_examples(&data.features, &labels);

    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let mut reports: BTreeMap<Method, Vec<EvalReport>> = BTreeMap::new();
        for (dimension, examples) in &by_dim {
            let (train_set, test_set) =
                split_holdout(examples, config.holdout_fraction, config.synth.seed)?;
            let stage = |method, epochs, init| {
                let cfg = TrainConfig {
                    method,
                    epochs,
                    seed,
                    ..config.train.clone()
                };
                train(&train_set, &cfg, config.grid, init).map(|(m, _)| m)
            };
            let sft = stage(Method::Sft, config.sft_epochs, None)?;
            let grpo = stage(Method::Grpo, config.train.epochs, Some(sft.clone()))?;
            let aso = stage(Method::Aso, config.train.epochs, Some(sft.clone()))?;
            for (method, model) in [(Method::Sft, &sft), (Method::Grpo, &grpo), (Method::Aso, &aso)] {
                reports
                    .entry(method)
                    .or_default()
                    .push(evaluate_model(model, &test_set, &config.train, dimension)?);
            }
        }
        for (method, reps) in reports {
            runs.push(average_reports(method, seed, reps)?);
        }
    }
    Ok(runs)
}
