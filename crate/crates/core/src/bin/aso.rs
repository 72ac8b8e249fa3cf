use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use aso_core::analytic::teacher_for;
use aso_core::annotations::{aggregate, iaa_table, normalize_mos, AggregatedLabel, AnnotationRecord};
use aso_core::config::RunConfig;
use aso_core::grid::ScoreDistribution;
use aso_core::io::{self, PredictionRow, TeacherRow};
use aso_core::metrics::{evaluate, EvalReport};
use aso_core::oracle::{summarize, verify_closed_form};
use aso_core::pipeline::{join_examples, split_holdout};
use aso_core::synth::{generate, FeatureRow};
use aso_core::trainer::{predict, train, LinearScorer};
use aso_core::{Error, Result};

/// Score-distribution alignment toolkit.
#[derive(Parser)]
#[command(name = "aso", version)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Directory for outputs; relative input paths resolve against it.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    /// Seed for training, synthesis and verification.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features, annotations, latent quality).
    GenSynth,
    /// Aggregate annotations into labels.
    Aggregate,
    /// Per-dimension inter-annotator agreement.
    Iaa,
    /// Closed-form teacher distribution for every label.
    Teacher(TeacherArgs),
    /// Train one scorer per dimension.
    Train(TrainArgs),
    /// Score predictions against labels.
    Eval(EvalArgs),
    /// Check the closed-form teacher against a numeric optimizer.
    Verify,
    /// Rescale a numeric JSONL field onto the 1-5 scale.
    Normalize(NormalizeArgs),
}

#[derive(Args)]
struct TeacherArgs {
    /// Checkpoint to use as the reference policy; `{dimension}` is substituted.
    /// Uniform when absent.
    #[arg(long, value_name = "PATH")]
    reference: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Starting checkpoint; `{dimension}` is substituted.
    #[arg(long, value_name = "PATH")]
    init: Option<String>,
    /// Train only these dimensions.
    #[arg(long = "dimension")]
    dimensions: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions file; defaults to `paths.predictions`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Output name suffix: writes eval_<tag>.csv and eval_<tag>.json.
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "score")]
    field: String,
    #[arg(long, allow_negative_numbers = true)]
    src_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    src_max: f64,
    /// Defaults to normalized.jsonl in the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Exit status of a completed run.
enum Outcome {
    Ok,
    Flagged,
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
}

impl Ctx {
    fn input(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out.join(path)
        }
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn echo_config(&self, name: &str) -> Result<()> {
        io::write_json(&self.output(&format!("{name}.config.json")), &self.config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let ctx = Ctx { config, out: cli.out };
    match cli.command {
        Command::GenSynth => gen_synth(&ctx),
        Command::Aggregate => cmd_aggregate(&ctx),
        Command::Iaa => iaa(&ctx),
        Command::Teacher(args) => teacher(&ctx, &args),
        Command::Train(args) => cmd_train(&ctx, &args),
        Command::Eval(args) => eval(&ctx, &args),
        Command::Verify => verify(&ctx),
        Command::Normalize(args) => normalize(&ctx, &args),
    }
}

fn gen_synth(ctx: &Ctx) -> Result<Outcome> {
    let data = generate(&ctx.config.synth, &ctx.config.grid)?;
    io::write_jsonl(&ctx.output("features.jsonl"), &data.features)?;
    io::write_jsonl(&ctx.output("annotations.jsonl"), &data.annotations)?;
    io::write_jsonl(&ctx.output("latent.jsonl"), &data.latent)?;
    ctx.echo_config("gen-synth")?;
    println!(
        "items {}  feature rows {}  annotation records {}",
        ctx.config.synth.n_items,
        data.features.len(),
        data.annotations.len()
    );
    Ok(Outcome::Ok)
}

fn read_annotations(ctx: &Ctx) -> Result<Vec<AnnotationRecord>> {
    let path = ctx.input(&ctx.config.paths.annotations);
    let records: Vec<AnnotationRecord> = io::read_jsonl(&path)?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| Error::Parse {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    Ok(records)
}

fn read_labels(ctx: &Ctx) -> Result<Vec<AggregatedLabel>> {
    io::read_jsonl(&ctx.input(&ctx.config.paths.labels))
}

fn cmd_aggregate(ctx: &Ctx) -> Result<Outcome> {
    let records = read_annotations(ctx)?;
    let options = ctx.config.annotations.aggregate_options();
    let labels = aggregate(&records, &ctx.config.grid, &options)?;
    io::write_jsonl(&ctx.output("labels.jsonl"), &labels)?;
    ctx.echo_config("aggregate")?;
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.iter().filter(|l| l.filtered) {
        *reasons.entry(l.filter_reason.map_or("unknown", |r| r.as_str())).or_default() += 1;
    }
    let kept = labels.len() - reasons.values().sum::<usize>();
    print!("labels {}  kept {kept}", labels.len());
    for (reason, n) in reasons {
        print!("  {reason} {n}");
    }
    println!();
    Ok(Outcome::Ok)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

fn iaa(ctx: &Ctx) -> Result<Outcome> {
    let records = read_annotations(ctx)?;
    let a = &ctx.config.annotations;
    let rows = iaa_table(&records, a.relaxed_threshold, a.alpha_metric)?;
    io::write_csv(&ctx.output("iaa.csv"), &rows)?;
    ctx.echo_config("iaa")?;
    println!("{:<20} {:>8} {:>8} {:>8} {:>8}", "dimension", "RM", "alpha", "units", "pairs");
    let mut outcome = Outcome::Ok;
    for r in &rows {
        println!(
            "{:<20} {:>8} {:>8} {:>8} {:>8}",
            r.dimension,
            fmt_opt(r.relaxed_match),
            fmt_opt(r.alpha),
            r.n_units,
            r.n_pairs
        );
        for note in &r.notes {
            eprintln!("warning: {}: {note}", r.dimension);
            outcome = Outcome::Flagged;
        }
    }
    Ok(outcome)
}

fn substitute(template: &str, dimension: &str) -> PathBuf {
    PathBuf::from(template.replace("{dimension}", dimension))
}

fn load_scorer(path: &Path) -> Result<LinearScorer> {
    io::read_json(path)
}

fn teacher(ctx: &Ctx, args: &TeacherArgs) -> Result<Outcome> {
    let cfg = &ctx.config;
    let labels = read_labels(ctx)?;
    let mut references: HashMap<String, (LinearScorer, HashMap<String, Vec<f64>>)> = HashMap::new();
    if let Some(template) = &args.reference {
        let features: Vec<FeatureRow> = io::read_jsonl(&ctx.input(&cfg.paths.features))?;
        for f in features {
            if !references.contains_key(&f.dimension) {
                let model = load_scorer(&substitute(template, &f.dimension))?;
                references.insert(f.dimension.clone(), (model, HashMap::new()));
            }
            let entry = references.get_mut(&f.dimension).expect("inserted above");
            entry.1.insert(f.video_id, f.features);
        }
    }
    let mut rows = Vec::new();
    for label in labels.iter().filter(|l| !l.filtered) {
        let reference = match &args.reference {
            None => ScoreDistribution::uniform(cfg.grid),
            Some(_) => {
                let missing = || Error::input("no reference features").for_item(&label.video_id);
                let (model, feats) = references.get(&label.dimension).ok_or_else(missing)?;
                let phi = feats.get(&label.video_id).ok_or_else(missing)?;
                model.policy(phi)?
            }
        };
        let t = teacher_for(&reference, label.mos_snapped, &cfg.reward, cfg.aso.lambda)
            .map_err(|e| e.for_item(&label.video_id))?;
        rows.push(TeacherRow::new(&label.video_id, &label.dimension, &t));
    }
    io::write_jsonl(&ctx.output("teachers.jsonl"), &rows)?;
    ctx.echo_config("teacher")?;
    println!("teachers {}", rows.len());
    Ok(Outcome::Ok)
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<Outcome> {
    let cfg = &ctx.config;
    let train_cfg = cfg.train_config();
    let method = serde_json::to_value(train_cfg.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .expect("method serializes as a string");
    let features: Vec<FeatureRow> = io::read_jsonl(&ctx.input(&cfg.paths.features))?;
    let labels = read_labels(ctx)?;
    let by_dim = join_examples(&features, &labels);
    for d in &args.dimensions {
        if !by_dim.contains_key(d) {
            return Err(Error::Input(format!("no labelled examples for dimension `{d}`")));
        }
    }

    let mut predictions = Vec::new();
    for (dimension, examples) in &by_dim {
        if !args.dimensions.is_empty() && !args.dimensions.contains(dimension) {
            continue;
        }
        let (train_set, held_out) =
            split_holdout(examples, cfg.eval.holdout_fraction, cfg.eval.split_seed)?;
        let init = match &args.init {
            Some(template) => Some(load_scorer(&substitute(template, dimension))?),
            None => None,
        };
        let (model, history) = train(&train_set, &train_cfg, cfg.grid, init)?;
        io::write_json(&ctx.output(&format!("checkpoint_{method}_{dimension}.json")), &model)?;
        io::write_csv(&ctx.output(&format!("history_{method}_{dimension}.csv")), &history.records)?;
        for ex in &held_out {
            predictions.push(PredictionRow {
                video_id: ex.id.clone(),
                dimension: dimension.clone(),
                score: predict(&model, &ex.features, train_cfg.predict_mode)?,
            });
        }
        match history.records.last() {
            Some(last) => println!(
                "{dimension:<20} {method}  train {}  held-out {}  loss {:.4}  reward {:.4}  kl {:.4}",
                train_set.len(),
                held_out.len(),
                last.loss,
                last.mean_reward,
                last.mean_kl
            ),
            None => println!("{dimension:<20} {method}  no epochs run"),
        }
    }
    io::write_jsonl(&ctx.output(&format!("predictions_{method}.jsonl")), &predictions)?;
    ctx.echo_config(&format!("train_{method}"))?;
    Ok(Outcome::Ok)
}

/// CSV layout of an [`EvalReport`].
#[derive(Serialize)]
struct EvalCsvRow<'a> {
    dimension: &'a str,
    n: usize,
    acc: f64,
    srcc: Option<f64>,
    plcc: Option<f64>,
    mae: f64,
    notes: String,
}

fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<Outcome> {
    let cfg = &ctx.config;
    let pred_path = ctx.input(args.predictions.as_deref().unwrap_or(&cfg.paths.predictions));
    let preds: Vec<PredictionRow> = io::read_jsonl(&pred_path)?;
    let labels = read_labels(ctx)?;
    let targets: HashMap<(&str, &str), f64> = labels
        .iter()
        .filter(|l| !l.filtered)
        .map(|l| ((l.video_id.as_str(), l.dimension.as_str()), l.mos_snapped))
        .collect();

    let mut pairs: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut unmatched = 0usize;
    for p in &preds {
        match targets.get(&(p.video_id.as_str(), p.dimension.as_str())) {
            Some(&gt) => {
                let entry = pairs.entry(p.dimension.as_str()).or_default();
                entry.0.push(p.score);
                entry.1.push(gt);
            }
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        eprintln!("warning: {unmatched} predictions have no usable label and were skipped");
    }
    if pairs.is_empty() {
        return Err(Error::Input(format!(
            "{}: no predictions match a label",
            pred_path.display()
        )));
    }
    let reports = pairs
        .iter()
        .map(|(dim, (p, g))| evaluate(p, g, dim))
        .collect::<Result<Vec<EvalReport>>>()?;

    let suffix = args.tag.as_ref().map_or(String::new(), |t| format!("_{t}"));
    let csv_rows: Vec<EvalCsvRow> = reports
        .iter()
        .map(|r| EvalCsvRow {
            dimension: &r.dimension,
            n: r.n,
            acc: r.acc,
            srcc: r.srcc,
            plcc: r.plcc,
            mae: r.mae,
            notes: r.notes.join("; "),
        })
        .collect();
    io::write_csv(&ctx.output(&format!("eval{suffix}.csv")), &csv_rows)?;
    io::write_json(&ctx.output(&format!("eval{suffix}.json")), &reports)?;
    ctx.echo_config(&format!("eval{suffix}"))?;

    println!(
        "{:<20} {:>6} {:>7} {:>7} {:>7} {:>7}",
        "dimension", "n", "Acc", "SRCC", "PLCC", "MAE"
    );
    let mut outcome = Outcome::Ok;
    for r in &reports {
        println!(
            "{:<20} {:>6} {:>7.3} {:>7} {:>7} {:>7.3}",
            r.dimension,
            r.n,
            r.acc,
            fmt_opt(r.srcc),
            fmt_opt(r.plcc),
            r.mae
        );
        if !r.is_complete() {
            eprintln!("warning: {}: {}", r.dimension, r.notes.join("; "));
            outcome = Outcome::Flagged;
        }
    }
    Ok(outcome)
}

fn verify(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.config;
    let reports = verify_closed_form(&cfg.verify, cfg.grid, &cfg.reward)?;
    io::write_jsonl(&ctx.output("verify.jsonl"), &reports)?;
    ctx.echo_config("verify")?;
    let s = summarize(&reports, &cfg.verify);
    println!(
        "{}: {} checks, gap violations {}, KL violations {}, min gap {:e}, max KL {:e}, unconverged {}",
        if s.passed() { "PASS" } else { "FAIL" },
        s.reports,
        s.gap_violations,
        s.kl_violations,
        s.min_gap,
        s.max_kl,
        s.unconverged
    );
    Ok(if s.passed() { Outcome::Ok } else { Outcome::Flagged })
}

fn normalize(ctx: &Ctx, args: &NormalizeArgs) -> Result<Outcome> {
    let input = ctx.input(&args.input);
    let rows: Vec<Map<String, Value>> = io::read_jsonl(&input)?;
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(rows.len());
    for (i, mut row) in rows.into_iter().enumerate() {
        let bad = |message: String| Error::Parse {
            path: input.clone(),
            line: i + 1,
            message,
        };
        let value = row
            .get(&args.field)
            .ok_or_else(|| bad(format!("missing field `{}`", args.field)))?
            .as_f64()
            .ok_or_else(|| bad(format!("field `{}` is not a number", args.field)))?;
        let n = normalize_mos(value, args.src_min, args.src_max)?;
        clamped += n.clamped as usize;
        row.insert(args.field.clone(), Value::from(n.value));
        out.push(row);
    }
    let output = args.output.clone().unwrap_or_else(|| ctx.output("normalized.jsonl"));
    io::write_jsonl(&output, &out)?;
    ctx.echo_config("normalize")?;
    println!("normalized {} rows", out.len());
    if clamped > 0 {
        eprintln!("warning: {clamped} values lay outside [{}, {}] and were clamped", args.src_min, args.src_max);
    }
    Ok(Outcome::Ok)
}
