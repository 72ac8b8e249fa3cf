use aso_core::analytic::teacher_for;
use aso_core::annotations::{aggregate, AggregateOptions, AggregatedLabel, AnnotationRecord};
use aso_core::grid::{ScoreDistribution, ScoreGrid};
use aso_core::io::{read_csv, read_json, read_jsonl, write_csv, write_json, write_jsonl, PredictionRow, TeacherRow};
use aso_core::rewards::RewardSpec;
use aso_core::synth::{generate, FeatureRow, LatentRow, SynthConfig};
use aso_core::trainer::{train, EpochRecord, Example, LinearScorer, Method, TrainConfig};
use proptest::prelude::*;

#[test]
fn synthetic_corpus_round_trips() {
    let grid = ScoreGrid::default();
    let data = generate(&SynthConfig { n_items: 30, ..Default::default() }, &grid).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);

    write_jsonl(&p("features.jsonl"), &data.features).unwrap();
    write_jsonl(&p("annotations.jsonl"), &data.annotations).unwrap();
    write_jsonl(&p("latent.jsonl"), &data.latent).unwrap();
    assert_eq!(read_jsonl::<FeatureRow>(&p("features.jsonl")).unwrap(), data.features);
    assert_eq!(read_jsonl::<AnnotationRecord>(&p("annotations.jsonl")).unwrap(), data.annotations);
    assert_eq!(read_jsonl::<LatentRow>(&p("latent.jsonl")).unwrap(), data.latent);

    let options = AggregateOptions { var_threshold: 0.1, ..Default::default() };
    let labels = aggregate(&data.annotations, &grid, &options).unwrap();
    assert!(labels.iter().any(|l| l.filtered));
    write_jsonl(&p("labels.jsonl"), &labels).unwrap();
    assert_eq!(read_jsonl::<AggregatedLabel>(&p("labels.jsonl")).unwrap(), labels);

    let teachers: Vec<TeacherRow> = labels
        .iter()
        .map(|l| {
            let t = teacher_for(&ScoreDistribution::uniform(grid), l.mos_snapped, &RewardSpec::default(), 0.7).unwrap();
            TeacherRow::new(&l.video_id, &l.dimension, &t)
        })
        .collect();
    write_jsonl(&p("teachers.jsonl"), &teachers).unwrap();
    assert_eq!(read_jsonl::<TeacherRow>(&p("teachers.jsonl")).unwrap(), teachers);
}

#[test]
fn checkpoint_and_history_round_trip() {
    let grid = ScoreGrid::default();
    let examples: Vec<Example> = (0..20)
        .map(|i| Example {
            id: format!("e{i}"),
            features: vec![i as f64 / 7.0, (i as f64).sin()],
            target: grid.level(i % 9),
        })
        .collect();
    let config = TrainConfig { method: Method::Sft, epochs: 3, ..Default::default() };
    let (model, history) = train(&examples, &config, grid, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    write_json(&ckpt, &model).unwrap();
    assert_eq!(read_json::<LinearScorer>(&ckpt).unwrap(), model);
    let hist = dir.path().join("history.csv");
    write_csv(&hist, &history.records).unwrap();
    assert_eq!(read_csv::<EpochRecord>(&hist).unwrap(), history.records);
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z0-9_\\-\"\\\\é ]{1,12}"
}

proptest! {
    #[test]
    fn any_record_round_trips(
        rows in prop::collection::vec(
            (ident(), ident(), ident(), any::<f64>().prop_filter("finite", |x| x.is_finite()),
             prop::collection::vec(ident(), 0..3)),
            1..20),
    ) {
        let records: Vec<AnnotationRecord> = rows
            .into_iter()
            .map(|(video_id, dimension, rater_id, score, tags)| AnnotationRecord { video_id, dimension, rater_id, score, tags })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        write_jsonl(&path, &records).unwrap();
        let back: Vec<AnnotationRecord> = read_jsonl(&path).unwrap();
        for (a, b) in records.iter().zip(&back) {
            prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
        prop_assert_eq!(back, records);
    }

    #[test]
    fn predictions_round_trip_bit_exact(scores in prop::collection::vec(-1e300..1e300f64, 1..30)) {
        let rows: Vec<PredictionRow> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| PredictionRow { video_id: format!("v{i}"), dimension: "d".into(), score: s })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        write_jsonl(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert!(text.ends_with('\n') && !text.contains('\r'));
        let back: Vec<PredictionRow> = read_jsonl(&path).unwrap();
        prop_assert_eq!(back, rows);
    }
}
