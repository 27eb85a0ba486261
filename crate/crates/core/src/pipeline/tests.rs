use super::*;

fn tiny() -> PipelineConfig {
    PipelineConfig {
        corpus_words: 6000,
        vocab_size: 120,
        d: 8,
        baseline_epochs: 1,
        kd_epochs: 1,
        shared_epochs: 1,
        retrain_epochs: 1,
        seeds: vec![1, 2],
        ..Default::default()
    }
}

#[test]
fn defaults_match_the_desk_setup() {
    let c = PipelineConfig::default();
    assert_eq!((c.vocab_size, c.d, c.hyper().k, c.rank()), (2000, 64, 64, 16));
    assert_eq!(c.seeds.len(), 3);
    c.validate().unwrap();
    assert!(c.to_lines().contains("rank=16\n"));
}

#[test]
fn config_validation() {
    assert!(PipelineConfig { seeds: vec![1], ..tiny() }.validate().is_err());
    assert!(PipelineConfig { vocab_size: 4, ..tiny() }.validate().is_err());
    assert!(PipelineConfig { train_fraction: 0.95, ..tiny() }.validate().is_err());
}

#[test]
fn median_of_odd_and_even_counts() {
    assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
}

#[test]
fn tiny_pipeline_produces_every_stage() {
    let c = tiny();
    let data = DeskData::generate(&c).unwrap();
    assert_eq!(data.vocab.len(), 120);
    let dir = tempfile::tempdir().unwrap();
    let c = PipelineConfig { out_dir: Some(dir.path().to_path_buf()), ..c };
    let mut lines = Vec::new();
    let report = run_pipeline(&c, &data, &mut |l| lines.push(l.to_string())).unwrap();
    assert_eq!(report.runs.len(), 2);
    for run in &report.runs {
        let stages: Vec<Stage> = run.stages.iter().map(|r| r.stage).collect();
        assert_eq!(stages, Stage::ALL);
        let base = run.get(Stage::Baseline);
        assert_eq!(base.compression_rate, 1.0);
        for r in &run.stages {
            assert!(r.valid_pp.is_finite() && r.valid_pp > 1.0 && r.valid_pp < 120.0, "{r:?}");
            let file = dir.path().join(format!("seed{}-{}.nwpm", run.seed, r.stage.slug()));
            assert_eq!(std::fs::metadata(file).unwrap().len(), r.bytes);
        }
        let low = run.get(Stage::LowRank);
        let q = run.get(Stage::Quantized);
        assert!(q.bytes < low.bytes && low.bytes < run.get(Stage::Shared).bytes);
        assert!(q.compression_rate > low.compression_rate);
    }
    assert!(lines.iter().any(|l| l.starts_with("seed=2 stage=kd epoch=1 ")));
    let table = report.table();
    assert_eq!(table.lines().count(), 6);
    assert!(table.lines().nth(1).unwrap().starts_with("Baseline"));
    assert!(table.lines().nth(5).unwrap().starts_with("+Quantization"));
    assert_eq!(report.to_lines().lines().count(), 11);
}

#[test]
fn pipeline_is_deterministic() {
    let c = PipelineConfig { seeds: vec![3, 4], ..tiny() };
    let data = DeskData::generate(&c).unwrap();
    let strip = |r: PipelineReport| -> Vec<(f64, u64)> {
        r.runs.iter().flat_map(|s| s.stages.iter().map(|x| (x.valid_pp, x.bytes))).collect()
    };
    let a = strip(run_pipeline(&c, &data, &mut |_| {}).unwrap());
    let b = strip(run_pipeline(&c, &data, &mut |_| {}).unwrap());
    assert_eq!(a, b);
}
