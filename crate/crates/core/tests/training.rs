use stsmix::data::{generate, load_dataset, write_dataset, DatasetSpec, Split};
use stsmix::model::{prepare_clip, ModelConfig, PreparedClip, StsMixer};
use stsmix::train::{
    batch_loss, evaluate, load_checkpoint, lr_at, prepare_split, train_loop, RunConfig, TrainOutputs, METRICS_CSV_HEADER,
};

fn small_model() -> ModelConfig {
    ModelConfig {
        channels: 32,
        anchors: 16,
        group_size: 16,
        ..ModelConfig::default()
    }
}

fn prepared(spec: &DatasetSpec, model: &ModelConfig) -> Vec<PreparedClip> {
    generate(spec)
        .unwrap()
        .iter()
        .map(|c| prepare_clip(&c.video, model, 1).unwrap())
        .collect()
}

fn no_outputs() -> TrainOutputs<'static> {
    TrainOutputs {
        metrics_csv: None,
        checkpoint: None,
    }
}

#[test]
fn schedule_steps_down_tenfold_at_each_decay() {
    let cfg = RunConfig::default();
    for epoch in 0..50 {
        let passed = cfg.decay_epochs.iter().filter(|&&e| e <= epoch).count() as i32;
        let expected = [0.01, 0.001, 0.0001][passed as usize];
        assert_eq!(lr_at(epoch, &cfg), expected, "epoch {epoch}");
        assert!((lr_at(epoch, &cfg) - 0.01 * 0.1f64.powi(passed)).abs() <= 1e-18);
    }
}

#[test]
fn one_epoch_over_eight_clips_at_batch_four_takes_two_steps() {
    let model = ModelConfig {
        channels: 16,
        anchors: 8,
        group_size: 8,
        k: 4,
        f_low: 2,
        f_high: 5,
        blocks: 1,
        ..ModelConfig::default()
    };
    let spec = DatasetSpec {
        clips: 2,
        frames: 4,
        points: 32,
        ..DatasetSpec::default()
    };
    let clips = prepared(&spec, &model);
    assert_eq!(clips.len(), 8);
    let cfg = RunConfig {
        model,
        epochs: 1,
        batch_size: 4,
        ..RunConfig::default()
    };
    let out = train_loop(&cfg, &clips, &[], no_outputs()).unwrap();
    assert_eq!(out.steps, 2);
    assert_eq!(out.history.len(), 1);
}

#[test]
fn first_step_lowers_the_loss() {
    let model = small_model();
    let spec = DatasetSpec {
        clips: 2,
        noise_sigma: 0.0,
        seed: 4,
        ..DatasetSpec::default()
    };
    let clips = prepared(&spec, &model);
    let cfg = RunConfig {
        model,
        epochs: 1,
        batch_size: clips.len(),
        lr0: 0.01,
        ..RunConfig::default()
    };
    let all: Vec<&PreparedClip> = clips.iter().collect();
    let (net, init) = StsMixer::new(&cfg.model, cfg.seed).unwrap();
    let before = batch_loss(&net, &init, &all, None).unwrap();
    let out = train_loop(&cfg, &clips, &[], no_outputs()).unwrap();
    assert_eq!(out.steps, 1);
    let after = batch_loss(&out.model, &out.params, &all, None).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn same_seed_gives_identical_metrics_and_checkpoint() {
    let model = small_model();
    let spec = DatasetSpec {
        clips: 2,
        seed: 9,
        ..DatasetSpec::default()
    };
    let clips = prepared(&spec, &model);
    let (train, val) = clips.split_at(4);
    let cfg = RunConfig {
        model,
        epochs: 3,
        seed: 21,
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let ckpt = dir.path().join(format!("{tag}.ckpt"));
        let outputs = TrainOutputs {
            metrics_csv: Some(&csv),
            checkpoint: Some(&ckpt),
        };
        train_loop(&cfg, train, val, outputs).unwrap();
        (std::fs::read(csv).unwrap(), std::fs::read(ckpt).unwrap())
    };
    let (csv_a, ckpt_a) = run("a");
    let (csv_b, ckpt_b) = run("b");
    assert_eq!(csv_a, csv_b);
    assert_eq!(ckpt_a, ckpt_b);

    let text = String::from_utf8(csv_a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], METRICS_CSV_HEADER);
    assert_eq!(lines.len(), 1 + cfg.epochs);

    let (stored, _, _) = load_checkpoint(&dir.path().join("a.ckpt"), Some(&cfg)).unwrap();
    assert_eq!(stored, cfg);
}

#[test]
fn overfits_sixteen_noise_free_clips_within_two_hundred_steps() {
    let model = small_model();
    let spec = DatasetSpec {
        clips: 4,
        noise_sigma: 0.0,
        seed: 1,
        ..DatasetSpec::default()
    };
    let clips = prepared(&spec, &model);
    assert_eq!(clips.len(), 16);
    let cfg = RunConfig {
        model,
        epochs: 50,
        batch_size: 4,
        decay_epochs: vec![30, 40],
        ..RunConfig::default()
    };
    let out = train_loop(&cfg, &clips, &[], no_outputs()).unwrap();
    assert!(out.steps <= 200);
    let acc = evaluate(&out.model, &out.params, &clips).unwrap().accuracy;
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn written_dataset_loads_back_identically() {
    let spec = DatasetSpec {
        clips: 2,
        frames: 4,
        points: 48,
        seed: 12,
        ..DatasetSpec::default()
    };
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &spec).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    let fresh = generate(&spec).unwrap();
    assert_eq!(loaded.clips.len(), fresh.len());
    for (a, b) in loaded.clips.iter().zip(&fresh) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.split, b.split);
        assert_eq!(a.label, b.label);
        assert_eq!(a.video, b.video);
    }
    let cfg = RunConfig {
        model: small_model(),
        ..RunConfig::default()
    };
    let train = prepare_split(&loaded, Split::Train, &cfg, 2).unwrap();
    let test = prepare_split(&loaded, Split::Test, &cfg, 1).unwrap();
    assert_eq!(train.len() + test.len(), fresh.len());
    assert!(!train.is_empty() && !test.is_empty());
}
