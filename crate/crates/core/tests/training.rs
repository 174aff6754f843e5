use fencenet::dataset::{prepare_samples, synth_generate, Preprocessing, SynthConfig, WindowSample};
use fencenet::models::{presets, Model};
use fencenet::training::{train, TrainConfig, TrainLog};
use fencenet::Error;

fn windows(n: usize) -> Vec<WindowSample> {
    let ds = synth_generate(&SynthConfig { num_fencers: 2, reps_per_action: 2, ..Default::default() }, 3);
    let all = prepare_samples(&ds, &Preprocessing::default(), 1, 28).unwrap();
    let step = (all.len() / n).max(1);
    all.into_iter().step_by(step).take(n).collect()
}

fn small_model(seed: u64) -> Model {
    Model::build(&presets::fencenet_small(18), seed).unwrap()
}

#[test]
fn same_seed_gives_identical_runs() {
    let data = windows(48);
    let cfg = TrainConfig { epochs: 3, batch_size: 16, seed: 5, ..Default::default() };
    let (a, log_a) = train(small_model(1), &data, &cfg).unwrap();
    let (b, log_b) = train(small_model(1), &data, &cfg).unwrap();
    assert!(log_a.same_run(&log_b));
    assert_eq!(a.params().to_bytes(), b.params().to_bytes());

    let other = TrainConfig { seed: 6, ..cfg };
    let (_, log_c) = train(small_model(1), &data, &other).unwrap();
    assert_ne!(log_a.param_checksum, log_c.param_checksum);
}

#[test]
fn one_epoch_changes_parameters_and_reaches_every_one() {
    let data = windows(16);
    let model = small_model(2);
    let before = model.params().checksum();
    let (model, log) = train(model, &data, &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
    assert_ne!(before, model.params().checksum());
    assert_eq!(log.param_checksum, model.params().checksum());
    assert!(log.untouched_params.is_empty(), "{:?}", log.untouched_params);
    assert_eq!(log.epochs.len(), 1);
    assert!(log.epochs[0].mean_loss.is_finite());
}

#[test]
fn zero_epochs_are_rejected() {
    let r = train(small_model(1), &windows(4), &TrainConfig { epochs: 0, ..Default::default() });
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn non_finite_loss_aborts_with_position() {
    let mut data = windows(8);
    data[3].data[0] = f32::NAN;
    let cfg = TrainConfig { epochs: 2, batch_size: 4, ..Default::default() };
    match train(small_model(1), &data, &cfg) {
        Err(Error::Numerical(msg)) => {
            assert!(msg.contains("non-finite") && msg.contains("epoch 1"), "{msg}");
            assert!(msg.contains("batch"), "{msg}");
            assert!(msg.contains("lr 0.001"), "{msg}");
        }
        other => panic!("expected a numerical error, got {other:?}"),
    }
}

#[test]
fn mismatched_windows_are_a_dimension_error() {
    let mut data = windows(4);
    data[1].channels = 12;
    data[1].data.truncate(12 * 28);
    let r = train(small_model(1), &data, &TrainConfig { epochs: 1, ..Default::default() });
    assert!(matches!(r, Err(Error::Dimension(_))));
}

#[test]
fn smoothed_loss_decreases_while_overfitting() {
    // Full batch without dropout: each epoch is one deterministic Adam step.
    let data = windows(32);
    let mut model_cfg = presets::fencenet_small(18);
    model_cfg.dropout_rate = 0.0;
    let model: Model = Model::build(&model_cfg, 3).unwrap();
    let cfg = TrainConfig { epochs: 60, batch_size: 32, seed: 1, ..Default::default() };
    let (_, log) = train(model, &data, &cfg).unwrap();
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.mean_loss).collect();
    let smoothed: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    assert!(smoothed.windows(2).all(|p| p[1] <= p[0]), "{smoothed:?}");
    assert!(losses.last().unwrap() < &(0.5 * losses[0]));
}

#[test]
fn log_round_trips_through_jsonl() {
    let data = windows(8);
    let (_, log) = train(small_model(1), &data, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    log.write_jsonl(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(TrainLog::read_jsonl(&path).unwrap(), log);
}
