use idan_core::data::synth_dataset;
use idan_core::diffmap::{random_cnn_extractor, EdgeOperator};
use idan_core::imgproc::StructuringElement;
use idan_core::model::{encode_checkpoint, IdanModel, ModelConfig, UNetConfig};
use idan_core::training::{evaluate, prepare, train_prepared, PriorBuilder, TrainConfig};

fn priors(channels: usize) -> PriorBuilder {
    PriorBuilder {
        extractor: Box::new(random_cnn_extractor(42, channels).unwrap()),
        edge: EdgeOperator::default(),
        kernel: StructuringElement::square(3).unwrap(),
    }
}

#[test]
fn loss_decreases_over_the_first_five_epochs() {
    let samples = synth_dataset(42, 24, 32).unwrap();
    let data = prepare(&samples, Some(&priors(8))).unwrap();
    let mut model = IdanModel::new(ModelConfig::idan(UNetConfig::desk(), 8), 42).unwrap();
    let cfg = TrainConfig { epochs: 5, learning_rate: 3e-4, seed: 42, ..TrainConfig::default() };
    let mut seen = Vec::new();
    let log = train_prepared(&mut model, &data, &cfg, Some(&data), &mut |r| seen.push(r.epoch)).unwrap();
    assert_eq!(seen, vec![1, 2, 3, 4, 5]);
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(log.epochs.iter().all(|e| e.validation.is_some()));
}

#[test]
fn training_is_deterministic_and_writes_checkpoints() {
    let samples = synth_dataset(9, 8, 16).unwrap();
    let data = prepare(&samples, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut model = IdanModel::new(ModelConfig::plain(UNetConfig::desk()), 1).unwrap();
        let path = dir.path().join(name);
        let cfg = TrainConfig { epochs: 2, seed: 3, checkpoint: Some(path.clone()), ..TrainConfig::default() };
        let log = train_prepared(&mut model, &data, &cfg, None, &mut |_| {}).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), encode_checkpoint(model.params()));
        (log.epochs.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>(), std::fs::read(path).unwrap())
    };
    assert_eq!(run("a.ckpt"), run("b.ckpt"));
}

#[test]
fn prior_mismatches_and_bad_configs_are_rejected() {
    let samples = synth_dataset(9, 4, 16).unwrap();
    let bare = prepare(&samples, None).unwrap();
    let mut idan = IdanModel::new(ModelConfig::idan(UNetConfig::desk(), 8), 1).unwrap();
    assert!(train_prepared(&mut idan, &bare, &TrainConfig::default(), None, &mut |_| {}).is_err());
    assert!(evaluate(&idan, &bare, 0.5, 2).is_err());
    let mut plain = IdanModel::new(ModelConfig::plain(UNetConfig::desk()), 1).unwrap();
    for cfg in [
        TrainConfig { threshold: 1.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { learning_rate: -1.0, ..TrainConfig::default() },
    ] {
        assert!(train_prepared(&mut plain, &bare, &cfg, None, &mut |_| {}).is_err());
    }
    assert!(train_prepared(&mut plain, &[], &TrainConfig::default(), None, &mut |_| {}).is_err());
}
