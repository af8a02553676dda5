use avfd::checkpoint::Checkpoint;
use avfd::config::RunConfig;
use avfd::features::{self, Encoders};
use avfd::manifest;
use avfd::pipeline;
use avfd::synth::{self, SynthConfig};
use avfd_core::data::Split;
use avfd_core::training;

#[test]
fn training_on_the_synthetic_set_lowers_loss_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(&SynthConfig::default(), dir.path()).unwrap();
    let path = dir.path().join("manifest.txt");
    let config = RunConfig::default();
    let ck = pipeline::train(&path, &config).unwrap();
    assert_eq!(ck.epochs, 30);

    let (first, last) = training::loss_trend(&ck.history, 0.2).unwrap();
    assert!(last < first, "final fifth {last} not below first fifth {first}");

    let saved = dir.path().join("model.avfd");
    ck.save(&saved).unwrap();
    let back = Checkpoint::load(&saved).unwrap();
    let m = manifest::load(&path).unwrap();
    let enc = Encoders::build(&config).unwrap();
    let batch: Vec<_> =
        m.split(Split::Train).take(16).map(|r| features::extract_raw(r, dir.path(), &enc, None).unwrap()).collect();
    let weights = config.loss_weights();
    let before = ck.detector.total_loss(&batch, &enc.text, weights).unwrap();
    let after = back.detector.total_loss(&batch, &enc.text, weights).unwrap();
    assert!((before.total - after.total).abs() < 1e-6);
    assert_eq!(back.history, ck.history);
}

#[test]
fn zero_epochs_keep_the_initial_detector() {
    let dir = tempfile::tempdir().unwrap();
    synth::generate(&SynthConfig { n: 6, ..Default::default() }, dir.path()).unwrap();
    let mut config = RunConfig::default();
    config.apply_overrides(&["epochs=0", "dim=16", "raw_dim=8"]).unwrap();
    let ck = pipeline::train(&dir.path().join("manifest.txt"), &config).unwrap();
    let init = Checkpoint::initial(config, ck.prompts.clone()).unwrap();
    assert_eq!(ck.detector, init.detector);
    assert!(ck.history.is_empty());
}
