use std::fs;

use phonolab::analyzer::{AnalyzerBank, ANALYZER_INPUT};
use phonolab::dsp::Waveform;
use phonolab::error::Error;
use phonolab::neural::{init_network, Head};
use phonolab::phonoset::{load_system, PosteriorMatrix, SystemName};
use phonolab::synthesizer::{RenderOptions, SynthModel};

fn tone() -> Waveform {
    let x = (0..4000).map(|n| 0.3 * (n as f64 * 0.07).sin()).collect();
    Waveform::from_samples(x)
}

#[test]
fn bank_round_trip_preserves_posteriors() {
    let gp = load_system(SystemName::Gp);
    let nets = (0..gp.width())
        .map(|k| init_network(&[ANALYZER_INPUT, 8, 2], Head::Softmax, k as u64).unwrap())
        .collect();
    let bank = AnalyzerBank::new(gp, nets).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    let back = AnalyzerBank::load(dir.path()).unwrap();
    assert_eq!(back, bank);
    assert_eq!(back.analyze(&tone()), bank.analyze(&tone()));
    // `A` and `a` must not share a file.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 13);
}

#[test]
fn missing_net_is_reported_by_name() {
    let spe = load_system(SystemName::Spe);
    let nets = (0..spe.width())
        .map(|k| init_network(&[ANALYZER_INPUT, 4, 2], Head::Softmax, k as u64).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    AnalyzerBank::new(spe, nets).unwrap().save(dir.path()).unwrap();
    let victim = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "net"))
        .unwrap();
    fs::remove_file(&victim).unwrap();
    match AnalyzerBank::load(dir.path()) {
        Err(Error::MissingFiles(v)) => assert_eq!(v, vec![victim]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn synth_model_round_trip_renders_identically() {
    let espe = load_system(SystemName::Espe);
    let m = SynthModel::untrained(&espe, &[16, 16], 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    m.save(dir.path()).unwrap();
    let back = SynthModel::load(dir.path()).unwrap();
    assert_eq!(back, m);
    let mut row = vec![0.0; espe.width()];
    row[3] = 1.0;
    let z = PosteriorMatrix::new(vec![row; 30], espe.name(), 0.01);
    let opts = RenderOptions::default();
    assert_eq!(back.render(&z, &opts).unwrap(), m.render(&z, &opts).unwrap());

    let wrong = PosteriorMatrix::new(vec![vec![0.0; 12]; 30], "GP", 0.01);
    assert!(matches!(m.render(&wrong, &opts), Err(Error::SystemMismatch(..))));

    fs::remove_file(dir.path().join("gv.txt")).unwrap();
    assert!(matches!(SynthModel::load(dir.path()), Err(Error::MissingFiles(_))));
}
