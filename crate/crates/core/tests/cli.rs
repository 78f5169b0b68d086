use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_phonolab");

// Tiny networks and a handful of epochs: this exercises the plumbing, not quality.
const FAST_CONFIG: &str = "\
[analyzer]
hidden = 16
epochs = 2
frame_stride = 4

[synth]
hidden = 16,16
epochs = 2

[toy]
utterances = 6
";

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_for_every_subcommand() {
    for sub in [
        "train-analyzer",
        "train-synth",
        "analyze",
        "synthesize",
        "vocode",
        "atoms",
        "compose",
        "tts",
        "eval-matrix",
        "eval-intel",
        "make-toy-corpus",
        "lint-config",
    ] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["vocode"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_file_is_named() {
    let out = run(&["eval-intel", "--ref", "/nonexistent/ref.txt", "--hyp", "/nonexistent/hyp.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/ref.txt"));
}

#[test]
fn toy_corpus_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["make-toy-corpus", "--utterances", "3", "--seed", "11", "--out", s(&a)]);
    ok(&["make-toy-corpus", "--utterances", "3", "--seed", "11", "--out", s(&b)]);
    for rel in ["manifest.tsv", "lexicon.txt", "wav/utt0002.wav", "lab/utt0002.lab"] {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let c = dir.path().join("c");
    ok(&["make-toy-corpus", "--utterances", "3", "--seed", "12", "--out", s(&c)]);
    assert_ne!(fs::read(a.join("wav/utt0000.wav")).unwrap(), fs::read(c.join("wav/utt0000.wav")).unwrap());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("fast.ini");
    fs::write(&cfg, FAST_CONFIG).unwrap();
    assert!(ok(&["lint-config", s(&cfg)]).contains("ok"));

    let corpus = d.join("corpus");
    let manifest = corpus.join("manifest.tsv");
    ok(&["--config", s(&cfg), "make-toy-corpus", "--out", s(&corpus)]);
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 6);

    let bank = d.join("bank");
    let report = ok(&["--config", s(&cfg), "train-analyzer", "--manifest", s(&manifest), "--out", s(&bank)]);
    assert!(report.contains("mean held-out accuracy"));
    assert!(bank.join("accuracy.txt").is_file());

    let model = d.join("model");
    ok(&[
        "--config",
        s(&cfg),
        "train-synth",
        "--manifest",
        s(&manifest),
        "--bank",
        s(&bank),
        "--out",
        s(&model),
    ]);

    let wav = corpus.join("wav/utt0000.wav");
    let post = d.join("z.csv");
    ok(&["analyze", "--bank", s(&bank), s(&wav), s(&post)]);
    let text = fs::read_to_string(&post).unwrap();
    assert!(text.starts_with("# system=GP"));
    assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 12);

    let synth = d.join("s.wav");
    ok(&["synthesize", "--model", s(&model), s(&post), s(&synth)]);
    let vocoded = d.join("v.wav");
    ok(&["vocode", "--bank", s(&bank), "--model", s(&model), "--original-pitch", s(&wav), s(&vocoded)]);
    // Same frame count either way, so identical file sizes.
    assert_eq!(fs::metadata(&synth).unwrap().len(), fs::metadata(&vocoded).unwrap().len());

    let spoken = d.join("t.wav");
    let phones = ok(&[
        "tts",
        "--model",
        s(&model),
        "--lexicon",
        s(&corpus.join("lexicon.txt")),
        "--text",
        "seem moon",
        "--out",
        s(&spoken),
    ]);
    assert!(phones.contains("sil s iy m m uw n sil"), "{phones}");

    let atoms = d.join("atoms");
    ok(&["atoms", "generate", "--model", s(&model), "--duration", "0.3", "--out", s(&atoms)]);
    assert_eq!(fs::read_dir(&atoms).unwrap().count(), 12);
    ok(&["compose", "--model", s(&model), "--phone", "iy", "--duration", "0.3", "--out", s(&d.join("iy.wav"))]);

    let matrix = d.join("m.csv");
    let natural = d.join("natural.pgm");
    let summary = ok(&[
        "eval-matrix",
        "--test",
        s(&manifest),
        "--ref",
        s(&manifest),
        "--out",
        s(&matrix),
        "--natural-out",
        s(&natural),
    ]);
    assert!(summary.contains("diagonal mean"));
    assert!(fs::read_to_string(&matrix).unwrap().starts_with("phone,"));
    // The scaled natural matrix has its column minimum, 1.0, on the diagonal.
    let pgm = fs::read_to_string(&natural).unwrap();
    let first_row: Vec<&str> = pgm.lines().nth(4).unwrap().split(' ').collect();
    assert_eq!(first_row[0], "0");

    // A model for one feature system cannot vocode through a bank of another.
    let spe_bank = d.join("spe_bank");
    ok(&[
        "--config",
        s(&cfg),
        "train-analyzer",
        "--system",
        "spe",
        "--manifest",
        s(&manifest),
        "--out",
        s(&spe_bank),
    ]);
    let out = run(&["vocode", "--bank", s(&spe_bank), "--model", s(&model), s(&wav), s(&d.join("x.wav"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}
