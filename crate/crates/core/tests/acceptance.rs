//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL but do not fail the
//! process; any other failure does.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phonolab::analyzer::{train_analyzer_bank, AnalyzerBank, AnalyzerConfig};
use phonolab::atoms::{compose, compose_features, compose_phone, generate_atoms, AtomSet, GP_OE_RECIPE, GP_Y_RECIPE};
use phonolab::dsp::{
    all_pole_filter, append_deltas, estimate_f0, estimate_formants, frame_signal, lpc_to_lsp, lsp_to_lpc,
    reflection_to_lpc, F0_MAX, F0_MIN,
};
use phonolab::eval::{
    build_exemplars, diagonal_mean, distance_matrix, intelligibility_score, mcd, normalize, scale_natural,
    stationary_exemplars, DistanceMatrix, PhoneExemplarSet,
};
use phonolab::neural::{gradient_check, init_network, train, Head, Network, TrainConfig};
use phonolab::phonoset::{
    canonical_posteriors, load_system, nearest_phoneme, validate_system, SystemName, SILENCE,
};
use phonolab::synthesizer::{
    extract_targets, mlpg_smooth, train_synthesizer, RenderOptions, SpeechParamTrack, SynthConfig, SynthModel,
    PARAM_DIM, STATIC_DIM, SYNTH_CONTEXT,
};
use phonolab::toy::{generate_toy_utterances, toy_lexicon, toy_phones, ToyConfig};
use phonolab::tts::{tts_synthesize, DurationTable, TtsInput};

/// Criteria expected to stay red, with the reason printed beside them.
const KNOWN_RED: &[(usize, &str)] = &[(1, "printed GP and eSPE tables contain identical rows")];

// Criterion 2
const LSP_TRIALS: usize = 1000;
const LSP_ORDER: usize = 24;
const LSP_ROUND_TRIP_TOL: f64 = 1e-6;
const FLAT_LSP_TOL: f64 = 1e-9;
const F0_REL_TOL: f64 = 0.03;
const FORMANT_TOL_HZ: f64 = 50.0;
// Criterion 3
const GRADIENT_TOL: f64 = 1e-5;
// Criterion 4
const MLPG_TOL: f64 = 1e-8;
const LARGE_VARIANCE: f64 = 1e12;
// Criterion 5
const MCD_UNIT: f64 = 6.1418;
const MCD_TOL: f64 = 1e-4;
const INTEL_EXPECTED: f64 = 66.67;
const INTEL_TOL: f64 = 0.01;
// Criteria 6, 7, 9
const TRAIN_SEED: u64 = 7;
const TRAIN_UTTERANCES: usize = 200;
const REFERENCE_SEED: u64 = 1007;
const REFERENCE_UTTERANCES: usize = 30;
const ANALYZER_MIN_ACCURACY: f64 = 0.9;
const DIAGONAL_MIN_SHARE: f64 = 0.7;
const COMPOSED_EXEMPLARS: usize = 10;
const TTS_TEXT: &str = "seem moon, mess leaf noon. feel meal sell fall mall";
const TTS_MIN_SHARE: f64 = 0.6;

const BUDGETS: [Duration; 10] = [
    Duration::ZERO,
    Duration::from_secs(1),
    Duration::from_secs(30),
    Duration::from_secs(60),
    Duration::from_secs(5),
    Duration::from_secs(1),
    Duration::from_secs(15 * 60),
    Duration::MAX,
    Duration::from_secs(10),
    Duration::from_secs(120),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Report {
    unexpected: Vec<usize>,
}

impl Report {
    fn record(&mut self, n: usize, name: &str, elapsed: Duration, o: Outcome) {
        let in_budget = elapsed <= BUDGETS[n];
        let pass = o.pass && in_budget;
        let known = KNOWN_RED.iter().find(|(k, _)| *k == n);
        let budget = if BUDGETS[n] == Duration::MAX {
            "no budget".to_string()
        } else {
            format!("budget {:.0}s", BUDGETS[n].as_secs_f64())
        };
        let mut line = format!(
            "{} [{n}] {name}: {} ({:.2}s, {budget})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        if !in_budget {
            line.push_str(" over time budget");
        }
        if !pass {
            match known {
                Some((_, why)) => line.push_str(&format!(" [known red: {why}]")),
                None => self.unexpected.push(n),
            }
        }
        println!("{line}");
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, width, stacked) in [(SystemName::Gp, 12, 132), (SystemName::Spe, 15, 165), (SystemName::Espe, 21, 231)] {
        let sys = load_system(name);
        let report = validate_system(&sys);
        let dims = sys.width() == width && sys.width() * SYNTH_CONTEXT == stacked && sys.phonemes().len() == 40;
        ok &= dims && report.is_valid();
        let dups: Vec<String> = report.duplicate_rows().iter().map(|(a, b)| format!("{a}={b}")).collect();
        notes.push(format!(
            "{name}: K={} x11={} rows={} duplicates [{}]",
            sys.width(),
            sys.width() * SYNTH_CONTEXT,
            sys.phonemes().len(),
            dups.join(" ")
        ));
    }
    outcome(ok, notes.join("; "))
}

fn harmonic_pulses(f0: f64, len: usize) -> Vec<f64> {
    let harmonics = (4000.0 / f0) as usize;
    (0..len)
        .map(|n| {
            let t = n as f64 / 16_000.0;
            (1..=harmonics).map(|h| (2.0 * PI * h as f64 * f0 * t).cos()).sum::<f64>() / harmonics as f64
        })
        .collect()
}

fn resonator(freq: f64, bw: f64) -> [f64; 2] {
    let r = (-PI * bw / 16_000.0).exp();
    [-2.0 * r * (2.0 * PI * freq / 16_000.0).cos(), r * r]
}

fn two_resonator_vowel(f1: f64, f2: f64) -> Vec<f64> {
    let [a1, a2] = resonator(f1, 60.0);
    let [b1, b2] = resonator(f2, 90.0);
    let a = [a1 + b1, a2 + a1 * b1 + b2, a1 * b2 + a2 * b1, a2 * b2];
    let pulses: Vec<f64> = (0..1600).map(|n| if n % 160 == 0 { 1.0 } else { 0.0 }).collect();
    all_pole_filter(&a, &pulses)[800..1200].to_vec()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut lsp_failures = 0;
    for _ in 0..LSP_TRIALS {
        let k: Vec<f64> = (0..LSP_ORDER).map(|_| rng.random_range(-0.95..0.95)).collect();
        let a = reflection_to_lpc(&k);
        match lpc_to_lsp(&a).and_then(|l| lsp_to_lpc(&l)) {
            Ok(back) => worst = a.iter().zip(&back).map(|(x, y)| (x - y).abs()).fold(worst, f64::max),
            Err(_) => lsp_failures += 1,
        }
    }
    let flat = lpc_to_lsp(&[0.0; LSP_ORDER]).unwrap_or_default();
    let flat_err = if flat.len() == LSP_ORDER {
        flat.iter()
            .enumerate()
            .map(|(i, w)| (w - (i + 1) as f64 * PI / 25.0).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let mut f0_worst = 0.0f64;
    let mut f0 = 80.0;
    while f0 <= 400.0 {
        let est = estimate_f0(&harmonic_pulses(f0, 400), F0_MIN, F0_MAX).unwrap_or(0.0);
        f0_worst = f0_worst.max((est - f0).abs() / f0);
        f0 += 5.0;
    }
    let mut formant_worst = 0.0f64;
    for (f1, f2) in [(500.0, 1500.0), (300.0, 2300.0), (700.0, 1100.0), (400.0, 1900.0), (650.0, 1700.0)] {
        let est = estimate_formants(&two_resonator_vowel(f1, f2), 2);
        let err = if est.len() == 2 {
            (est[0].freq - f1).abs().max((est[1].freq - f2).abs())
        } else {
            f64::INFINITY
        };
        formant_worst = formant_worst.max(err);
    }
    let pass = lsp_failures == 0
        && worst < LSP_ROUND_TRIP_TOL
        && flat_err <= FLAT_LSP_TOL
        && f0_worst < F0_REL_TOL
        && formant_worst <= FORMANT_TOL_HZ;
    outcome(
        pass,
        format!(
            "LSP round trip max {worst:.2e} over {LSP_TRIALS} filters ({lsp_failures} failures); flat LSP err {flat_err:.1e}; \
             F0 80-400 Hz worst {:.2}%; formant worst {formant_worst:.1} Hz",
            100.0 * f0_worst
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for seed in 0..10 {
        for head in [Head::Softmax, Head::Linear] {
            let sizes = [4, 6, 5, 3];
            let mut net = init_network(&sizes, head, seed).unwrap();
            for l in net.layers_mut() {
                l.biases.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = match head {
                Head::Softmax => {
                    let mut t = vec![0.0; 3];
                    t[rng.random_range(0..3)] = 1.0;
                    t
                }
                Head::Linear => (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            worst = worst.max(gradient_check(&net, &x, &t, head.natural_loss()).unwrap_or(f64::INFINITY));
        }
    }
    let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let t = array![[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let cfg = TrainConfig {
        learning_rate: 1.0,
        batch_size: 4,
        epochs: 2000,
        early_stop_patience: 0,
        ..TrainConfig::classifier()
    };
    let net = init_network(&[2, 8, 2], Head::Softmax, 7).unwrap();
    let (xor, _) = train(&net, x.view(), t.view(), &cfg, None).unwrap();
    let y = xor.forward_batch(x.view()).unwrap();
    let correct = y
        .rows()
        .into_iter()
        .zip(t.rows())
        .filter(|(p, w)| (p[1] > p[0]) == (w[1] > w[0]))
        .count();
    let mut buf = Vec::new();
    xor.write_to(&mut buf).unwrap();
    let back = Network::read_from(buf.as_slice(), "memory").unwrap();
    let exact = back == xor && back.forward_batch(x.view()).unwrap() == y;
    outcome(
        worst < GRADIENT_TOL && correct == 4 && exact,
        format!("gradient check worst {worst:.2e}; XOR {correct}/4; serialization exact {exact}"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut exact_err = 0.0f64;
    for n in [1, 2, 5, 40] {
        let statics: Vec<Vec<f64>> =
            (0..n).map(|_| (0..STATIC_DIM).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let gv: Vec<f64> = (0..PARAM_DIM).map(|_| rng.random_range(0.01..3.0)).collect();
        let y = mlpg_smooth(&SpeechParamTrack::new(append_deltas(&statics)), &gv).unwrap();
        exact_err = y.iter().flatten().zip(statics.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(exact_err, f64::max);
    }
    let frames: Vec<Vec<f64>> =
        (0..30).map(|_| (0..PARAM_DIM).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut gv = vec![1.0; PARAM_DIM];
    gv[STATIC_DIM..].iter_mut().for_each(|v| *v = LARGE_VARIANCE);
    let y = mlpg_smooth(&SpeechParamTrack::new(frames.clone()), &gv).unwrap();
    let limit_err = y
        .iter()
        .zip(&frames)
        .flat_map(|(r, f)| r.iter().zip(&f[..STATIC_DIM]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    outcome(
        exact_err <= MLPG_TOL && limit_err <= MLPG_TOL,
        format!("consistent input max err {exact_err:.1e}; large-variance limit max err {limit_err:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let a = vec![0.0; 13];
    let mut b = a.clone();
    b[3] = 1.0;
    let unit = mcd(&a, &b).unwrap();
    let d = DistanceMatrix::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![vec![0.0, 1.0, 2.0], vec![5.0, 0.0, 4.0], vec![10.0, 3.0, 0.0]],
    )
    .unwrap();
    let s = scale_natural(&d);
    let col = [s.get(0, 0), s.get(1, 0), s.get(2, 0)];
    let ones = DistanceMatrix::new(d.labels.clone(), vec![vec![1.0; 3]; 3]).unwrap();
    let identity = normalize(&d, &ones).map(|n| n == d).unwrap_or(false);
    let intel = intelligibility_score(10, 2, 12);
    outcome(
        (unit - MCD_UNIT).abs() <= MCD_TOL
            && col == [1.0, 1.5, 2.0]
            && identity
            && (intel - INTEL_EXPECTED).abs() <= INTEL_TOL,
        format!("unit MCD {unit:.5} dB; scaled column {col:?}; all-ones identity {identity}; intelligibility {intel:.3}%"),
    )
}

/// Trained toy voice shared by the end-to-end criteria.
struct ToyVoice {
    bank: AnalyzerBank,
    model: SynthModel,
    reference: PhoneExemplarSet,
    natural: DistanceMatrix,
}

fn exemplar_matrix(test: &PhoneExemplarSet, voice: &ToyVoice) -> DistanceMatrix {
    let raw = distance_matrix(test, &voice.reference).unwrap();
    let labels: Vec<&str> = raw.labels.iter().map(String::as_str).collect();
    normalize(&raw, &voice.natural.select(&labels).unwrap()).unwrap()
}

fn criterion_6() -> (Outcome, Option<ToyVoice>, f64) {
    let gp = load_system(SystemName::Gp);
    let train_set = generate_toy_utterances(&ToyConfig {
        seed: TRAIN_SEED,
        utterances: TRAIN_UTTERANCES,
        ..ToyConfig::default()
    });
    let minutes = train_set.iter().map(|(w, _)| w.duration()).sum::<f64>() / 60.0;
    let refs = generate_toy_utterances(&ToyConfig {
        seed: REFERENCE_SEED,
        utterances: REFERENCE_UTTERANCES,
        ..ToyConfig::default()
    });
    let pairs: Vec<_> = train_set.iter().map(|(w, a)| (w, a)).collect();
    let acfg = AnalyzerConfig {
        train: TrainConfig {
            learning_rate: 0.5,
            epochs: 20,
            ..TrainConfig::classifier()
        },
        frame_stride: 2,
        ..AnalyzerConfig::default()
    };
    let (bank, table) = train_analyzer_bank(&pairs, &gp, &acfg).unwrap();
    let accuracy = table.mean_heldout().unwrap_or(0.0);

    let data: Vec<_> = train_set
        .iter()
        .map(|(w, a)| (canonical_posteriors(&gp, a).unwrap(), extract_targets(w)))
        .collect();
    let scfg = SynthConfig {
        train: TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 60,
            ..TrainConfig::regressor()
        },
        ..SynthConfig::default()
    };
    let (model, synth_report) = train_synthesizer(&data, &gp, &scfg).unwrap();

    let ref_pairs: Vec<_> = refs.iter().map(|(w, a)| (w, a)).collect();
    let reference = build_exemplars(&ref_pairs);
    let natural = scale_natural(&distance_matrix(&reference, &reference).unwrap());
    let opts = RenderOptions::default();
    let vocoded: Vec<_> = refs
        .iter()
        .map(|(_, a)| model.render(&canonical_posteriors(&gp, a).unwrap(), &opts).unwrap())
        .collect();
    let voc_pairs: Vec<_> = vocoded.iter().zip(&refs).map(|(w, (_, a))| (w, a)).collect();
    let voice = ToyVoice {
        bank,
        model,
        reference,
        natural,
    };
    let d_norm = exemplar_matrix(&build_exemplars(&voc_pairs), &voice);
    let minima = d_norm.diagonal_row_minima();
    let share = minima.len() as f64 / d_norm.size() as f64;
    let network_mean = diagonal_mean(&d_norm);
    let detail = format!(
        "{minutes:.1} min of audio; analyzer held-out accuracy {:.4}; synth held-out mse {:.4} vs mean predictor {:.4}; \
         diagonal is row minimum for {}/{} phones ({:.0}%) [{}]",
        accuracy,
        synth_report.heldout_mse.unwrap_or(f64::NAN),
        synth_report.baseline_mse.unwrap_or(f64::NAN),
        minima.len(),
        d_norm.size(),
        100.0 * share,
        minima.join(" ")
    );
    (
        outcome(accuracy >= ANALYZER_MIN_ACCURACY && share >= DIAGONAL_MIN_SHARE, detail),
        Some(voice),
        network_mean,
    )
}

fn criterion_7(voice: &ToyVoice, network_mean: f64) -> (Outcome, AtomSet) {
    let atoms = generate_atoms(&voice.model, 2.0, &RenderOptions::default()).unwrap();
    let mut composed = PhoneExemplarSet::default();
    for p in toy_phones() {
        let w = compose_phone(&atoms, p).unwrap();
        for v in stationary_exemplars(&w, COMPOSED_EXEMPLARS) {
            composed.push(p, v);
        }
    }
    let d = exemplar_matrix(&composed, voice);
    let compositional_mean = diagonal_mean(&d);
    (
        outcome(
            compositional_mean >= network_mean,
            format!("diagonal mean compositional {compositional_mean:.3} vs network {network_mean:.3}"),
        ),
        atoms,
    )
}

fn criterion_8(atoms: &AtomSet) -> Outcome {
    let a = atoms.atom("A").unwrap();
    let single = compose(&[a], None).unwrap();
    let peak = a.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let identity = single
        .samples()
        .iter()
        .zip(a.samples())
        .all(|(y, x)| (y - x * 0.9 / peak).abs() < 1e-12);
    let forward = compose_features(atoms, &["A", "I", "U", "E"]).unwrap();
    let backward = compose_features(atoms, &["E", "U", "I", "A"]).unwrap();
    let permutation = forward
        .samples()
        .iter()
        .zip(backward.samples())
        .all(|(x, y)| (x - y).abs() < 1e-12);
    let mut recipe: Vec<&str> = GP_OE_RECIPE.to_vec();
    recipe.sort();
    let recipe_ok = recipe == ["A", "E", "I", "U"];
    let oe = frame_signal(&compose_features(atoms, &GP_OE_RECIPE).unwrap());
    let y = frame_signal(&compose_features(atoms, &GP_Y_RECIPE).unwrap());
    let fmt = |f: &[phonolab::dsp::Formant]| {
        if f.is_empty() {
            "none".to_string()
        } else {
            let hz: Vec<String> = f.iter().map(|x| format!("{:.0}", x.freq)).collect();
            format!("{} Hz", hz.join("/"))
        }
    };
    let oe_f = estimate_formants(&oe.frames[oe.len() / 2], 2);
    let y_f = estimate_formants(&y.frames[y.len() / 2], 2);
    outcome(
        identity && permutation && recipe_ok,
        format!(
            "single-atom identity {identity}; permutation invariance {permutation}; [oe] recipe {:?}; \
             diagnostic F1/F2 [oe] {}, [y] {}",
            GP_OE_RECIPE,
            fmt(&oe_f),
            fmt(&y_f)
        ),
    )
}

fn criterion_9(voice: &ToyVoice) -> Outcome {
    let gp = load_system(SystemName::Gp);
    let lex = toy_lexicon();
    let opts = RenderOptions::default();
    let input = TtsInput::Text(TTS_TEXT);
    let (w, align) = tts_synthesize(&input, &gp, &voice.model, Some(&lex), &DurationTable::default(), &opts).unwrap();
    let z = voice.bank.analyze(&w);
    let labels = align.frame_labels();
    let (mut hit, mut total) = (0usize, 0usize);
    for (row, want) in z.frames.iter().zip(&labels) {
        if *want == SILENCE {
            continue;
        }
        total += 1;
        hit += usize::from(nearest_phoneme(&gp, row).0 == *want);
    }
    let share = hit as f64 / total.max(1) as f64;
    let frames_match = w.num_frames() == align.num_frames();
    outcome(
        share >= TTS_MIN_SHARE && frames_match,
        format!("{hit}/{total} non-silence frames recovered ({:.1}%); frame count preserved {frames_match}", 100.0 * share),
    )
}

fn main() {
    // The test harness may pass filter arguments; this target ignores them.
    let mut report = Report { unexpected: Vec::new() };
    let (o, t) = timed(criterion_1);
    report.record(1, "feature tables", t, o);
    let (o, t) = timed(criterion_2);
    report.record(2, "DSP oracles", t, o);
    let (o, t) = timed(criterion_3);
    report.record(3, "neural correctness", t, o);
    let (o, t) = timed(criterion_4);
    report.record(4, "MLPG", t, o);
    let (o, t) = timed(criterion_5);
    report.record(5, "evaluation math", t, o);
    let ((o, voice, network_mean), t) = timed(criterion_6);
    report.record(6, "end-to-end toy vocoding", t, o);
    let voice = voice.expect("toy voice");
    let ((o, atoms), t) = timed(|| criterion_7(&voice, network_mean));
    report.record(7, "compositional vs network", t, o);
    let (o, t) = timed(|| criterion_8(&atoms));
    report.record(8, "atom semantics", t, o);
    let (o, t) = timed(|| criterion_9(&voice));
    report.record(9, "TTS round trip", t, o);
    if !report.unexpected.is_empty() {
        eprintln!("unexpected failures: {:?}", report.unexpected);
        std::process::exit(1);
    }
}
