//! Seeded synthetic speech corpus for tests and demos.
//!
//! Every phone is an AR(4) source-filter model: two resonances excited by a
//! glottal pulse train (voiced phones) or white noise (fricatives), with
//! low-level noise for silence.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{write_htk_labels, write_manifest, write_wav, Lexicon};
use crate::dsp::{samples_for_frames, Waveform, FRAME_SHIFT, SAMPLE_RATE};
use crate::error::Result;
use crate::phonoset::{PhoneAlignment, PhoneSpan, SILENCE};

#[derive(Debug, Clone, Copy)]
struct PhoneModel {
    phone: &'static str,
    /// Two (centre Hz, bandwidth Hz) resonances.
    resonances: [(f64, f64); 2],
    voiced: bool,
    rms: f64,
}

const PHONES: [PhoneModel; 10] = [
    PhoneModel { phone: SILENCE, resonances: [(1000.0, 900.0), (3000.0, 900.0)], voiced: false, rms: 0.001 },
    PhoneModel { phone: "aa", resonances: [(750.0, 90.0), (1200.0, 110.0)], voiced: true, rms: 0.12 },
    PhoneModel { phone: "iy", resonances: [(300.0, 60.0), (2300.0, 120.0)], voiced: true, rms: 0.10 },
    PhoneModel { phone: "uw", resonances: [(320.0, 70.0), (850.0, 90.0)], voiced: true, rms: 0.10 },
    PhoneModel { phone: "eh", resonances: [(550.0, 80.0), (1800.0, 120.0)], voiced: true, rms: 0.11 },
    PhoneModel { phone: "m", resonances: [(250.0, 60.0), (1100.0, 250.0)], voiced: true, rms: 0.05 },
    PhoneModel { phone: "n", resonances: [(280.0, 60.0), (1700.0, 250.0)], voiced: true, rms: 0.05 },
    PhoneModel { phone: "s", resonances: [(4500.0, 400.0), (6500.0, 600.0)], voiced: false, rms: 0.04 },
    PhoneModel { phone: "f", resonances: [(1500.0, 1200.0), (5000.0, 1500.0)], voiced: false, rms: 0.02 },
    PhoneModel { phone: "l", resonances: [(420.0, 80.0), (1350.0, 150.0)], voiced: true, rms: 0.07 },
];

/// Words spelled with the toy phones, CMUdict style.
const TOY_LEXICON: [(&str, &[&str]); 10] = [
    ("SEEM", &["S", "IY1", "M"]),
    ("MOON", &["M", "UW1", "N"]),
    ("MESS", &["M", "EH1", "S"]),
    ("LEAF", &["L", "IY1", "F"]),
    ("NOON", &["N", "UW1", "N"]),
    ("FEEL", &["F", "IY1", "L"]),
    ("MEAL", &["M", "IY1", "L"]),
    ("SELL", &["S", "EH1", "L"]),
    ("FALL", &["F", "AA1", "L"]),
    ("MALL", &["M", "AA1", "L"]),
];

/// Phones covered by the toy voice, silence first.
pub fn toy_phones() -> Vec<&'static str> {
    PHONES.iter().map(|p| p.phone).collect()
}

pub fn toy_lexicon() -> Lexicon {
    let mut lex = Lexicon::default();
    for (w, p) in TOY_LEXICON {
        lex.insert(w, p).expect("toy lexicon uses CMUbet symbols");
    }
    lex
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub utterances: usize,
    /// Non-silence phones per utterance, inclusive range.
    pub phones_per_utterance: (usize, usize),
    /// Frames per non-silence phone, inclusive range.
    pub phone_frames: (usize, usize),
    pub silence_frames: (usize, usize),
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 7,
            utterances: 200,
            phones_per_utterance: (6, 10),
            phone_frames: (8, 20),
            silence_frames: (10, 25),
        }
    }
}

fn resonator(freq: f64, bw: f64) -> [f64; 2] {
    let fs = f64::from(SAMPLE_RATE);
    let r = (-PI * bw / fs).exp();
    [-2.0 * r * (2.0 * PI * freq / fs).cos(), r * r]
}

fn ar4(m: &PhoneModel) -> [f64; 4] {
    let [a1, a2] = resonator(m.resonances[0].0, m.resonances[0].1);
    let [b1, b2] = resonator(m.resonances[1].0, m.resonances[1].1);
    [a1 + b1, a2 + a1 * b1 + b2, a1 * b2 + a2 * b1, a2 * b2]
}

fn model(phone: &str) -> &'static PhoneModel {
    PHONES.iter().find(|p| p.phone == phone).expect("toy phone")
}

/// Renders a phone sequence; deterministic for a given `rng` state.
pub fn render_alignment(align: &PhoneAlignment, rng: &mut ChaCha8Rng) -> Waveform {
    let frames = align.num_frames();
    let total = samples_for_frames(frames);
    let fs = f64::from(SAMPLE_RATE);
    let base_f0 = rng.random_range(100.0..140.0);
    let drift_rate = rng.random_range(0.3..1.0);
    let mut out = vec![0.0; total];
    let mut hist = [0.0f64; 4];
    let mut glottal = [0.0f64; 2];
    let mut phase = 0.0;
    let spans = align.entries();
    for (i, span) in spans.iter().enumerate() {
        let m = model(&span.phone);
        let a = ar4(m);
        let start = span.start * FRAME_SHIFT;
        // The last span also covers the tail of the final window.
        let end = if i + 1 == spans.len() { total } else { span.end * FRAME_SHIFT };
        let mut seg = Vec::with_capacity(end - start);
        for n in start..end {
            let t = n as f64 / fs;
            let f0 = base_f0 * (1.0 + 0.08 * (2.0 * PI * drift_rate * t).sin());
            phase += f0 / fs;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            let noise: f64 = rng.sample(StandardNormal);
            let e = if m.voiced {
                // Two real poles give the pulses a glottal spectral tilt.
                let g = pulse + 0.9 * glottal[0];
                let g2 = g + 0.9 * glottal[1];
                glottal = [g, g2];
                g2 + 0.02 * noise
            } else {
                noise
            };
            let y = e - a[0] * hist[0] - a[1] * hist[1] - a[2] * hist[2] - a[3] * hist[3];
            hist = [y, hist[0], hist[1], hist[2]];
            seg.push(y);
        }
        let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len().max(1) as f64).sqrt();
        let scale = if rms > 0.0 { m.rms / rms } else { 0.0 };
        for (o, v) in out[start..end].iter_mut().zip(&seg) {
            *o = (v * scale).clamp(-1.0, 1.0);
        }
    }
    Waveform::from_samples(out)
}

fn random_alignment(cfg: &ToyConfig, rng: &mut ChaCha8Rng) -> PhoneAlignment {
    let mut spans = Vec::new();
    let mut t = 0;
    let mut push = |phone: &str, len: usize, t: &mut usize| {
        spans.push(PhoneSpan::new(phone, *t, *t + len));
        *t += len;
    };
    let sil = |rng: &mut ChaCha8Rng| rng.random_range(cfg.silence_frames.0..=cfg.silence_frames.1);
    let len = sil(rng);
    push(SILENCE, len, &mut t);
    let count = rng.random_range(cfg.phones_per_utterance.0..=cfg.phones_per_utterance.1);
    let mut prev = 0;
    for _ in 0..count {
        let mut idx = rng.random_range(1..PHONES.len());
        if idx == prev {
            idx = 1 + idx % (PHONES.len() - 1);
        }
        prev = idx;
        let len = rng.random_range(cfg.phone_frames.0..=cfg.phone_frames.1);
        push(PHONES[idx].phone, len, &mut t);
    }
    let len = sil(rng);
    push(SILENCE, len, &mut t);
    PhoneAlignment::new(spans).expect("contiguous by construction")
}

/// Generates `(waveform, alignment)` pairs in memory.
pub fn generate_toy_utterances(cfg: &ToyConfig) -> Vec<(Waveform, PhoneAlignment)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.utterances)
        .map(|_| {
            let align = random_alignment(cfg, &mut rng);
            let wav = render_alignment(&align, &mut rng);
            (wav, align)
        })
        .collect()
}

/// Writes `wav/`, `lab/`, `manifest.tsv` and `lexicon.txt` under `out`;
/// returns the manifest path.
pub fn make_toy_corpus(out: &Path, cfg: &ToyConfig) -> Result<PathBuf> {
    fs::create_dir_all(out.join("wav"))?;
    fs::create_dir_all(out.join("lab"))?;
    let mut pairs = Vec::with_capacity(cfg.utterances);
    for (i, (wav, align)) in generate_toy_utterances(cfg).iter().enumerate() {
        let w = PathBuf::from(format!("wav/utt{i:04}.wav"));
        let l = PathBuf::from(format!("lab/utt{i:04}.lab"));
        write_wav(wav, &out.join(&w))?;
        write_htk_labels(align, &out.join(&l))?;
        pairs.push((w, l));
    }
    let manifest = out.join("manifest.tsv");
    write_manifest(&manifest, &pairs)?;
    let mut lex = String::from(";;; toy lexicon\n");
    for (w, p) in TOY_LEXICON {
        lex.push_str(&format!("{w}  {}\n", p.join(" ")));
    }
    crate::error::write_bytes(&out.join("lexicon.txt"), lex)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::lpc_to_lsp;
    use crate::phonoset::{load_system, validate_system, SystemName};

    #[test]
    fn phone_filters_are_stable() {
        for m in &PHONES {
            assert!(lpc_to_lsp(&ar4(m)).is_ok(), "{}", m.phone);
        }
    }

    #[test]
    fn toy_phones_have_distinct_rows_everywhere() {
        for name in SystemName::ALL {
            let sys = load_system(name);
            let rows: Vec<&[f64]> = toy_phones().iter().map(|p| sys.row(p).unwrap()).collect();
            for i in 0..rows.len() {
                for j in i + 1..rows.len() {
                    assert_ne!(rows[i], rows[j], "{name}");
                }
            }
            let _ = validate_system(&sys);
        }
    }

    #[test]
    fn deterministic_and_frame_exact() {
        let cfg = ToyConfig {
            utterances: 3,
            ..ToyConfig::default()
        };
        let a = generate_toy_utterances(&cfg);
        assert_eq!(a, generate_toy_utterances(&cfg));
        for (w, al) in &a {
            assert_eq!(w.num_frames(), al.num_frames());
            assert!(w.samples().iter().all(|s| s.abs() <= 1.0));
        }
    }

    #[test]
    fn lexicon_words_use_toy_phones() {
        let lex = toy_lexicon();
        let phones = toy_phones();
        for w in lex.words() {
            assert!(lex.first(w).unwrap().iter().all(|p| phones.contains(&p.as_str())));
        }
    }
}
