//! Corpus manifests: one `wav<TAB>lab` pair per line, relative to the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::htk::parse_htk_str;
use super::wav::read_wav;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::phonoset::PhoneAlignment;

/// Frames by which labels may outrun the audio before it is an error.
pub const OVERSHOOT_TOLERANCE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// WAV file stem.
    pub id: String,
    pub wav: Waveform,
    pub alignment: PhoneAlignment,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub warnings: Vec<String>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_corpus(manifest: &Path) -> Result<Corpus> {
    let text = crate::error::read_text(manifest)?;
    let name = manifest.display().to_string();
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((wav, lab)) = line.split_once('\t') else {
            return Err(Error::parse(&name, i + 1, "expected `wav<TAB>lab`"));
        };
        pairs.push((resolve(base, wav.trim()), resolve(base, lab.trim())));
    }
    let missing: Vec<PathBuf> = pairs
        .iter()
        .flat_map(|(w, l)| [w, l])
        .filter(|p| !p.is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    let mut corpus = Corpus::default();
    for (wav_path, lab_path) in pairs {
        let wav = read_wav(&wav_path)?;
        let lab_text = crate::error::read_text(&lab_path)?;
        let (mut alignment, warns) = parse_htk_str(&lab_text, &lab_path.display().to_string())?;
        corpus.warnings.extend(warns);
        let (have, want) = (wav.num_frames(), alignment.num_frames());
        if want > have {
            if want - have > OVERSHOOT_TOLERANCE {
                return Err(Error::Data(format!(
                    "{}: labels cover {want} frames but the audio has {have}",
                    lab_path.display()
                )));
            }
            let msg = format!(
                "{}: clipped labels from {want} to {have} frames",
                lab_path.display()
            );
            log::warn!("{msg}");
            corpus.warnings.push(msg);
            alignment.truncate(have);
        }
        let id = wav_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        corpus.utterances.push(Utterance { id, wav, alignment });
    }
    Ok(corpus)
}

/// Writes `wav<TAB>lab` lines, storing paths as given.
pub fn write_manifest(path: &Path, pairs: &[(PathBuf, PathBuf)]) -> Result<()> {
    let mut out = String::new();
    for (w, l) in pairs {
        writeln!(out, "{}\t{}", w.display(), l.display()).expect("string write");
    }
    crate::error::write_bytes(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_htk_labels, write_wav};
    use crate::dsp::samples_for_frames;
    use crate::phonoset::PhoneSpan;

    fn fixture(dir: &Path, stem: &str, audio_frames: usize, label_frames: usize) -> (PathBuf, PathBuf) {
        let wav = dir.join(format!("{stem}.wav"));
        let lab = dir.join(format!("{stem}.lab"));
        write_wav(&Waveform::from_samples(vec![0.01; samples_for_frames(audio_frames)]), &wav).unwrap();
        let a = PhoneAlignment::new(vec![
            PhoneSpan::new("sil", 0, 3),
            PhoneSpan::new("aa", 3, label_frames),
        ])
        .unwrap();
        write_htk_labels(&a, &lab).unwrap();
        (PathBuf::from(format!("{stem}.wav")), PathBuf::from(format!("{stem}.lab")))
    }

    #[test]
    fn loads_pairs_relative_to_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![fixture(dir.path(), "a", 20, 20), fixture(dir.path(), "b", 15, 15)];
        let m = dir.path().join("m.tsv");
        write_manifest(&m, &pairs).unwrap();
        let c = load_corpus(&m).unwrap();
        assert_eq!(c.utterances.len(), 2);
        assert!(c.warnings.is_empty());
        assert_eq!(c.utterances[1].id, "b");
    }

    #[test]
    fn overshoot_tolerance() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        write_manifest(&m, &[fixture(dir.path(), "a", 20, 21)]).unwrap();
        let c = load_corpus(&m).unwrap();
        assert_eq!(c.warnings.len(), 1);
        assert_eq!(c.utterances[0].alignment.num_frames(), 20);

        write_manifest(&m, &[fixture(dir.path(), "b", 20, 30)]).unwrap();
        assert!(matches!(load_corpus(&m), Err(Error::Data(_))));
    }

    #[test]
    fn lists_every_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, "x.wav\tx.lab\ny.wav\ty.lab\n").unwrap();
        match load_corpus(&m) {
            Err(Error::MissingFiles(p)) => assert_eq!(p.len(), 4),
            other => panic!("{other:?}"),
        }
    }
}
