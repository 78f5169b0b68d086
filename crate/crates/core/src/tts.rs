//! Text or label file → canonical posteriors → speech.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::{parse_htk_labels, Lexicon};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::phonoset::{canonical_posteriors, normalize_symbol, FeatureSystem, PhoneAlignment, PhoneSpan, SILENCE, VOWELS};
use crate::synthesizer::{RenderOptions, SynthModel};

pub const DEFAULT_VOWEL_FRAMES: usize = 12;
pub const DEFAULT_CONSONANT_FRAMES: usize = 8;
pub const DEFAULT_SILENCE_FRAMES: usize = 20;

/// Per-phoneme duration in frames with class defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationTable {
    pub vowel: usize,
    pub consonant: usize,
    pub silence: usize,
    overrides: BTreeMap<String, usize>,
}

impl Default for DurationTable {
    fn default() -> Self {
        DurationTable {
            vowel: DEFAULT_VOWEL_FRAMES,
            consonant: DEFAULT_CONSONANT_FRAMES,
            silence: DEFAULT_SILENCE_FRAMES,
            overrides: BTreeMap::new(),
        }
    }
}

impl DurationTable {
    pub fn with_classes(vowel: usize, consonant: usize, silence: usize) -> Result<Self> {
        if vowel == 0 || consonant == 0 || silence == 0 {
            return Err(Error::contract("class durations must be at least one frame"));
        }
        Ok(DurationTable {
            vowel,
            consonant,
            silence,
            overrides: BTreeMap::new(),
        })
    }

    pub fn set(&mut self, phone: &str, frames: usize) -> Result<()> {
        if frames == 0 {
            return Err(Error::contract(format!("duration of `{phone}` must be at least one frame")));
        }
        self.overrides.insert(normalize_symbol(phone), frames);
        Ok(())
    }

    pub fn get(&self, phone: &str) -> usize {
        if let Some(&d) = self.overrides.get(phone) {
            return d;
        }
        let d = if phone == SILENCE {
            self.silence
        } else if VOWELS.contains(&phone) {
            self.vowel
        } else {
            self.consonant
        };
        d.max(1)
    }
}

fn is_break(c: char) -> bool {
    matches!(c, ',' | '.' | ';' | ':' | '!' | '?')
}

/// Words to phones via first lexicon variants, with silence at both ends and
/// at sentence-internal punctuation.
pub fn text_to_phonemes(text: &str, lex: &Lexicon) -> Result<Vec<String>> {
    let mut phones = vec![SILENCE.to_string()];
    let mut words = 0;
    let mut pending_break = false;
    for raw in text.split_whitespace() {
        let leading_break = raw.chars().next().is_some_and(is_break);
        let trailing_break = raw.chars().last().is_some_and(is_break);
        let word: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
            .collect::<String>()
            .to_uppercase();
        if leading_break && words > 0 {
            pending_break = true;
        }
        if !word.is_empty() {
            if pending_break && phones.last().map(String::as_str) != Some(SILENCE) {
                phones.push(SILENCE.to_string());
            }
            pending_break = false;
            let pron = lex.first(&word).ok_or_else(|| Error::Data(format!("word `{word}` is not in the lexicon")))?;
            phones.extend(pron.iter().cloned());
            words += 1;
        }
        if trailing_break && words > 0 {
            pending_break = true;
        }
    }
    if words == 0 {
        return Err(Error::Data("text contains no words".into()));
    }
    if phones.last().map(String::as_str) != Some(SILENCE) {
        phones.push(SILENCE.to_string());
    }
    Ok(phones)
}

pub fn assign_durations(phones: &[String], dt: &DurationTable) -> Result<PhoneAlignment> {
    if phones.is_empty() {
        return Err(Error::contract("cannot assign durations to an empty phone list"));
    }
    let mut t = 0;
    let spans = phones
        .iter()
        .map(|p| {
            let d = dt.get(p);
            let s = PhoneSpan::new(p.as_str(), t, t + d);
            t += d;
            s
        })
        .collect();
    PhoneAlignment::new(spans)
}

/// Input to the synthesis front end.
#[derive(Debug, Clone, PartialEq)]
pub enum TtsInput<'a> {
    Text(&'a str),
    /// HTK label file; its phones and timings are used directly.
    Labels(&'a Path),
}

pub fn tts_alignment(input: &TtsInput, lex: Option<&Lexicon>, dt: &DurationTable) -> Result<PhoneAlignment> {
    match input {
        TtsInput::Text(text) => {
            let lex = lex.ok_or_else(|| Error::Data("text input needs a lexicon".into()))?;
            assign_durations(&text_to_phonemes(text, lex)?, dt)
        }
        TtsInput::Labels(path) => parse_htk_labels(path),
    }
}

pub fn tts_synthesize(
    input: &TtsInput,
    sys: &FeatureSystem,
    m: &SynthModel,
    lex: Option<&Lexicon>,
    dt: &DurationTable,
    opts: &RenderOptions,
) -> Result<(Waveform, PhoneAlignment)> {
    let align = tts_alignment(input, lex, dt)?;
    let z = canonical_posteriors(sys, &align)?;
    Ok((m.render(&z, opts)?, align))
}
