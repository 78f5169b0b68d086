//! Phonological feature systems (GP, SPE, eSPE) and their CMUbet mappings.
//!
//! Each built-in system maps the 39 CMUbet phonemes plus `sil` to a binary
//! feature vector. The last column of every system is `silence`; the `sil`
//! row has only that column set.
//!
//! Rows are kept exactly as tabulated, including the rows that collide
//! (GP `ey`/`ay`, `ow`/`aw`, `ah`/`er`; eSPE `aa`/`ay`). [`validate_system`]
//! reports those collisions.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// The 39 CMUbet phonemes, in the order used by the feature tables.
pub const CMUBET: [&str; 39] = [
    "iy", "ih", "uw", "uh", "ey", "ow", "oy", "ao", "aa", "ae", "ah", "aw", "ay", "y", "w", "eh",
    "er", "r", "l", "p", "b", "f", "v", "m", "t", "d", "th", "dh", "n", "s", "z", "ch", "jh", "sh",
    "zh", "k", "g", "ng", "hh",
];

/// CMUbet vowels (monophthongs, diphthongs and the rhotic vowel).
pub const VOWELS: [&str; 15] = [
    "iy", "ih", "uw", "uh", "ey", "ow", "oy", "ao", "aa", "ae", "ah", "aw", "ay", "eh", "er",
];

pub const SILENCE: &str = "sil";

const GP_FEATURES: [&str; 12] = ["A", "I", "U", "E", "S", "h", "H", "N", "a", "i", "u", "silence"];

const SPE_FEATURES: [&str; 15] = [
    "vocalic",
    "consonantal",
    "high",
    "back",
    "low",
    "anterior",
    "coronal",
    "round",
    "rising",
    "tense",
    "voice",
    "continuant",
    "nasal",
    "strident",
    "silence",
];

const ESPE_FEATURES: [&str; 21] = [
    "vowel",
    "fricative",
    "nasal",
    "stop",
    "approximant",
    "coronal",
    "high",
    "dental",
    "glottal",
    "labial",
    "low",
    "mid",
    "retroflex",
    "velar",
    "anterior",
    "back",
    "continuant",
    "round",
    "tense",
    "voiced",
    "silence",
];

// One bit string per CMUBET entry, columns in feature order.
const GP_ROWS: [&str; 39] = [
    "010000000100", "010100000000", "001000000010", "001100000000", "110000000100",
    "101000000010", "101000000110", "101100000010", "100000001000", "110000001000",
    "100100000000", "101000000010", "110000000100", "010000000000", "001000000000",
    "110100000100", "100100000000", "101100000000", "000010000000", "001011100000",
    "001011000000", "001001100000", "001001000000", "001010010000", "100011100000",
    "100011000000", "100001100000", "100001000000", "000010010000", "000101100000",
    "000101000000", "010010100000", "010010000000", "010001100000", "010001000000",
    "000111100000", "000111000000", "000110010000", "000001100000",
];

const SPE_ROWS: [&str; 39] = [
    "101000000111000", "101000000011000", "101100010111000", "101100010011000",
    "100000001111000", "100100011111000", "100100011011000", "100100010011000",
    "100110000111000", "100010000011000", "100100000011000", "100110001111000",
    "100010001111000", "001000000011000", "001100010011000", "100000000011000",
    "100000000111000", "110000100011000", "110001100011000", "010001000000000",
    "010001000010000", "010001000001010", "010001000011010", "010001000010100",
    "010001100000000", "010001100010000", "010001100001000", "010001100011000",
    "010001100010100", "010001100001010", "010001100011010", "011000100000010",
    "011000100010010", "011000100001010", "011000100011010", "011100000000000",
    "011100000010000", "011100000010100", "000010000001000",
];

const ESPE_ROWS: [&str; 39] = [
    "100000100000000010110", "100000100000000010010", "100000100000000111110",
    "100000100000000111010", "100000000001000010110", "100000100001000111110",
    "100000000000000111010", "100000000000000111110", "100000000010000110110",
    "100000000010000010110", "100000000001000110010", "100000000010000111110",
    "100000000010000110110", "000010100000000011010", "000010000100001011010",
    "100000000001000010010", "100000000000100010010", "000010000000100011010",
    "000011000000000010010", "000100000100001000100", "000100000100001000010",
    "010000000100001010100", "010000000100001011010", "001000000100001000010",
    "000101000000001000100", "000101000000001000010", "010000010000001010100",
    "010000010000001010010", "001001000000001000010", "010001000000001010100",
    "010001000000001010010", "010000100000000000100", "010000100000000000010",
    "010000100000000010100", "010000000000000000000", "000100100000010100100",
    "000100100000010100010", "001000100000010000010", "000000001000000000000",
];

/// The three built-in feature systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemName {
    Gp,
    Spe,
    Espe,
}

impl SystemName {
    pub const ALL: [SystemName; 3] = [SystemName::Gp, SystemName::Spe, SystemName::Espe];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemName::Gp => "GP",
            SystemName::Spe => "SPE",
            SystemName::Espe => "eSPE",
        }
    }

    /// Number of features, silence included.
    pub fn width(self) -> usize {
        match self {
            SystemName::Gp => GP_FEATURES.len(),
            SystemName::Spe => SPE_FEATURES.len(),
            SystemName::Espe => ESPE_FEATURES.len(),
        }
    }
}

impl fmt::Display for SystemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gp" => Ok(SystemName::Gp),
            "spe" => Ok(SystemName::Spe),
            "espe" => Ok(SystemName::Espe),
            other => Err(Error::contract(format!(
                "unknown feature system `{other}` (expected gp, spe or espe)"
            ))),
        }
    }
}

/// A named feature inventory and its phoneme table.
///
/// Rows are stored as `f64` so that externally supplied tables can be
/// checked for non-binary entries; the built-in tables only hold 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSystem {
    name: String,
    features: Vec<String>,
    phonemes: Vec<String>,
    rows: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl FeatureSystem {
    /// Builds a system from explicit rows. No validation beyond bookkeeping;
    /// run [`validate_system`] to check the table.
    pub fn from_rows(
        name: impl Into<String>,
        features: Vec<String>,
        table: Vec<(String, Vec<f64>)>,
    ) -> Self {
        let mut phonemes = Vec::with_capacity(table.len());
        let mut rows = Vec::with_capacity(table.len());
        let mut index = HashMap::with_capacity(table.len());
        for (phoneme, row) in table {
            index.entry(phoneme.clone()).or_insert(phonemes.len());
            phonemes.push(phoneme);
            rows.push(row);
        }
        FeatureSystem {
            name: name.into(),
            features,
            phonemes,
            rows,
            index,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    /// Number of features K.
    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn phonemes(&self) -> &[String] {
        &self.phonemes
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn contains(&self, phoneme: &str) -> bool {
        self.index.contains_key(phoneme)
    }

    pub fn feature_index(&self, feature: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))
    }

    /// Index of the `silence` column, if the system has one.
    pub fn silence_index(&self) -> Option<usize> {
        self.features.iter().position(|f| f == "silence")
    }

    pub fn row(&self, phoneme: &str) -> Result<&[f64]> {
        self.index
            .get(phoneme)
            .map(|&i| self.rows[i].as_slice())
            .ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))
    }

    /// Writes the table as CSV: header `phoneme,<features...>`, one row per phoneme.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["phoneme".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header)?;
        for (p, row) in self.phonemes.iter().zip(&self.rows) {
            let mut rec = vec![p.clone()];
            rec.extend(row.iter().map(|v| format_cell(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`FeatureSystem::write_csv`] (or hand-made in
    /// the same layout).
    pub fn read_csv<R: Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::parse("<csv>", 1, "header needs a phoneme column and at least one feature"));
        }
        let features: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut table = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::parse("<csv>", line, format!("expected {} fields, got {}", header.len(), rec.len())));
            }
            let phoneme = normalize_symbol(&rec[0]);
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse("<csv>", line, format!("bad value `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            table.push((phoneme, row));
        }
        Ok(FeatureSystem::from_rows(name, features, table))
    }
}

fn format_cell(v: f64) -> String {
    if v == 0.0 || v == 1.0 {
        format!("{}", v as u8)
    } else {
        format!("{v}")
    }
}

/// Lower-cases a CMUbet symbol and strips stress digits (`ER1` → `er`).
pub fn normalize_symbol(symbol: &str) -> String {
    symbol
        .trim()
        .trim_end_matches(|c: char| c.is_ascii_digit())
        .to_ascii_lowercase()
}

/// Loads one of the compiled-in tables.
pub fn load_system(name: SystemName) -> FeatureSystem {
    let (features, rows): (&[&str], &[&str; 39]) = match name {
        SystemName::Gp => (&GP_FEATURES, &GP_ROWS),
        SystemName::Spe => (&SPE_FEATURES, &SPE_ROWS),
        SystemName::Espe => (&ESPE_FEATURES, &ESPE_ROWS),
    };
    let k = features.len();
    let mut table: Vec<(String, Vec<f64>)> = CMUBET
        .iter()
        .zip(rows.iter())
        .map(|(p, bits)| {
            let mut row: Vec<f64> = bits.bytes().map(|b| f64::from(b - b'0')).collect();
            debug_assert_eq!(row.len(), k);
            row.truncate(k);
            (p.to_string(), row)
        })
        .collect();
    let mut sil = vec![0.0; k];
    sil[k - 1] = 1.0;
    table.push((SILENCE.to_string(), sil));
    FeatureSystem::from_rows(
        name.as_str(),
        features.iter().map(|s| s.to_string()).collect(),
        table,
    )
}

/// One problem found by [`validate_system`].
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    DuplicateRow { first: String, second: String },
    DuplicateSymbol(String),
    WrongDimension { phoneme: String, expected: usize, got: usize },
    NonBinary { phoneme: String, feature: String, value: f64 },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateRow { first, second } => {
                write!(f, "phonemes `{first}` and `{second}` share a feature vector")
            }
            Finding::DuplicateSymbol(p) => write!(f, "phoneme `{p}` listed more than once"),
            Finding::WrongDimension { phoneme, expected, got } => {
                write!(f, "row `{phoneme}` has {got} values, expected {expected}")
            }
            Finding::NonBinary { phoneme, feature, value } => {
                write!(f, "row `{phoneme}` has non-binary value {value} for `{feature}`")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn duplicate_rows(&self) -> Vec<(&str, &str)> {
        self.findings
            .iter()
            .filter_map(|f| match f {
                Finding::DuplicateRow { first, second } => Some((first.as_str(), second.as_str())),
                _ => None,
            })
            .collect()
    }
}

/// Checks dimensionality, binarity and row uniqueness.
pub fn validate_system(sys: &FeatureSystem) -> ValidationReport {
    let k = sys.width();
    let mut findings = Vec::new();
    for (i, (p, row)) in sys.phonemes.iter().zip(&sys.rows).enumerate() {
        if sys.phonemes[..i].contains(p) {
            findings.push(Finding::DuplicateSymbol(p.clone()));
        }
        if row.len() != k {
            findings.push(Finding::WrongDimension {
                phoneme: p.clone(),
                expected: k,
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                findings.push(Finding::NonBinary {
                    phoneme: p.clone(),
                    feature: sys.features.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                    value: v,
                });
            }
        }
    }
    for i in 0..sys.rows.len() {
        for j in (i + 1)..sys.rows.len() {
            if sys.rows[i] == sys.rows[j] {
                findings.push(Finding::DuplicateRow {
                    first: sys.phonemes[i].clone(),
                    second: sys.phonemes[j].clone(),
                });
            }
        }
    }
    ValidationReport { findings }
}

/// Returns a copy of the phoneme's feature row.
pub fn phoneme_to_features(sys: &FeatureSystem, phoneme: &str) -> Result<Vec<f64>> {
    sys.row(&normalize_symbol(phoneme)).map(<[f64]>::to_vec)
}

/// Table row closest (Euclidean) to `vector`; ties go to the earlier row.
pub fn nearest_phoneme(sys: &FeatureSystem, vector: &[f64]) -> (String, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, row) in sys.rows.iter().enumerate() {
        let d2: f64 = row.iter().zip(vector).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (sys.phonemes[best.0].clone(), best.1.sqrt())
}

/// One aligned phone, frames `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneSpan {
    pub phone: String,
    pub start: usize,
    pub end: usize,
}

impl PhoneSpan {
    pub fn new(phone: impl Into<String>, start: usize, end: usize) -> Self {
        PhoneSpan {
            phone: phone.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Contiguous frame-level phone segmentation starting at frame 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhoneAlignment {
    entries: Vec<PhoneSpan>,
}

impl PhoneAlignment {
    pub fn new(entries: Vec<PhoneSpan>) -> Result<Self> {
        let mut expected_start = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.start >= e.end {
                return Err(Error::contract(format!(
                    "span {i} (`{}`) is empty or reversed: {}..{}",
                    e.phone, e.start, e.end
                )));
            }
            if e.start != expected_start {
                return Err(Error::contract(format!(
                    "span {i} (`{}`) starts at frame {} but the previous span ended at {}",
                    e.phone, e.start, expected_start
                )));
            }
            expected_start = e.end;
        }
        Ok(PhoneAlignment { entries })
    }

    pub fn entries(&self) -> &[PhoneSpan] {
        &self.entries
    }

    /// Total number of frames covered.
    pub fn num_frames(&self) -> usize {
        self.entries.last().map_or(0, |e| e.end)
    }

    /// Phone label of every frame.
    pub fn frame_labels(&self) -> Vec<&str> {
        let mut labels = Vec::with_capacity(self.num_frames());
        for e in &self.entries {
            labels.extend(std::iter::repeat_n(e.phone.as_str(), e.len()));
        }
        labels
    }

    /// Drops frames at or beyond `frames`. Spans that end up empty are removed.
    pub fn truncate(&mut self, frames: usize) {
        self.entries.retain(|e| e.start < frames);
        if let Some(last) = self.entries.last_mut() {
            last.end = last.end.min(frames);
        }
    }
}

/// Per-frame feature posteriors, `N × K`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    pub frames: Vec<Vec<f64>>,
    pub system: String,
    /// Seconds between frames.
    pub frame_shift: f64,
}

impl PosteriorMatrix {
    pub fn new(frames: Vec<Vec<f64>>, system: impl Into<String>, frame_shift: f64) -> Self {
        PosteriorMatrix {
            frames,
            system: system.into(),
            frame_shift,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Writes `system` and `features` on a comment line, then one CSV row per frame.
    pub fn write_csv<W: Write>(&self, sys: &FeatureSystem, mut writer: W) -> Result<()> {
        writeln!(writer, "# system={} frame_shift={}", self.system, self.frame_shift)?;
        writeln!(writer, "{}", sys.features().join(","))?;
        for row in &self.frames {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(writer, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines
            .next()
            .ok_or_else(|| Error::parse("<posteriors>", 1, "empty file"))?;
        let mut system = String::new();
        let mut frame_shift = 0.01;
        for kv in meta.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("system", v)) => system = v.to_string(),
                Some(("frame_shift", v)) => {
                    frame_shift = v
                        .parse()
                        .map_err(|_| Error::parse("<posteriors>", 1, "bad frame_shift"))?
                }
                _ => {}
            }
        }
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("<posteriors>", 2, "missing feature header"))?;
        let k = header.split(',').count();
        let mut frames = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse("<posteriors>", i + 1, format!("bad value `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != k {
                return Err(Error::parse("<posteriors>", i + 1, format!("expected {k} values, got {}", row.len())));
            }
            frames.push(row);
        }
        Ok(PosteriorMatrix::new(frames, system, frame_shift))
    }
}

/// Hard 0/1 posteriors: every frame of a span gets its phone's table row.
pub fn canonical_posteriors(sys: &FeatureSystem, align: &PhoneAlignment) -> Result<PosteriorMatrix> {
    let mut frames = Vec::with_capacity(align.num_frames());
    for e in align.entries() {
        let row = sys.row(&e.phone)?;
        frames.extend(std::iter::repeat_n(row.to_vec(), e.len()));
    }
    Ok(PosteriorMatrix::new(frames, sys.name(), crate::dsp::FRAME_SHIFT_SECONDS))
}
