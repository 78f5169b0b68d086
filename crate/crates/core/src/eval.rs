//! Objective evaluation: mel cepstral distortion, phone distance matrices and
//! word-level intelligibility.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::dsp::{mel_cepstra, FrameMatrix, Waveform};
use crate::error::{Error, Result};
use crate::phonoset::PhoneAlignment;

/// Cepstra per exemplar: c_0..c_12.
pub const CEPSTRAL_ORDER: usize = 13;
/// Scaled distances at or above this render white in heatmaps.
pub const HEATMAP_CEILING: f64 = 1.5;

/// Mel cepstral distortion in dB over c_1..c_12.
pub fn mcd(c1: &[f64], c2: &[f64]) -> Result<f64> {
    if c1.len() != c2.len() {
        return Err(Error::Dimension {
            expected: c1.len(),
            got: c2.len(),
        });
    }
    let sum: f64 = c1.iter().zip(c2).skip(1).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(10.0 / std::f64::consts::LN_10 * (2.0 * sum).sqrt())
}

/// Mel-cepstral vectors taken from the centres of phone instances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhoneExemplarSet {
    pub exemplars: BTreeMap<String, Vec<Vec<f64>>>,
    /// Spans that could not yield a frame.
    pub skipped: usize,
}

impl PhoneExemplarSet {
    pub fn labels(&self) -> Vec<&str> {
        self.exemplars.keys().map(String::as_str).collect()
    }

    pub fn get(&self, phone: &str) -> Option<&[Vec<f64>]> {
        self.exemplars.get(phone).map(Vec::as_slice)
    }

    pub fn push(&mut self, phone: &str, cepstra: Vec<f64>) {
        self.exemplars.entry(phone.to_string()).or_default().push(cepstra);
    }
}

fn frame_cepstra(w: &Waveform, frame: usize) -> Option<Vec<f64>> {
    let frames = crate::dsp::frame_signal(w);
    let f = frames.frames.get(frame)?.clone();
    mel_cepstra(&FrameMatrix { frames: vec![f] }, CEPSTRAL_ORDER)
        .ok()
        .and_then(|mut v| v.pop())
}

/// One exemplar per phone instance, from the centre frame of its span.
pub fn build_exemplars(corpus: &[(&Waveform, &PhoneAlignment)]) -> PhoneExemplarSet {
    let mut set = PhoneExemplarSet::default();
    for (w, align) in corpus {
        let frames = crate::dsp::frame_signal(w);
        let mut centres = Vec::new();
        for span in align.entries() {
            let c = span.start + span.len().saturating_sub(1) / 2;
            if span.is_empty() || c >= frames.len() {
                set.skipped += 1;
            } else {
                centres.push((span.phone.as_str(), c));
            }
        }
        if centres.is_empty() {
            continue;
        }
        let picked = FrameMatrix {
            frames: centres.iter().map(|&(_, c)| frames.frames[c].clone()).collect(),
        };
        let cep = mel_cepstra(&picked, CEPSTRAL_ORDER).expect("non-empty frames");
        for ((phone, _), v) in centres.into_iter().zip(cep) {
            set.push(phone, v);
        }
    }
    if set.skipped > 0 {
        log::warn!("skipped {} phone spans without a usable centre frame", set.skipped);
    }
    set
}

/// Exemplars from evenly spaced frames of a stationary recording, such as a
/// composed atom.
pub fn stationary_exemplars(w: &Waveform, count: usize) -> Vec<Vec<f64>> {
    let n = w.num_frames();
    if n == 0 || count == 0 {
        return Vec::new();
    }
    (0..count)
        .filter_map(|i| frame_cepstra(w, (2 * i + 1) * n / (2 * count)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    /// Row-major; rows index test phones, columns reference phones.
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let p = labels.len();
        if values.len() != p || values.iter().any(|r| r.len() != p) {
            return Err(Error::contract("distance matrix must be square and match its labels"));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != p {
            return Err(Error::contract("distance matrix labels must be unique"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::contract("distance matrix entries must be finite"));
        }
        Ok(DistanceMatrix { labels, values })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// Labels whose diagonal entry is the smallest in its row (ties count).
    pub fn diagonal_row_minima(&self) -> Vec<&str> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let row = &self.values[*i];
                row.iter().all(|&v| row[*i] <= v)
            })
            .map(|(_, l)| l.as_str())
            .collect()
    }

    /// Restriction to the given labels, in their order.
    pub fn select(&self, labels: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| {
                self.labels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::Data(format!("label `{l}` not in matrix")))
            })
            .collect::<Result<_>>()?;
        let values = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.values[i][j]).collect())
            .collect();
        DistanceMatrix::new(labels.iter().map(|s| s.to_string()).collect(), values)
    }
}

/// Mean MCD between every test exemplar of phone i and every reference
/// exemplar of phone j, over the labels both sets share.
pub fn distance_matrix(test: &PhoneExemplarSet, reference: &PhoneExemplarSet) -> Result<DistanceMatrix> {
    let labels: Vec<String> = test
        .exemplars
        .keys()
        .filter(|k| reference.exemplars.contains_key(*k))
        .cloned()
        .collect();
    if labels.is_empty() {
        return Err(Error::Data("test and reference exemplars share no phones".into()));
    }
    let only: Vec<&String> = test
        .exemplars
        .keys()
        .chain(reference.exemplars.keys())
        .filter(|k| !labels.contains(k))
        .collect();
    if !only.is_empty() {
        log::warn!("phones present on one side only, ignored: {only:?}");
    }
    let mut values = vec![vec![0.0; labels.len()]; labels.len()];
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            let (ta, rb) = (&test.exemplars[a], &reference.exemplars[b]);
            let mut sum = 0.0;
            for x in ta {
                for y in rb {
                    sum += mcd(x, y)?;
                }
            }
            values[i][j] = sum / (ta.len() * rb.len()) as f64;
        }
    }
    DistanceMatrix::new(labels, values)
}

/// Maps each column affinely so its minimum becomes 1 and its maximum 2.
/// Constant columns become all ones.
pub fn scale_natural(d: &DistanceMatrix) -> DistanceMatrix {
    let p = d.size();
    let mut values = d.values.clone();
    for j in 0..p {
        let col: Vec<f64> = (0..p).map(|i| d.values[i][j]).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        for i in 0..p {
            values[i][j] = if max > min {
                1.0 + (1.0 - (max - col[i]) / (max - min))
            } else {
                1.0
            };
        }
        if max <= min {
            log::warn!("column `{}` is constant; scaled to 1", d.labels[j]);
        }
    }
    DistanceMatrix {
        labels: d.labels.clone(),
        values,
    }
}

/// Element-wise product of the vocoded distances with the scaled natural ones.
pub fn normalize(vocoded: &DistanceMatrix, natural_scaled: &DistanceMatrix) -> Result<DistanceMatrix> {
    if vocoded.labels != natural_scaled.labels {
        return Err(Error::Data(format!(
            "label mismatch: {:?} vs {:?}",
            vocoded.labels, natural_scaled.labels
        )));
    }
    let values = vocoded
        .values
        .iter()
        .zip(&natural_scaled.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect())
        .collect();
    DistanceMatrix::new(vocoded.labels.clone(), values)
}

pub fn diagonal_mean(d: &DistanceMatrix) -> f64 {
    let p = d.size();
    if p == 0 {
        return 0.0;
    }
    (0..p).map(|i| d.values[i][i]).sum::<f64>() / p as f64
}

/// Word alignment counts from a minimum edit distance path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordAlignment {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

/// Unit-cost Levenshtein alignment; on equal cost the backtrace prefers a
/// diagonal step, then deletion, then insertion.
pub fn align_words<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> WordAlignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        cost[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            cost[i][j] = (cost[i - 1][j - 1] + sub)
                .min(cost[i - 1][j] + 1)
                .min(cost[i][j - 1] + 1);
        }
    }
    let mut a = WordAlignment::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if cost[i][j] == cost[i - 1][j - 1] + usize::from(!same) {
                if same {
                    a.hits += 1;
                } else {
                    a.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            a.deletions += 1;
            i -= 1;
        } else {
            a.insertions += 1;
            j -= 1;
        }
    }
    a
}

/// `(H − I) / N · 100`; may be negative.
pub fn intelligibility<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Data("intelligibility needs a non-empty reference".into()));
    }
    let a = align_words(reference, hypothesis);
    Ok(intelligibility_score(a.hits, a.insertions, reference.len()))
}

pub fn intelligibility_score(hits: usize, insertions: usize, words: usize) -> f64 {
    (hits as f64 - insertions as f64) / words as f64 * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Pgm,
}

impl MatrixFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("pgm") => MatrixFormat::Pgm,
            _ => MatrixFormat::Csv,
        }
    }
}

/// Grey level of one heatmap cell: 1.0 or less is black, 1.5 or more white.
pub fn heat_level(v: f64) -> u8 {
    let t = ((v - 1.0) / (HEATMAP_CEILING - 1.0)).clamp(0.0, 1.0);
    (t * 255.0).round() as u8
}

pub fn export_matrix(d: &DistanceMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let mut out = String::new();
    match format {
        MatrixFormat::Csv => {
            out.push_str("phone");
            for l in &d.labels {
                write!(out, ",{l}").expect("string write");
            }
            out.push('\n');
            for (l, row) in d.labels.iter().zip(&d.values) {
                out.push_str(l);
                for v in row {
                    write!(out, ",{v:.6}").expect("string write");
                }
                out.push('\n');
            }
        }
        MatrixFormat::Pgm => {
            let p = d.size();
            writeln!(out, "P2\n# {}\n{p} {p}\n255", d.labels.join(" ")).expect("string write");
            for row in &d.values {
                let line: Vec<String> = row.iter().map(|&v| heat_level(v).to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
    }
    let mut f = crate::error::create_file(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DistanceMatrix> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(crate::error::open_file(path)?);
    let header = rdr.headers()?.clone();
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != labels.get(i).map(String::as_str) {
            return Err(Error::parse(&name, i + 2, "row label does not match the header"));
        }
        let row: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::parse(&name, i + 2, format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        values.push(row);
    }
    DistanceMatrix::new(labels, values)
}
