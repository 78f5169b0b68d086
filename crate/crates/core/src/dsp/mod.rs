//! Signal-processing kernel shared by analysis, synthesis and evaluation.
//!
//! Everything here runs at 16 kHz with 25 ms windows and a 10 ms shift.

mod formant;
mod lpc;
mod mel;
mod plp;
mod source;

pub use formant::{estimate_formants, polynomial_roots, Formant};
pub use lpc::{
    all_pole_filter, autocorrelation, fir_filter, levinson_durbin, lpc_analysis, lpc_to_lsp,
    lsp_to_lpc, reflection_to_lpc, LpcFrame, GAIN_FLOOR,
};
pub use mel::{mel_cepstra, MEL_BANDS};
pub use plp::{acoustic_features, plp_features, PLP_DIM};
pub use source::{
    estimate_f0, estimate_glottal_pole, estimate_hnr, normalized_autocorrelation, GlottalPole,
    F0_MAX, F0_MIN, GLOTTAL_FALLBACK_ANGLE, GLOTTAL_MAG_CEIL, GLOTTAL_MAG_FLOOR, HNR_CLAMP,
    VOICING_THRESHOLD,
};

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 25 ms at 16 kHz.
pub const WINDOW_LEN: usize = 400;
/// 10 ms at 16 kHz.
pub const FRAME_SHIFT: usize = 160;
pub const FRAME_SHIFT_SECONDS: f64 = 0.01;
pub const PRE_EMPHASIS: f64 = 0.97;
pub(crate) const FFT_LEN: usize = 512;
/// Floor applied to spectral energies before logs and compression.
pub(crate) const POWER_FLOOR: f64 = 1e-10;

/// Mono 16 kHz audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedFormat(format!(
                "sample_rate {sample_rate} != {SAMPLE_RATE}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::contract(format!("sample {i} is not finite")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// 16 kHz waveform; panics on non-finite samples.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        Waveform::new(samples, SAMPLE_RATE).expect("finite samples")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Number of full analysis windows.
    pub fn num_frames(&self) -> usize {
        num_frames(self.samples.len())
    }
}

/// `max(0, floor((len - 400) / 160) + 1)`.
pub fn num_frames(len: usize) -> usize {
    if len < WINDOW_LEN {
        0
    } else {
        (len - WINDOW_LEN) / FRAME_SHIFT + 1
    }
}

/// Sample count produced by overlap-adding `frames` windows.
pub fn samples_for_frames(frames: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) * FRAME_SHIFT + WINDOW_LEN
    }
}

/// `N × 400` analysis frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatrix {
    pub frames: Vec<Vec<f64>>,
}

impl FrameMatrix {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Triangular window that stays positive at both ends.
pub fn triangular(len: usize) -> Vec<f64> {
    let l = len as f64;
    (0..len)
        .map(|n| 1.0 - ((2.0 * n as f64 - (l - 1.0)) / l).abs())
        .collect()
}

pub fn pre_emphasis(samples: &[f64], coef: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = 0.0;
    for &s in samples {
        out.push(s - coef * prev);
        prev = s;
    }
    out
}

/// Un-windowed 400-sample frames.
pub fn split_frames(samples: &[f64]) -> Vec<Vec<f64>> {
    (0..num_frames(samples.len()))
        .map(|n| samples[n * FRAME_SHIFT..n * FRAME_SHIFT + WINDOW_LEN].to_vec())
        .collect()
}

/// Hamming-windowed 25 ms frames every 10 ms.
pub fn frame_signal(w: &Waveform) -> FrameMatrix {
    frame_samples(w.samples())
}

pub(crate) fn frame_samples(samples: &[f64]) -> FrameMatrix {
    let win = hamming(WINDOW_LEN);
    let frames = split_frames(samples)
        .into_iter()
        .map(|f| f.iter().zip(&win).map(|(x, w)| x * w).collect())
        .collect();
    FrameMatrix { frames }
}

/// Appends Δ and ΔΔ blocks: `[x | Δx | ΔΔx]`.
///
/// Δ_n = (x_{n+1} − x_{n−1}) / 2 and ΔΔ_n = x_{n−1} − 2x_n + x_{n+1}, with the
/// first and last frames replicated past the edges.
pub fn append_deltas(stat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = stat.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let prev = &stat[t.saturating_sub(1)];
        let cur = &stat[t];
        let next = &stat[(t + 1).min(n - 1)];
        let d = cur.len();
        let mut row = Vec::with_capacity(3 * d);
        row.extend_from_slice(cur);
        row.extend((0..d).map(|i| 0.5 * (next[i] - prev[i])));
        row.extend((0..d).map(|i| prev[i] - 2.0 * cur[i] + next[i]));
        out.push(row);
    }
    out
}

/// Concatenates each row with its `(width-1)/2` neighbours on either side,
/// replicating the edge rows.
pub fn stack_context(feats: &[Vec<f64>], width: usize) -> Result<Vec<Vec<f64>>> {
    if width % 2 == 0 {
        return Err(Error::contract(format!("context width must be odd, got {width}")));
    }
    let n = feats.len();
    let half = (width / 2) as isize;
    let mut out = Vec::with_capacity(n);
    for t in 0..n as isize {
        let mut row = Vec::with_capacity(width * feats[t as usize].len());
        for off in -half..=half {
            let idx = (t + off).clamp(0, n as isize - 1) as usize;
            row.extend_from_slice(&feats[idx]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Weighted overlap-add with a triangular synthesis window.
///
/// Each segment is weighted by the window and the sum is divided by the
/// accumulated window, so overlapping copies of a constant reproduce it
/// exactly and a single segment comes back unchanged.
pub fn overlap_add(segments: &[Vec<f64>], shift: usize) -> Result<Waveform> {
    let Some(first) = segments.first() else {
        return Waveform::new(Vec::new(), SAMPLE_RATE);
    };
    let len = first.len();
    if segments.iter().any(|s| s.len() != len) {
        return Err(Error::contract("overlap_add segments must share one length"));
    }
    let total = (segments.len() - 1) * shift + len;
    let win = triangular(len);
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    for (n, seg) in segments.iter().enumerate() {
        let off = n * shift;
        for (i, (&x, &w)) in seg.iter().zip(&win).enumerate() {
            acc[off + i] += w * x;
            norm[off + i] += w;
        }
    }
    let samples = acc
        .iter()
        .zip(&norm)
        .map(|(a, w)| if *w > 0.0 { a / w } else { 0.0 })
        .collect();
    Waveform::new(samples, SAMPLE_RATE)
}

/// Power spectrum helper with a cached FFT plan.
pub(crate) struct PowerSpectrum {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buf: Vec<rustfft::num_complex::Complex<f64>>,
}

impl PowerSpectrum {
    pub(crate) fn new() -> Self {
        let mut planner = rustfft::FftPlanner::new();
        PowerSpectrum {
            fft: planner.plan_fft_forward(FFT_LEN),
            buf: vec![rustfft::num_complex::Complex::new(0.0, 0.0); FFT_LEN],
        }
    }

    /// `|X(k)|²` for bins `0..=FFT_LEN/2`.
    pub(crate) fn compute(&mut self, frame: &[f64]) -> Vec<f64> {
        for (i, c) in self.buf.iter_mut().enumerate() {
            c.re = frame.get(i).copied().unwrap_or(0.0);
            c.im = 0.0;
        }
        self.fft.process(&mut self.buf);
        self.buf[..=FFT_LEN / 2].iter().map(|c| c.norm_sqr()).collect()
    }
}
