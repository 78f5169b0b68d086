//! Perceptual linear prediction front end.

use super::{
    append_deltas, frame_samples, lpc::levinson_durbin, pre_emphasis, FrameMatrix, PowerSpectrum,
    Waveform, FFT_LEN, POWER_FLOOR, PRE_EMPHASIS, SAMPLE_RATE,
};
use crate::error::{Error, Result};

/// 13 statics plus Δ and ΔΔ.
pub const PLP_DIM: usize = 39;

const COMPRESSION: f64 = 0.33;

fn hz_to_bark(f: f64) -> f64 {
    6.0 * (f / 600.0).asinh()
}

fn bark_to_hz(z: f64) -> f64 {
    600.0 * (z / 6.0).sinh()
}

/// Critical-band weights (bands × bins) with the equal-loudness curve folded in.
struct BarkBank {
    weights: Vec<Vec<f64>>,
    loudness: Vec<f64>,
}

impl BarkBank {
    fn new() -> Self {
        let nyq_bark = hz_to_bark(f64::from(SAMPLE_RATE) / 2.0);
        let bands = nyq_bark.ceil() as usize + 1;
        let step = nyq_bark / (bands - 1) as f64;
        let bins = FFT_LEN / 2 + 1;
        let bin_bark: Vec<f64> = (0..bins)
            .map(|k| hz_to_bark(k as f64 * f64::from(SAMPLE_RATE) / FFT_LEN as f64))
            .collect();
        let mut weights = Vec::with_capacity(bands);
        let mut loudness = Vec::with_capacity(bands);
        for b in 0..bands {
            let mid = b as f64 * step;
            weights.push(
                bin_bark
                    .iter()
                    .map(|&z| {
                        let lo = z - mid - 0.5;
                        let hi = z - mid + 0.5;
                        10f64.powf(hi.min(-2.5 * lo).min(0.0))
                    })
                    .collect(),
            );
            let fsq = bark_to_hz(mid).powi(2);
            loudness.push((fsq / (fsq + 1.6e5)).powi(2) * ((fsq + 1.44e6) / (fsq + 9.61e6)));
        }
        BarkBank { weights, loudness }
    }

    /// Loudness-weighted, cube-root-compressed auditory spectrum.
    fn auditory(&self, power: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.loudness)
            .map(|(w, &eq)| {
                let e: f64 = w.iter().zip(power).map(|(a, b)| a * b).sum();
                (eq * e).max(POWER_FLOOR).powf(COMPRESSION)
            })
            .collect();
        // Edge bands sit outside the loudness curve's useful range.
        let n = out.len();
        out[0] = out[1];
        out[n - 1] = out[n - 2];
        out
    }
}

/// Autocorrelation of a spectrum sampled uniformly on [0, π].
fn spectrum_autocorrelation(spec: &[f64], lags: usize) -> Vec<f64> {
    let m = spec.len() - 1;
    (0..=lags)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut acc = spec[0] + sign * spec[m];
            for (j, &s) in spec.iter().enumerate().take(m).skip(1) {
                acc += 2.0 * s * (std::f64::consts::PI * (k * j) as f64 / m as f64).cos();
            }
            acc / (2 * m) as f64
        })
        .collect()
}

/// LPC to cepstrum for A(z) = 1 + Σ a_i z^-i.
fn lpc_cepstrum(a: &[f64], n: usize) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; n + 1];
    for m in 1..=n {
        let mut acc = if m <= p { -a[m - 1] } else { 0.0 };
        for k in 1..m {
            if m - k <= p {
                acc -= (k as f64 / m as f64) * c[k] * a[m - k - 1];
            }
        }
        c[m] = acc;
    }
    c[1..].to_vec()
}

/// Static PLP rows: `order` cepstra followed by the model log-gain.
fn plp_statics(frames: &FrameMatrix, order: usize) -> Vec<Vec<f64>> {
    let bank = BarkBank::new();
    let mut spectrum = PowerSpectrum::new();
    frames
        .frames
        .iter()
        .map(|f| {
            let aud = bank.auditory(&spectrum.compute(f));
            let r = spectrum_autocorrelation(&aud, order);
            let (a, err, _) = levinson_durbin(&r, order);
            let mut row = lpc_cepstrum(&a, order);
            row.push(err.max(POWER_FLOOR).ln());
            row
        })
        .collect()
}

/// PLP cepstra with deltas: `N × 3(order+1)`, 39 wide for the default order 12.
pub fn plp_features(frames: &FrameMatrix, order: usize) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::contract("PLP analysis needs at least one frame"));
    }
    if order == 0 || order > 22 {
        return Err(Error::contract(format!("PLP model order {order} out of range 1..=22")));
    }
    Ok(append_deltas(&plp_statics(frames, order)))
}

/// Analyzer front end: pre-emphasis, framing and 39-dim PLP. Empty for audio
/// shorter than one window.
pub fn acoustic_features(w: &Waveform) -> Vec<Vec<f64>> {
    let frames = frame_samples(&pre_emphasis(w.samples(), PRE_EMPHASIS));
    if frames.is_empty() {
        return Vec::new();
    }
    append_deltas(&plp_statics(&frames, 12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::frame_signal;

    fn tone(freq: f64, len: usize) -> Waveform {
        Waveform::from_samples(
            (0..len)
                .map(|n| 0.5 * (2.0 * std::f64::consts::PI * freq * n as f64 / 16_000.0).sin())
                .collect(),
        )
    }

    #[test]
    fn width_is_39() {
        let f = plp_features(&frame_signal(&tone(440.0, 4000)), 12).unwrap();
        assert_eq!(f.len(), 23);
        assert!(f.iter().all(|r| r.len() == PLP_DIM));
        assert_eq!(acoustic_features(&tone(440.0, 4000))[0].len(), PLP_DIM);
    }

    #[test]
    fn identical_frames_identical_rows() {
        let frame: Vec<f64> = (0..400).map(|n| ((n * 13) % 17) as f64 / 17.0 - 0.5).collect();
        let fm = FrameMatrix {
            frames: vec![frame.clone(), frame],
        };
        let f = plp_features(&fm, 12).unwrap();
        assert_eq!(f[0][..13], f[1][..13]);
    }

    #[test]
    fn tones_are_distinguished() {
        let a = plp_features(&frame_signal(&tone(1000.0, 400)), 12).unwrap();
        let b = plp_features(&frame_signal(&tone(3000.0, 400)), 12).unwrap();
        let d: f64 = a[0][..13].iter().zip(&b[0][..13]).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d.sqrt() > 0.1, "distance {}", d.sqrt());
    }

    #[test]
    fn silent_frame_is_finite() {
        let fm = FrameMatrix {
            frames: vec![vec![0.0; 400]],
        };
        assert!(plp_features(&fm, 12).unwrap()[0].iter().all(|v| v.is_finite()));
        assert!(plp_features(&FrameMatrix::default(), 12).is_err());
    }

    #[test]
    fn cepstrum_of_single_pole() {
        // 1/(1 − ρ z^-1) has c_n = ρ^n / n.
        let rho: f64 = 0.6;
        let c = lpc_cepstrum(&[-rho], 5);
        for (n, v) in c.iter().enumerate() {
            let want = rho.powi(n as i32 + 1) / (n + 1) as f64;
            assert!((v - want).abs() < 1e-12);
        }
    }
}
