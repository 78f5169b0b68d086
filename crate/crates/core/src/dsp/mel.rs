//! Mel-frequency cepstra for distortion measurements.

use std::f64::consts::PI;

use super::{FrameMatrix, PowerSpectrum, FFT_LEN, POWER_FLOOR, SAMPLE_RATE};
use crate::error::{Error, Result};

pub const MEL_BANDS: usize = 26;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters spaced uniformly on the mel scale from 0 Hz to Nyquist.
fn mel_filterbank() -> Vec<Vec<f64>> {
    let nyq = f64::from(SAMPLE_RATE) / 2.0;
    let top = hz_to_mel(nyq);
    let edges: Vec<f64> = (0..MEL_BANDS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (MEL_BANDS + 1) as f64))
        .collect();
    let bin_hz = f64::from(SAMPLE_RATE) / FFT_LEN as f64;
    (0..MEL_BANDS)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..=FFT_LEN / 2)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// `c_0..c_{order-1}` per frame: log mel energies followed by an orthonormal-scale DCT-II.
pub fn mel_cepstra(frames: &FrameMatrix, order: usize) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::contract("mel cepstra need at least one frame"));
    }
    if order == 0 || order > MEL_BANDS {
        return Err(Error::contract(format!("cepstral order {order} out of range 1..={MEL_BANDS}")));
    }
    let bank = mel_filterbank();
    let mut spectrum = PowerSpectrum::new();
    let scale = (2.0 / MEL_BANDS as f64).sqrt();
    Ok(frames
        .frames
        .iter()
        .map(|f| {
            let power = spectrum.compute(f);
            let logs: Vec<f64> = bank
                .iter()
                .map(|w| {
                    let e: f64 = w.iter().zip(&power).map(|(a, b)| a * b).sum();
                    e.max(POWER_FLOOR).ln()
                })
                .collect();
            (0..order)
                .map(|i| {
                    scale
                        * logs
                            .iter()
                            .enumerate()
                            .map(|(j, l)| {
                                l * (PI * i as f64 * (j as f64 + 0.5) / MEL_BANDS as f64).cos()
                            })
                            .sum::<f64>()
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{frame_signal, Waveform};

    fn tone_frames(freq: f64) -> FrameMatrix {
        frame_signal(&Waveform::from_samples(
            (0..400)
                .map(|n| 0.5 * (2.0 * PI * freq * n as f64 / 16_000.0).sin())
                .collect(),
        ))
    }

    #[test]
    fn width_and_determinism() {
        let fm = FrameMatrix {
            frames: vec![tone_frames(700.0).frames[0].clone(); 2],
        };
        let c = mel_cepstra(&fm, 13).unwrap();
        assert_eq!(c[0].len(), 13);
        assert_eq!(c[0], c[1]);
    }

    #[test]
    fn tones_differ() {
        let a = mel_cepstra(&tone_frames(1000.0), 13).unwrap();
        let b = mel_cepstra(&tone_frames(3000.0), 13).unwrap();
        let d: f64 = a[0][1..].iter().zip(&b[0][1..]).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d > 1.0);
    }

    #[test]
    fn zero_frame_hits_floor() {
        let fm = FrameMatrix {
            frames: vec![vec![0.0; 400]],
        };
        let c = mel_cepstra(&fm, 13).unwrap();
        // A flat log spectrum only has energy in c_0.
        let want = POWER_FLOOR.ln() * MEL_BANDS as f64 * (2.0 / MEL_BANDS as f64).sqrt();
        assert!((c[0][0] - want).abs() < 1e-9);
        assert!(c[0][1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn filters_cover_band() {
        let bank = mel_filterbank();
        assert_eq!(bank.len(), MEL_BANDS);
        assert!(bank.iter().all(|w| w.iter().any(|&v| v > 0.0)));
    }
}
