//! Excitation parameters: pitch, harmonic-to-noise ratio and glottal pole.

use std::f64::consts::PI;

use super::{fir_filter, hamming, lpc_analysis, SAMPLE_RATE};

pub const F0_MIN: f64 = 50.0;
pub const F0_MAX: f64 = 500.0;
/// Normalized autocorrelation peak above which a frame counts as voiced.
pub const VOICING_THRESHOLD: f64 = 0.3;
/// HNR correlations are clamped to `[HNR_CLAMP, 1 - HNR_CLAMP]`.
pub const HNR_CLAMP: f64 = 1e-4;
pub const GLOTTAL_FALLBACK_ANGLE: f64 = 0.05;
pub const GLOTTAL_MAG_FLOOR: f64 = 1e-3;
pub const GLOTTAL_MAG_CEIL: f64 = 0.98;

/// Complex pole pairs weaker than this are treated as noise.
const GLOTTAL_MIN_COMPLEX_MAG: f64 = 0.3;
const OCTAVE_TOLERANCE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlottalPole {
    /// Radians in (0, π).
    pub angle: f64,
    /// In (0, 1).
    pub magnitude: f64,
}

fn lag_range(len: usize, fmin: f64, fmax: f64) -> (usize, usize) {
    let fs = f64::from(SAMPLE_RATE);
    let lo = (fs / fmax).floor().max(1.0) as usize;
    // Longer lags leave too little overlap for a stable estimate.
    let hi = ((fs / fmin).ceil() as usize).min(len * 2 / 3);
    (lo, hi)
}

/// Mean-removed normalized cross-correlation between `x[..L-τ]` and `x[τ..]`
/// for τ in `0..=max_lag`; 1 for any lag at which the signal repeats exactly.
pub fn normalized_autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len();
    let mean = frame.iter().sum::<f64>() / n.max(1) as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|k| {
            if k >= n {
                return 0.0;
            }
            let (a, b) = (&x[..n - k], &x[k..]);
            let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let ea: f64 = a.iter().map(|v| v * v).sum();
            let eb: f64 = b.iter().map(|v| v * v).sum();
            let den = (ea * eb).sqrt();
            if den > 1e-20 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Autocorrelation pitch estimate in Hz, `None` when unvoiced.
///
/// The first local maximum within 90% of the global one is taken so that
/// multiples of the period do not win, then refined by parabolic interpolation.
pub fn estimate_f0(frame: &[f64], fmin: f64, fmax: f64) -> Option<f64> {
    let (lo, hi) = lag_range(frame.len(), fmin, fmax);
    if hi <= lo + 1 {
        return None;
    }
    let r = normalized_autocorrelation(frame, hi);
    // Parabolic peak (offset, height) around lag k.
    let vertex = |k: usize| -> (f64, f64) {
        if k == lo || k == hi {
            return (0.0, r[k]);
        }
        let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
        let den = a - 2.0 * b + c;
        if den >= 0.0 {
            return (0.0, b);
        }
        let d = (0.5 * (a - c) / den).clamp(-0.5, 0.5);
        (d, b - 0.25 * (a - c) * d)
    };
    let is_peak = |k: usize| (k == lo || r[k] >= r[k - 1]) && (k == hi || r[k] >= r[k + 1]);
    let peaks: Vec<(usize, f64, f64)> = (lo..=hi)
        .filter(|&k| is_peak(k))
        .map(|k| {
            let (d, h) = vertex(k);
            (k, d, h)
        })
        .collect();
    let best = peaks.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    if !(best > VOICING_THRESHOLD) {
        return None;
    }
    let &(lag, offset, height) = peaks.iter().find(|p| p.2 >= OCTAVE_TOLERANCE * best)?;
    if height <= VOICING_THRESHOLD {
        return None;
    }
    let refined = lag as f64 + offset;
    Some(f64::from(SAMPLE_RATE) / refined)
}

/// Log harmonic-to-noise ratio `log(r / (1 - r))` from the normalized
/// autocorrelation at the pitch lag, or at the strongest lag when unvoiced.
pub fn estimate_hnr(frame: &[f64], f0: Option<f64>) -> f64 {
    let (lo, hi) = lag_range(frame.len(), F0_MIN, F0_MAX);
    let r = if hi > lo {
        let ac = normalized_autocorrelation(frame, hi);
        match f0 {
            Some(f) if f > 0.0 => {
                let lag = (f64::from(SAMPLE_RATE) / f).round() as usize;
                let lag = lag.clamp(lo, hi);
                (lag.saturating_sub(1).max(lo)..=(lag + 1).min(hi))
                    .map(|k| ac[k])
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            _ => (lo..=hi).map(|k| ac[k]).fold(f64::NEG_INFINITY, f64::max),
        }
    } else {
        0.0
    };
    let r = r.clamp(HNR_CLAMP, 1.0 - HNR_CLAMP);
    (r / (1.0 - r)).ln()
}

/// Order-2 fit to the windowed LPC residual of a raw frame.
pub fn estimate_glottal_pole(frame: &[f64], a: &[f64]) -> GlottalPole {
    let residual = fir_filter(a, frame);
    let win = hamming(residual.len().max(1));
    let windowed: Vec<f64> = residual.iter().zip(&win).map(|(x, w)| x * w).collect();
    let (c1, c2) = match lpc_analysis(&windowed, 2) {
        Ok(f) => (f.coeffs[0], f.coeffs[1]),
        Err(_) => (0.0, 0.0),
    };
    // Poles solve z² + c1 z + c2 = 0.
    let disc = c1 * c1 - 4.0 * c2;
    if disc < 0.0 {
        let magnitude = c2.sqrt();
        let angle = (0.5 * (-disc).sqrt()).atan2(-0.5 * c1);
        if magnitude >= GLOTTAL_MIN_COMPLEX_MAG && angle > 0.0 && angle < PI {
            return GlottalPole {
                angle,
                magnitude: magnitude.min(GLOTTAL_MAG_CEIL),
            };
        }
        return fallback(magnitude);
    }
    let s = disc.sqrt();
    fallback((0.5 * (-c1 + s)).abs().max((0.5 * (-c1 - s)).abs()))
}

fn fallback(magnitude: f64) -> GlottalPole {
    GlottalPole {
        angle: GLOTTAL_FALLBACK_ANGLE,
        magnitude: magnitude.clamp(GLOTTAL_MAG_FLOOR, GLOTTAL_MAG_CEIL),
    }
}
