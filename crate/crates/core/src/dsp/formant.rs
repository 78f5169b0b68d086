//! LPC formant tracking.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};

use super::{hamming, lpc_analysis, pre_emphasis, PRE_EMPHASIS, SAMPLE_RATE};

const FORMANT_LPC_ORDER: usize = 12;
const MAX_BANDWIDTH_HZ: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub freq: f64,
    pub bandwidth: f64,
}

/// Roots of `c[0] x^n + c[1] x^{n-1} + … + c[n]` from the companion matrix.
pub fn polynomial_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let lead = c.iter().position(|&v| v != 0.0);
    let Some(lead) = lead else {
        return Vec::new();
    };
    let c = &c[lead..];
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Up to `count` formants of a raw frame, ascending in frequency.
pub fn estimate_formants(frame: &[f64], count: usize) -> Vec<Formant> {
    if frame.len() <= FORMANT_LPC_ORDER {
        return Vec::new();
    }
    let emphasized = pre_emphasis(frame, PRE_EMPHASIS);
    let win = hamming(frame.len());
    let x: Vec<f64> = emphasized.iter().zip(&win).map(|(a, w)| a * w).collect();
    let Ok(lpc) = lpc_analysis(&x, FORMANT_LPC_ORDER) else {
        return Vec::new();
    };
    if lpc.coeffs.iter().all(|&a| a == 0.0) {
        return Vec::new();
    }
    let mut poly = vec![1.0];
    poly.extend_from_slice(&lpc.coeffs);
    let fs = f64::from(SAMPLE_RATE);
    let mut out: Vec<Formant> = polynomial_roots(&poly)
        .into_iter()
        .filter(|z| z.im > 1e-9)
        .map(|z| Formant {
            freq: z.arg() * fs / (2.0 * PI),
            bandwidth: -z.norm().ln() * fs / PI,
        })
        .filter(|f| f.bandwidth < MAX_BANDWIDTH_HZ)
        .collect();
    out.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    out.truncate(count);
    out
}
