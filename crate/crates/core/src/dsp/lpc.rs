//! Linear prediction and line spectral pairs.
//!
//! Predictor polynomials follow A(z) = 1 + a_1 z^-1 + … + a_p z^-p; the
//! synthesis filter is 1/A(z).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gain reported for frames without energy.
pub const GAIN_FLOOR: f64 = 1e-8;

const WHITE_NOISE_CORRECTION: f64 = 1e-9;
const LSP_GRID_START: usize = 1024;
const LSP_GRID_MAX: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq)]
pub struct LpcFrame {
    /// a_1..a_p.
    pub coeffs: Vec<f64>,
    /// Square root of the prediction-error energy.
    pub gain: f64,
}

/// Biased autocorrelation r[0..=max_lag].
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x[..x.len() - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum()
            }
        })
        .collect()
}

/// Levinson-Durbin recursion. Returns `(a_1..a_p, error energy, reflection coefficients)`.
///
/// Stops early (leaving the higher coefficients at zero) if the recursion
/// becomes numerically singular.
pub fn levinson_durbin(r: &[f64], order: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let mut a = vec![0.0; order];
    let mut refl = vec![0.0; order];
    let mut err = r[0];
    if err <= 0.0 {
        return (a, 0.0, refl);
    }
    let mut prev = vec![0.0; order];
    for m in 0..order {
        let acc = r[m + 1] + (0..m).map(|j| a[j] * r[m - j]).sum::<f64>();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            break;
        }
        prev[..m].copy_from_slice(&a[..m]);
        for j in 0..m {
            a[j] = prev[j] + k * prev[m - 1 - j];
        }
        a[m] = k;
        refl[m] = k;
        err *= 1.0 - k * k;
    }
    (a, err, refl)
}

/// Step-up recursion from reflection coefficients to a_1..a_p.
pub fn reflection_to_lpc(refl: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(refl.len());
    for (m, &k) in refl.iter().enumerate() {
        let prev = a.clone();
        for j in 0..m {
            a[j] = prev[j] + k * prev[m - 1 - j];
        }
        a.push(k);
    }
    a
}

/// Autocorrelation-method LPC of an (already windowed) frame.
pub fn lpc_analysis(frame: &[f64], order: usize) -> Result<LpcFrame> {
    if order >= frame.len() {
        return Err(Error::contract(format!(
            "LPC order {order} must be below the frame length {}",
            frame.len()
        )));
    }
    let mut r = autocorrelation(frame, order);
    if !(r[0] > 1e-20) {
        return Ok(LpcFrame {
            coeffs: vec![0.0; order],
            gain: GAIN_FLOOR,
        });
    }
    r[0] *= 1.0 + WHITE_NOISE_CORRECTION;
    let (coeffs, err, _) = levinson_durbin(&r, order);
    Ok(LpcFrame {
        coeffs,
        gain: err.max(0.0).sqrt().max(GAIN_FLOOR),
    })
}

/// y[n] = x[n] − Σ a_i y[n−i], zero initial state.
pub fn all_pole_filter(a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let mut acc = x[n];
        for (i, &ai) in a.iter().enumerate() {
            if n > i {
                acc -= ai * y[n - 1 - i];
            }
        }
        y[n] = acc;
    }
    y
}

/// e[n] = x[n] + Σ a_i x[n−i], zero initial state (inverse filtering).
pub fn fir_filter(a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            x[n] + a
                .iter()
                .enumerate()
                .filter(|(i, _)| n > *i)
                .map(|(i, &ai)| ai * x[n - 1 - i])
                .sum::<f64>()
        })
        .collect()
}

fn sum_difference_polynomials(a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = a.len();
    let mut full = Vec::with_capacity(p + 2);
    full.push(1.0);
    full.extend_from_slice(a);
    full.push(0.0);
    let sum = (0..=p + 1).map(|k| full[k] + full[p + 1 - k]).collect();
    let diff = (0..=p + 1).map(|k| full[k] - full[p + 1 - k]).collect();
    (sum, diff)
}

/// Divides by (1 + sign·z^-lag), assuming exact divisibility.
fn deflate(c: &[f64], sign: f64, lag: usize) -> Vec<f64> {
    let n = c.len() - lag;
    let mut b = vec![0.0; n];
    for k in 0..n {
        b[k] = c[k] - if k >= lag { sign * b[k - lag] } else { 0.0 };
    }
    b
}

/// Zero-phase value of a symmetric polynomial of even degree 2M at frequency
/// with cos ω = x: c_M + 2 Σ_{k≥1} c_{M−k} T_k(x), evaluated with Clenshaw.
fn cosine_series(c: &[f64], x: f64) -> f64 {
    let m = (c.len() - 1) / 2;
    let (mut b1, mut b2) = (0.0, 0.0);
    for k in (1..=m).rev() {
        let b0 = 2.0 * c[m - k] + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[m] + x * b1 - b2
}

fn roots_on_grid(c: &[f64], grid: usize) -> Vec<f64> {
    let f = |w: f64| cosine_series(c, w.cos());
    let mut roots = Vec::new();
    let mut w0 = 0.0;
    let mut f0 = f(w0);
    for i in 1..=grid {
        let w1 = PI * i as f64 / grid as f64;
        let f1 = f(w1);
        if f0 == 0.0 {
            if w0 > 0.0 {
                roots.push(w0);
            }
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (w0, w1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        w0 = w1;
        f0 = f1;
    }
    roots
}

/// Converts a minimum-phase predictor to line spectral pairs (radians,
/// strictly ascending in (0, π)).
///
/// Roots of the sum and difference polynomials are located by a sign-change
/// scan on the unit circle followed by bisection. The grid is refined until
/// every root is found; a predictor whose roots do not interleave (i.e. one
/// that is not minimum phase) is rejected.
pub fn lpc_to_lsp(a: &[f64]) -> Result<Vec<f64>> {
    let p = a.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    let (sum, diff) = sum_difference_polynomials(a);
    let (psym, qsym) = if p % 2 == 0 {
        (deflate(&sum, 1.0, 1), deflate(&diff, -1.0, 1))
    } else {
        (sum, deflate(&diff, -1.0, 2))
    };
    let want_p = (psym.len() - 1) / 2;
    let want_q = (qsym.len() - 1) / 2;

    let mut grid = LSP_GRID_START;
    loop {
        let pr = roots_on_grid(&psym, grid);
        let qr = roots_on_grid(&qsym, grid);
        if pr.len() == want_p && qr.len() == want_q {
            let mut lsp = Vec::with_capacity(p);
            for i in 0..want_p {
                lsp.push(pr[i]);
                if i < want_q {
                    lsp.push(qr[i]);
                }
            }
            if lsp.windows(2).all(|w| w[0] < w[1]) && lsp[0] > 0.0 && lsp[p - 1] < PI {
                return Ok(lsp);
            }
            return Err(Error::RootFinding(
                "sum and difference roots do not interleave (predictor is not minimum phase)".into(),
            ));
        }
        if grid >= LSP_GRID_MAX {
            return Err(Error::RootFinding(format!(
                "found {}+{} roots, expected {want_p}+{want_q} (predictor is not minimum phase)",
                pr.len(),
                qr.len()
            )));
        }
        grid *= 2;
    }
}

fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Inverse of [`lpc_to_lsp`].
pub fn lsp_to_lpc(lsp: &[f64]) -> Result<Vec<f64>> {
    let p = lsp.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    if !lsp.windows(2).all(|w| w[0] < w[1]) || lsp[0] <= 0.0 || lsp[p - 1] >= PI {
        return Err(Error::contract("LSPs must be strictly ascending inside (0, π)"));
    }
    let mut psym = vec![1.0];
    let mut qsym = vec![1.0];
    for (i, &w) in lsp.iter().enumerate() {
        let quad = [1.0, -2.0 * w.cos(), 1.0];
        if i % 2 == 0 {
            psym = multiply(&psym, &quad);
        } else {
            qsym = multiply(&qsym, &quad);
        }
    }
    let (pfull, qfull) = if p % 2 == 0 {
        (multiply(&psym, &[1.0, 1.0]), multiply(&qsym, &[1.0, -1.0]))
    } else {
        (psym, multiply(&qsym, &[1.0, 0.0, -1.0]))
    };
    Ok((1..=p).map(|k| 0.5 * (pfull[k] + qfull[k])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{frame_samples, polynomial_roots};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn max_pole_radius(a: &[f64]) -> f64 {
        let mut poly = vec![1.0];
        poly.extend_from_slice(a);
        polynomial_roots(&poly).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_stable(rng: &mut ChaCha8Rng, order: usize) -> Vec<f64> {
        let refl: Vec<f64> = (0..order).map(|_| rng.random_range(-0.95..0.95)).collect();
        reflection_to_lpc(&refl)
    }

    #[test]
    fn flat_spectrum_lsps_are_uniform() {
        let lsp = lpc_to_lsp(&[0.0, 0.0]).unwrap();
        assert!((lsp[0] - PI / 3.0).abs() < 1e-12);
        assert!((lsp[1] - 2.0 * PI / 3.0).abs() < 1e-12);

        let lsp = lpc_to_lsp(&[0.0; 24]).unwrap();
        for (k, w) in lsp.iter().enumerate() {
            assert!((w - (k + 1) as f64 * PI / 25.0).abs() < 1e-9);
        }
        let a = lsp_to_lpc(&lsp).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn odd_orders_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in [1, 3, 11] {
            let a = random_stable(&mut rng, order);
            let back = lsp_to_lpc(&lpc_to_lsp(&a).unwrap()).unwrap();
            for (x, y) in a.iter().zip(&back) {
                assert!((x - y).abs() < 1e-8, "order {order}");
            }
        }
    }

    #[test]
    fn descending_lsps_are_rejected() {
        let mut lsp: Vec<f64> = (1..=24).map(|k| k as f64 * PI / 25.0).collect();
        lsp.swap(3, 4);
        assert!(matches!(lsp_to_lpc(&lsp), Err(Error::Contract(_))));
    }

    #[test]
    fn non_minimum_phase_is_rejected() {
        // Double zero at z = 2.
        assert!(matches!(lpc_to_lsp(&[-4.0, 4.0]), Err(Error::RootFinding(_))));
        // Zeros at 0.5 and 1.6.
        assert!(matches!(lpc_to_lsp(&[-2.1, 0.8]), Err(Error::RootFinding(_))));
    }

    #[test]
    fn all_zero_frame_gives_floor() {
        let f = lpc_analysis(&[0.0; 400], 24).unwrap();
        assert!(f.coeffs.iter().all(|&c| c == 0.0));
        assert_eq!(f.gain, GAIN_FLOOR);
        assert!(lpc_analysis(&[0.0; 10], 10).is_err());
    }

    #[test]
    fn white_noise_has_small_stable_predictor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let f = lpc_analysis(&frame_samples(&x).frames[0], 2).unwrap();
        assert!(f.coeffs.iter().all(|c| c.abs() < 0.2), "{:?}", f.coeffs);
        assert!(max_pole_radius(&f.coeffs) < 1.0);
    }

    #[test]
    fn recovers_known_ar2_process() {
        // Poles at 0.9·e^{±j0.5}: A(z) = 1 − 2·0.9·cos(0.5) z^-1 + 0.81 z^-2.
        let truth = [-2.0 * 0.9 * 0.5f64.cos(), 0.81];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..2400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y = all_pole_filter(&truth, &noise);
        let frames = frame_samples(&y[2000..]);
        let f = lpc_analysis(&frames.frames[0], 2).unwrap();
        for (est, t) in f.coeffs.iter().zip(&truth) {
            assert!((est - t).abs() < 0.05, "{:?} vs {truth:?}", f.coeffs);
        }
    }

    #[test]
    fn speechlike_frames_are_minimum_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = reflection_to_lpc(&[-0.9, 0.7, -0.3, 0.2]);
        let noise: Vec<f64> = (0..800).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y = all_pole_filter(&truth, &noise);
        let f = lpc_analysis(&frame_samples(&y).frames[1], 24).unwrap();
        assert!(max_pole_radius(&f.coeffs) < 1.0);
        let lsp = lpc_to_lsp(&f.coeffs).unwrap();
        assert_eq!(lsp.len(), 24);
    }

    #[test]
    fn inverse_filter_undoes_synthesis_filter() {
        let a = [-1.2, 0.6, 0.1];
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let back = fir_filter(&a, &all_pole_filter(&a, &x));
        for (p, q) in x.iter().zip(&back) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(64))]
        #[test]
        fn lsp_round_trip_is_tight(seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_stable(&mut rng, 24);
            let lsp = lpc_to_lsp(&a).unwrap();
            proptest::prop_assert!(lsp.windows(2).all(|w| w[0] < w[1]));
            proptest::prop_assert!(lsp[0] > 0.0 && lsp[23] < PI);
            let back = lsp_to_lpc(&lsp).unwrap();
            for (x, y) in a.iter().zip(&back) {
                proptest::prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}
