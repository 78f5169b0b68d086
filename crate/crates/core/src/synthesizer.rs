//! Posteriors → vocoder parameters → audio.
//!
//! Static parameter layout per frame: 24 LSPs, log gain, log HNR, glottal
//! pole angle, log glottal pole magnitude, log F0. Dynamic tracks append Δ
//! and ΔΔ blocks in the same order for 87 values.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analyzer::{column_stats, read_system_file, write_system_file, AnalyzerBank};
use crate::dsp::{
    all_pole_filter, append_deltas, estimate_f0, estimate_glottal_pole, estimate_hnr, hamming,
    lpc_analysis, lpc_to_lsp, lsp_to_lpc, overlap_add, samples_for_frames, split_frames,
    stack_context, Waveform, F0_MAX, F0_MIN, FRAME_SHIFT, WINDOW_LEN,
};
use crate::error::{Error, Result};
use crate::neural::{init_network, train, Head, History, Network, TrainConfig};
use crate::phonoset::{FeatureSystem, PosteriorMatrix};

pub const LSP_ORDER: usize = 24;
pub const STATIC_DIM: usize = 29;
pub const PARAM_DIM: usize = 3 * STATIC_DIM;
pub const SYNTH_CONTEXT: usize = 11;

pub const IDX_LOG_GAIN: usize = 24;
pub const IDX_LOG_HNR: usize = 25;
pub const IDX_GLOTTAL_ANGLE: usize = 26;
pub const IDX_GLOTTAL_LOG_MAG: usize = 27;
pub const IDX_LOG_F0: usize = 28;

/// log F0 stored when an utterance has no voiced frame at all.
pub const UNVOICED_LOG_F0: f64 = 0.0;
/// Frames whose harmonic share sigmoid(log HNR) falls below this are unvoiced.
pub const VOICING_HNR_SHARE: f64 = 0.25;
pub const DEFAULT_ENHANCEMENT: f64 = 1.2;
pub const MIN_LSP_GAP: f64 = 0.005;
pub const OUTPUT_PEAK: f64 = 0.9;

/// Extra samples run through the filters before each frame so its start
/// does not ring up from a zero state.
const FILTER_WARMUP: usize = 240;

/// Per-frame vocoder parameters, 29 (static) or 87 (with dynamics) wide.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeechParamTrack {
    pub frames: Vec<Vec<f64>>,
}

impl SpeechParamTrack {
    pub fn new(frames: Vec<Vec<f64>>) -> Self {
        SpeechParamTrack { frames }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// The static block of every frame.
    pub fn statics(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|f| f[..STATIC_DIM].to_vec()).collect()
    }
}

/// Where resynthesis takes its pitch from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PitchSource {
    /// The log F0 and HNR values in the parameter track.
    #[default]
    Model,
    /// F0 in Hz per frame; 0 marks an unvoiced frame.
    External(Vec<f64>),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bandwidth-expands a predictor until it converts to LSPs.
fn robust_lsp(a: &[f64]) -> Vec<f64> {
    let mut coeffs = a.to_vec();
    for _ in 0..20 {
        if let Ok(lsp) = lpc_to_lsp(&coeffs) {
            return lsp;
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c *= 0.98f64.powi(i as i32 + 1);
        }
    }
    flat_lsp(a.len())
}

fn flat_lsp(order: usize) -> Vec<f64> {
    (1..=order).map(|k| k as f64 * PI / (order + 1) as f64).collect()
}

/// Per-frame F0 in Hz (0 when unvoiced) from raw frames.
pub fn f0_track(w: &Waveform) -> Vec<f64> {
    split_frames(w.samples())
        .iter()
        .map(|f| estimate_f0(f, F0_MIN, F0_MAX).unwrap_or(0.0))
        .collect()
}

/// Fills unvoiced log F0 entries by linear interpolation between voiced
/// neighbours, holding the edge values. All-unvoiced input gets the sentinel.
fn interpolate_log_f0(f0: &[Option<f64>]) -> Vec<f64> {
    let voiced: Vec<(usize, f64)> = f0
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|f| (i, f.ln())))
        .collect();
    if voiced.is_empty() {
        return vec![UNVOICED_LOG_F0; f0.len()];
    }
    let mut out = vec![0.0; f0.len()];
    let mut k = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while k + 1 < voiced.len() && voiced[k + 1].0 <= i {
            k += 1;
        }
        let (i0, v0) = voiced[k];
        *o = if i <= i0 || k + 1 == voiced.len() {
            v0
        } else {
            let (i1, v1) = voiced[k + 1];
            v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64
        };
    }
    out
}

/// Static 29-dim parameters of every frame of `w`.
pub fn extract_statics(w: &Waveform) -> Vec<Vec<f64>> {
    let frames = split_frames(w.samples());
    let win = hamming(WINDOW_LEN);
    let mut f0 = Vec::with_capacity(frames.len());
    let mut rows = Vec::with_capacity(frames.len());
    for raw in &frames {
        let windowed: Vec<f64> = raw.iter().zip(&win).map(|(x, w)| x * w).collect();
        let lpc = lpc_analysis(&windowed, LSP_ORDER).expect("order below frame length");
        let mut row = robust_lsp(&lpc.coeffs);
        let pitch = estimate_f0(raw, F0_MIN, F0_MAX);
        let glottal = estimate_glottal_pole(raw, &lpc.coeffs);
        row.push(lpc.gain.ln());
        row.push(estimate_hnr(raw, pitch));
        row.push(glottal.angle);
        row.push(glottal.magnitude.ln());
        row.push(0.0);
        f0.push(pitch);
        rows.push(row);
    }
    for (row, lf0) in rows.iter_mut().zip(interpolate_log_f0(&f0)) {
        row[IDX_LOG_F0] = lf0;
    }
    rows
}

/// Training targets: statics plus Δ and ΔΔ, 87 wide.
pub fn extract_targets(w: &Waveform) -> SpeechParamTrack {
    let statics = extract_statics(w);
    if statics.is_empty() {
        return SpeechParamTrack::default();
    }
    SpeechParamTrack::new(append_deltas(&statics))
}

/// Symmetric positive-definite band matrix with half-bandwidth 2.
struct Band5 {
    /// `diag[k][i]` holds entry (i, i+k).
    diag: [Vec<f64>; 3],
}

impl Band5 {
    fn new(n: usize) -> Self {
        Band5 {
            diag: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    /// Adds `p · rᵀr` for a sparse row `r`.
    fn add_outer(&mut self, row: &[(usize, f64)], p: f64) {
        for &(i, a) in row {
            for &(j, b) in row {
                if j >= i {
                    self.diag[j - i][i] += p * a * b;
                }
            }
        }
    }

    /// In-place banded Cholesky followed by forward and back substitution.
    fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = rhs.len();
        let [d0, d1, d2] = &mut self.diag;
        for i in 0..n {
            let mut s = d0[i];
            if i >= 1 {
                s -= d1[i - 1] * d1[i - 1];
            }
            if i >= 2 {
                s -= d2[i - 2] * d2[i - 2];
            }
            if !(s > 0.0) {
                return Err(Error::contract("MLPG system is not positive definite"));
            }
            d0[i] = s.sqrt();
            if i + 1 < n {
                let mut v = d1[i];
                if i >= 1 {
                    v -= d1[i - 1] * d2[i - 1];
                }
                d1[i] = v / d0[i];
            }
            if i + 2 < n {
                d2[i] /= d0[i];
            }
        }
        for i in 0..n {
            let mut v = rhs[i];
            if i >= 1 {
                v -= d1[i - 1] * rhs[i - 1];
            }
            if i >= 2 {
                v -= d2[i - 2] * rhs[i - 2];
            }
            rhs[i] = v / d0[i];
        }
        for i in (0..n).rev() {
            let mut v = rhs[i];
            if i + 1 < n {
                v -= d1[i] * rhs[i + 1];
            }
            if i + 2 < n {
                v -= d2[i] * rhs[i + 2];
            }
            rhs[i] = v / d0[i];
        }
        Ok(())
    }
}

/// Sparse rows of the Δ and ΔΔ windows at frame `t` with edge replication.
fn window_rows(t: usize, n: usize) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let prev = t.saturating_sub(1);
    let next = (t + 1).min(n - 1);
    let mut delta: Vec<(usize, f64)> = Vec::with_capacity(2);
    let mut accel: Vec<(usize, f64)> = Vec::with_capacity(3);
    let add = |v: &mut Vec<(usize, f64)>, i: usize, c: f64| match v.iter_mut().find(|e| e.0 == i) {
        Some(e) => e.1 += c,
        None => v.push((i, c)),
    };
    add(&mut delta, next, 0.5);
    add(&mut delta, prev, -0.5);
    add(&mut accel, prev, 1.0);
    add(&mut accel, t, -2.0);
    add(&mut accel, next, 1.0);
    delta.retain(|e| e.1 != 0.0);
    accel.retain(|e| e.1 != 0.0);
    (delta, accel)
}

/// Maximum-likelihood static trajectories from 87-wide means and global
/// variances, one banded solve per static dimension.
pub fn mlpg_smooth(raw: &SpeechParamTrack, variances: &[f64]) -> Result<Vec<Vec<f64>>> {
    if variances.len() != PARAM_DIM {
        return Err(Error::Dimension {
            expected: PARAM_DIM,
            got: variances.len(),
        });
    }
    if let Some(i) = variances.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::contract(format!("variance {i} is not positive")));
    }
    if raw.frames.iter().any(|f| f.len() != PARAM_DIM) {
        return Err(Error::Dimension {
            expected: PARAM_DIM,
            got: raw.width(),
        });
    }
    let n = raw.num_frames();
    let mut out = vec![vec![0.0; STATIC_DIM]; n];
    if n == 0 {
        return Ok(out);
    }
    let rows: Vec<_> = (0..n).map(|t| window_rows(t, n)).collect();
    for d in 0..STATIC_DIM {
        let (ps, pd, pa) = (
            1.0 / variances[d],
            1.0 / variances[STATIC_DIM + d],
            1.0 / variances[2 * STATIC_DIM + d],
        );
        let mut m = Band5::new(n);
        let mut rhs = vec![0.0; n];
        for t in 0..n {
            let f = &raw.frames[t];
            m.add_outer(&[(t, 1.0)], ps);
            rhs[t] += ps * f[d];
            let (delta, accel) = &rows[t];
            m.add_outer(delta, pd);
            for &(i, c) in delta {
                rhs[i] += pd * c * f[STATIC_DIM + d];
            }
            m.add_outer(accel, pa);
            for &(i, c) in accel {
                rhs[i] += pa * c * f[2 * STATIC_DIM + d];
            }
        }
        m.solve(&mut rhs)?;
        for (row, v) in out.iter_mut().zip(rhs) {
            row[d] = v;
        }
    }
    Ok(out)
}

/// Sorts LSPs and enforces the minimum gap inside (0, π).
pub fn sanitize_lsp(lsp: &[f64]) -> Vec<f64> {
    let p = lsp.len();
    let mut v: Vec<f64> = lsp
        .iter()
        .map(|x| if x.is_finite() { *x } else { PI / 2.0 })
        .collect();
    v.sort_by(f64::total_cmp);
    let mut lo = MIN_LSP_GAP;
    for x in v.iter_mut() {
        *x = x.max(lo);
        lo = *x + MIN_LSP_GAP;
    }
    let mut hi = PI - MIN_LSP_GAP;
    for x in v.iter_mut().rev() {
        *x = x.min(hi);
        hi = *x - MIN_LSP_GAP;
    }
    if v.first().is_some_and(|&x| x < MIN_LSP_GAP) {
        return flat_lsp(p);
    }
    v
}

/// Gap-exponent postfilter: the p+1 gaps between 0, the LSPs and π are raised
/// to `gamma`, rescaled to sum to π and kept at least `MIN_LSP_GAP` wide.
pub fn formant_enhance(lsp: &[f64], gamma: f64) -> Vec<f64> {
    if gamma == 1.0 || lsp.is_empty() {
        return lsp.to_vec();
    }
    let mut gaps: Vec<f64> = Vec::with_capacity(lsp.len() + 1);
    let mut prev = 0.0;
    for &w in lsp {
        gaps.push(w - prev);
        prev = w;
    }
    gaps.push(PI - prev);
    let mut g: Vec<f64> = gaps.iter().map(|x| x.max(0.0).powf(gamma)).collect();
    let mut pinned = vec![false; g.len()];
    for _ in 0..g.len() {
        let fixed: f64 = pinned.iter().filter(|&&p| p).count() as f64 * MIN_LSP_GAP;
        let free: f64 = g.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(x, _)| x).sum();
        if free <= 0.0 {
            break;
        }
        let scale = (PI - fixed) / free;
        let mut changed = false;
        for (x, p) in g.iter_mut().zip(pinned.iter_mut()) {
            if *p {
                *x = MIN_LSP_GAP;
            } else {
                *x *= scale;
                if *x < MIN_LSP_GAP {
                    *p = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(lsp.len());
    let mut acc = 0.0;
    for x in &g[..lsp.len()] {
        acc += x;
        out.push(acc);
    }
    out
}

/// Renders a 29-wide static track. Output length is `(N-1)·160 + 400`
/// samples, peak-normalized to 0.9.
pub fn resynthesize(statics: &[Vec<f64>], pitch: &PitchSource, seed: u64) -> Result<Waveform> {
    let n = statics.len();
    if n == 0 {
        return Waveform::new(Vec::new(), crate::dsp::SAMPLE_RATE);
    }
    if let Some(bad) = statics.iter().position(|f| f.len() != STATIC_DIM) {
        return Err(Error::contract(format!("frame {bad} is not {STATIC_DIM} wide")));
    }
    if let PitchSource::External(track) = pitch {
        if track.len() < n {
            return Err(Error::Dimension {
                expected: n,
                got: track.len(),
            });
        }
    }
    let total = samples_for_frames(n);
    let fs = f64::from(crate::dsp::SAMPLE_RATE);

    // Per-frame voicing and F0.
    let frame_pitch: Vec<Option<f64>> = (0..n)
        .map(|t| match pitch {
            PitchSource::Model => {
                let share = sigmoid(statics[t][IDX_LOG_HNR]);
                (share >= VOICING_HNR_SHARE)
                    .then(|| statics[t][IDX_LOG_F0].exp().clamp(F0_MIN, F0_MAX))
            }
            PitchSource::External(track) => (track[t] > 0.0).then(|| track[t].clamp(F0_MIN, F0_MAX)),
        })
        .collect();

    // One continuous pulse train and one noise stream for the whole utterance.
    let mut pulses = vec![0.0; total];
    let mut phase = 0.0;
    for (s, p) in pulses.iter_mut().enumerate() {
        let t = (s.saturating_sub(WINDOW_LEN / 2) / FRAME_SHIFT).min(n - 1);
        if let Some(f0) = frame_pitch[t] {
            phase += f0 / fs;
            if phase >= 1.0 {
                phase -= 1.0;
                *p = (fs / f0).sqrt();
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..total).map(|_| StandardNormal.sample(&mut rng)).collect();

    let window_energy: f64 = hamming(WINDOW_LEN).iter().map(|w| w * w).sum();
    let mut segments = Vec::with_capacity(n);
    for (t, frame) in statics.iter().enumerate() {
        let start = t * FRAME_SHIFT;
        let from = start.saturating_sub(FILTER_WARMUP);
        let end = start + WINDOW_LEN;
        let lead = start - from;
        let mut excitation: Vec<f64> = noise[from..end].to_vec();
        if frame_pitch[t].is_some() {
            let share = sigmoid(frame[IDX_LOG_HNR]).clamp(0.0, 1.0);
            let mag = frame[IDX_GLOTTAL_LOG_MAG].exp().clamp(1e-3, 0.98);
            let angle = frame[IDX_GLOTTAL_ANGLE].clamp(1e-3, PI - 1e-3);
            let glottal = [-2.0 * mag * angle.cos(), mag * mag];
            let harmonic = all_pole_filter(&glottal, &pulses[from..end]);
            let power = harmonic[lead..].iter().map(|v| v * v).sum::<f64>() / WINDOW_LEN as f64;
            let scale = if power > 0.0 { power.sqrt().recip() } else { 0.0 };
            for (e, h) in excitation.iter_mut().zip(&harmonic) {
                *e = share.sqrt() * h * scale + (1.0 - share).sqrt() * *e;
            }
        }
        let a = lsp_to_lpc(&sanitize_lsp(&frame[..LSP_ORDER]))?;
        let gain = frame[IDX_LOG_GAIN].clamp(-40.0, 10.0).exp() / window_energy.sqrt();
        let shaped = all_pole_filter(&a, &excitation);
        segments.push(shaped[lead..].iter().map(|v| v * gain).collect());
    }
    let w = overlap_add(&segments, FRAME_SHIFT)?;
    let mut samples = w.into_samples();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 && peak.is_finite() {
        for s in samples.iter_mut() {
            *s *= OUTPUT_PEAK / peak;
        }
    }
    for s in samples.iter_mut() {
        if !s.is_finite() {
            *s = 0.0;
        }
    }
    Waveform::new(samples, crate::dsp::SAMPLE_RATE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub heldout_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            hidden: vec![256, 256, 256, 256],
            train: TrainConfig::regressor(),
            heldout_fraction: 0.1,
        }
    }
}

/// Options shared by every path that turns posteriors into audio.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub enhancement: f64,
    pub seed: u64,
    pub pitch: PitchSource,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            enhancement: DEFAULT_ENHANCEMENT,
            seed: 0,
            pitch: PitchSource::Model,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthModel {
    net: Network,
    global_variances: Vec<f64>,
    system: FeatureSystem,
    input_means: Vec<f64>,
}

/// Outcome of synthesizer training.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub history: History,
    /// Held-out mean squared error per target value (de-standardized units).
    pub heldout_mse: Option<f64>,
    /// The same for a predictor that always outputs the training mean.
    pub baseline_mse: Option<f64>,
}

fn stacked_inputs(z: &PosteriorMatrix) -> Vec<Vec<f64>> {
    if z.frames.is_empty() {
        return Vec::new();
    }
    stack_context(&z.frames, SYNTH_CONTEXT).expect("odd context")
}

fn utterance_mask(n: usize, fraction: f64) -> Vec<bool> {
    // Every k-th utterance is held out, so the split does not depend on order statistics.
    if n < 2 || fraction <= 0.0 {
        return vec![false; n];
    }
    let k = (1.0 / fraction).round().max(2.0) as usize;
    (0..n).map(|i| i % k == k - 1).collect()
}

pub fn train_synthesizer(
    corpus: &[(PosteriorMatrix, SpeechParamTrack)],
    sys: &FeatureSystem,
    cfg: &SynthConfig,
) -> Result<(SynthModel, SynthReport)> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot train a synthesizer on an empty corpus".into()));
    }
    for (i, (z, y)) in corpus.iter().enumerate() {
        if z.num_frames() != y.num_frames() {
            return Err(Error::Data(format!(
                "utterance {i}: {} posterior frames but {} target frames",
                z.num_frames(),
                y.num_frames()
            )));
        }
        if z.num_frames() > 0 && z.width() != sys.width() {
            return Err(Error::Data(format!(
                "utterance {i}: posteriors are {} wide, system {} has {}",
                z.width(),
                sys.name(),
                sys.width()
            )));
        }
        if y.num_frames() > 0 && y.width() != PARAM_DIM {
            return Err(Error::Data(format!("utterance {i}: targets are {} wide", y.width())));
        }
    }
    let held = utterance_mask(corpus.len(), cfg.heldout_fraction);
    let gather = |want: bool| -> (Vec<f64>, Vec<f64>, usize) {
        let (mut x, mut t, mut rows) = (Vec::new(), Vec::new(), 0);
        for ((z, y), &h) in corpus.iter().zip(&held) {
            if h != want {
                continue;
            }
            for (xi, yi) in stacked_inputs(z).iter().zip(&y.frames) {
                x.extend_from_slice(xi);
                t.extend_from_slice(yi);
                rows += 1;
            }
        }
        (x, t, rows)
    };
    let input_dim = sys.width() * SYNTH_CONTEXT;
    let (x, t, rows) = gather(false);
    if rows == 0 {
        return Err(Error::Data("corpus has no frames".into()));
    }
    let mut xtr = Array2::from_shape_vec((rows, input_dim), x).expect("rows");
    let ttr_raw = Array2::from_shape_vec((rows, PARAM_DIM), t).expect("rows");
    let (hx, ht, hrows) = gather(true);
    let mut xho = Array2::from_shape_vec((hrows, input_dim), hx).expect("rows");
    let tho_raw = Array2::from_shape_vec((hrows, PARAM_DIM), ht).expect("rows");

    let input_means = xtr.mean_axis(Axis(0)).expect("rows").to_vec();
    for x in [&mut xtr, &mut xho] {
        for mut row in x.rows_mut() {
            row.iter_mut().zip(&input_means).for_each(|(v, m)| *v -= m);
        }
    }
    let (tmean, tstd) = column_stats(ttr_raw.view());
    let standardize = |t: &Array2<f64>| {
        let mut s = t.clone();
        for mut row in s.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - tmean[j]) / tstd[j];
            }
        }
        s
    };
    let ttr = standardize(&ttr_raw);
    let tho = standardize(&tho_raw);

    let mut sizes = vec![input_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(PARAM_DIM);
    let net = init_network(&sizes, Head::Linear, cfg.train.seed)?;
    let heldout = (hrows > 0).then(|| (xho.view(), tho.view()));
    let (mut net, history) = train(&net, xtr.view(), ttr.view(), &cfg.train, heldout)?;

    // Fold de-standardization into the output layer.
    let last = net.layers_mut().last_mut().expect("layers");
    for (j, (&m, &s)) in tmean.iter().zip(&tstd).enumerate() {
        last.weights.row_mut(j).mapv_inplace(|w| w * s);
        last.biases[j] = last.biases[j] * s + m;
    }

    let global_variances: Vec<f64> = ttr_raw
        .var_axis(Axis(0), 0.0)
        .iter()
        .map(|&v| v.max(1e-8))
        .collect();

    let (heldout_mse, baseline_mse) = if hrows > 0 {
        let pred = net.forward_batch(xho.view())?;
        let count = (hrows * PARAM_DIM) as f64;
        let mse = (&pred - &tho_raw).mapv(|v| v * v).sum() / count;
        let mut base = 0.0;
        for row in tho_raw.rows() {
            base += row.iter().zip(&tmean).map(|(v, m)| (v - m).powi(2)).sum::<f64>();
        }
        (Some(mse), Some(base / count))
    } else {
        (None, None)
    };
    Ok((
        SynthModel {
            net,
            global_variances,
            system: sys.clone(),
            input_means,
        },
        SynthReport {
            history,
            heldout_mse,
            baseline_mse,
        },
    ))
}

impl SynthModel {
    pub fn new(
        net: Network,
        global_variances: Vec<f64>,
        system: FeatureSystem,
        input_means: Vec<f64>,
    ) -> Result<Self> {
        let input_dim = system.width() * SYNTH_CONTEXT;
        if net.input_size() != input_dim || net.output_size() != PARAM_DIM {
            return Err(Error::contract(format!(
                "synthesizer net must map {input_dim} inputs to {PARAM_DIM} outputs, got {:?}",
                net.sizes()
            )));
        }
        if global_variances.len() != PARAM_DIM || global_variances.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::contract("global variances must be 87 positive values"));
        }
        if input_means.len() != input_dim {
            return Err(Error::Dimension {
                expected: input_dim,
                got: input_means.len(),
            });
        }
        Ok(SynthModel {
            net,
            global_variances,
            system,
            input_means,
        })
    }

    /// A freshly initialised model, useful as an untrained baseline.
    pub fn untrained(system: &FeatureSystem, hidden: &[usize], seed: u64) -> Result<Self> {
        let input_dim = system.width() * SYNTH_CONTEXT;
        let mut sizes = vec![input_dim];
        sizes.extend(hidden);
        sizes.push(PARAM_DIM);
        SynthModel::new(
            init_network(&sizes, Head::Linear, seed)?,
            vec![1.0; PARAM_DIM],
            system.clone(),
            vec![0.0; input_dim],
        )
    }

    pub fn system(&self) -> &FeatureSystem {
        &self.system
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn global_variances(&self) -> &[f64] {
        &self.global_variances
    }

    pub fn input_means(&self) -> &[f64] {
        &self.input_means
    }

    /// Raw 87-wide parameters, one frame per posterior frame.
    pub fn generate_params(&self, z: &PosteriorMatrix) -> Result<SpeechParamTrack> {
        if z.num_frames() == 0 {
            return Ok(SpeechParamTrack::default());
        }
        if z.width() != self.system.width() {
            return Err(Error::Dimension {
                expected: self.system.width(),
                got: z.width(),
            });
        }
        let mut x = crate::neural::to_matrix(&stacked_inputs(z))?;
        for mut row in x.rows_mut() {
            row.iter_mut().zip(&self.input_means).for_each(|(v, m)| *v -= m);
        }
        let y = self.net.forward_batch(x.view())?;
        Ok(SpeechParamTrack::new(y.rows().into_iter().map(|r| r.to_vec()).collect()))
    }

    /// Smoothed, enhanced statics ready for resynthesis.
    pub fn smoothed_statics(&self, z: &PosteriorMatrix, enhancement: f64) -> Result<Vec<Vec<f64>>> {
        let raw = self.generate_params(z)?;
        let mut statics = mlpg_smooth(&raw, &self.global_variances)?;
        for f in statics.iter_mut() {
            let lsp = formant_enhance(&sanitize_lsp(&f[..LSP_ORDER]), enhancement);
            f[..LSP_ORDER].copy_from_slice(&lsp);
        }
        Ok(statics)
    }

    /// Posteriors → parameters → smoothing → enhancement → audio.
    pub fn render(&self, z: &PosteriorMatrix, opts: &RenderOptions) -> Result<Waveform> {
        if z.num_frames() > 0 && z.system != self.system.name() {
            return Err(Error::SystemMismatch(z.system.clone(), self.system.name().to_string()));
        }
        resynthesize(&self.smoothed_statics(z, opts.enhancement)?, &opts.pitch, opts.seed)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_system_file(&self.system, &dir.join("system.txt"))?;
        self.net.save(&dir.join("synth.net"))?;
        write_vector(&dir.join("gv.txt"), &self.global_variances)?;
        write_vector(&dir.join("norm.txt"), &self.input_means)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let needed = ["system.txt", "synth.net", "gv.txt", "norm.txt"].map(|f| dir.join(f));
        let missing: Vec<_> = needed.iter().filter(|p| !p.is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        SynthModel::new(
            Network::load(&needed[1])?,
            read_vector(&needed[2])?,
            read_system_file(&needed[0])?,
            read_vector(&needed[3])?,
        )
    }
}

fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let text: String = v.iter().map(|x| format!("{x:.16e}\n")).collect();
    crate::error::write_bytes(path, text)?;
    Ok(())
}

fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let name = path.display().to_string();
    crate::error::read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::parse(&name, i + 1, format!("bad number `{}`", l.trim())))
        })
        .collect()
}

/// Analysis followed by resynthesis through the model.
pub fn vocode(bank: &AnalyzerBank, model: &SynthModel, w: &Waveform, opts: &RenderOptions) -> Result<Waveform> {
    if bank.system().name() != model.system().name() || bank.system().features() != model.system().features() {
        return Err(Error::SystemMismatch(
            bank.system().name().to_string(),
            model.system().name().to_string(),
        ));
    }
    let z = bank.analyze(w);
    model.render(&z, opts)
}
