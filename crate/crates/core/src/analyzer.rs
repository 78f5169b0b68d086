//! Bank of per-feature binary classifiers mapping PLP context windows to
//! phonological posteriors.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{acoustic_features, stack_context, Waveform, FRAME_SHIFT_SECONDS, PLP_DIM};
use crate::error::{Error, Result};
use crate::neural::{init_network, train, History, Network, TrainConfig};
use crate::phonoset::{load_system, FeatureSystem, PhoneAlignment, PosteriorMatrix, SystemName};

/// Frames of PLP context per analyzer input.
pub const ANALYZER_CONTEXT: usize = 9;
pub const ANALYZER_INPUT: usize = PLP_DIM * ANALYZER_CONTEXT;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerConfig {
    /// Hidden layer sizes between the 351 inputs and the 2 outputs.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Share of utterances held out for early stopping and accuracy.
    pub heldout_fraction: f64,
    /// Keep every `frame_stride`-th training frame.
    pub frame_stride: usize,
    /// Worker threads; features are trained independently.
    pub jobs: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            hidden: vec![256, 64, 256],
            train: TrainConfig::classifier(),
            heldout_fraction: 0.1,
            frame_stride: 1,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAccuracy {
    pub feature: String,
    pub train_accuracy: f64,
    pub heldout_accuracy: Option<f64>,
    /// Share of training frames where the feature is active.
    pub positive_rate: f64,
    /// Only one class occurs in the training labels.
    pub degenerate: bool,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyTable {
    pub rows: Vec<FeatureAccuracy>,
}

impl AccuracyTable {
    /// Mean held-out accuracy over non-degenerate features.
    pub fn mean_heldout(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| !r.degenerate)
            .filter_map(|r| r.heldout_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

impl fmt::Display for AccuracyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8} {:>8} {:>8}  note", "feature", "train", "heldout", "active")?;
        for r in &self.rows {
            let held = r.heldout_accuracy.map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a));
            writeln!(
                f,
                "{:<12} {:>8.2} {:>8} {:>8.2}  {}",
                r.feature,
                100.0 * r.train_accuracy,
                held,
                100.0 * r.positive_rate,
                if r.degenerate { "degenerate" } else { "" }
            )?;
        }
        if let Some(m) = self.mean_heldout() {
            writeln!(f, "mean held-out accuracy {:.2}", 100.0 * m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerBank {
    system: FeatureSystem,
    nets: Vec<Network>,
}

/// Stacked 9-frame PLP inputs for every frame of `w`.
pub fn analyzer_inputs(w: &Waveform) -> Vec<Vec<f64>> {
    let feats = acoustic_features(w);
    if feats.is_empty() {
        return feats;
    }
    stack_context(&feats, ANALYZER_CONTEXT).expect("odd context")
}

fn utterance_split(n: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let mut held = vec![false; n];
    if n < 2 || fraction <= 0.0 {
        return held;
    }
    let count = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    for &i in &order[..count] {
        held[i] = true;
    }
    held
}

/// Folds `(x - mean) / std` into the first layer.
fn fold_input_normalization(net: &mut Network, mean: &[f64], std: &[f64]) {
    let first = &mut net.layers_mut()[0];
    for (j, (&m, &s)) in mean.iter().zip(std).enumerate() {
        let mut col = first.weights.column_mut(j);
        col.mapv_inplace(|w| w / s);
        let shift = col.to_owned() * m;
        first.biases -= &shift;
    }
}

pub(crate) fn column_stats(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let std = x
        .std_axis(Axis(0), 0.0)
        .iter()
        .map(|&s| if s > 1e-8 { s } else { 1.0 })
        .collect();
    (mean, std)
}

struct Dataset {
    inputs: Array2<f64>,
    /// Feature rows per frame, `N × K`.
    labels: Array2<f64>,
}

fn build_dataset(corpus: &[(&Waveform, &PhoneAlignment)], sys: &FeatureSystem, stride: usize) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (w, align) in corpus {
        let inputs = analyzer_inputs(w);
        let frame_labels = align.frame_labels();
        let n = inputs.len().min(frame_labels.len());
        for t in (0..n).step_by(stride.max(1)) {
            rows.extend_from_slice(&inputs[t]);
            labels.extend_from_slice(sys.row(frame_labels[t])?);
        }
    }
    let frames = labels.len() / sys.width();
    Ok(Dataset {
        inputs: Array2::from_shape_vec((frames, ANALYZER_INPUT), rows).expect("rows"),
        labels: Array2::from_shape_vec((frames, sys.width()), labels).expect("labels"),
    })
}

fn one_hot(bits: ndarray::ArrayView1<f64>) -> Array2<f64> {
    let mut t = Array2::zeros((bits.len(), 2));
    for (i, &b) in bits.iter().enumerate() {
        t[(i, usize::from(b >= 0.5))] = 1.0;
    }
    t
}

fn accuracy(net: &Network, x: ArrayView2<f64>, bits: ndarray::ArrayView1<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::NAN;
    }
    let y = net.forward_batch(x).expect("shape");
    let hits = y
        .rows()
        .into_iter()
        .zip(bits)
        .filter(|(row, &b)| (row[1] >= row[0]) == (b >= 0.5))
        .count();
    hits as f64 / x.nrows() as f64
}

/// Trains one two-class network per feature column of `sys`.
pub fn train_analyzer_bank(
    corpus: &[(&Waveform, &PhoneAlignment)],
    sys: &FeatureSystem,
    cfg: &AnalyzerConfig,
) -> Result<(AnalyzerBank, AccuracyTable)> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot train an analyzer bank on an empty corpus".into()));
    }
    let held = utterance_split(corpus.len(), cfg.heldout_fraction, cfg.train.seed);
    let pick = |want: bool| -> Vec<(&Waveform, &PhoneAlignment)> {
        corpus.iter().zip(&held).filter(|(_, &h)| h == want).map(|(c, _)| *c).collect()
    };
    let train_set = build_dataset(&pick(false), sys, cfg.frame_stride)?;
    let held_set = build_dataset(&pick(true), sys, 1)?;
    if train_set.inputs.nrows() == 0 {
        return Err(Error::Data("corpus has no labelled frames".into()));
    }
    log::info!(
        "analyzer: {} training frames, {} held-out frames, {} features",
        train_set.inputs.nrows(),
        held_set.inputs.nrows(),
        sys.width()
    );
    let (mean, std) = column_stats(train_set.inputs.view());
    let normalize = |x: &Array2<f64>| {
        let mut z = x.clone();
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j];
            }
        }
        z
    };
    let xtr = normalize(&train_set.inputs);
    let xho = normalize(&held_set.inputs);

    let mut sizes = vec![ANALYZER_INPUT];
    sizes.extend(&cfg.hidden);
    sizes.push(2);

    let train_one = |k: usize| -> Result<(Network, FeatureAccuracy)> {
        let bits = train_set.labels.column(k);
        let positives = bits.iter().filter(|&&b| b >= 0.5).count();
        let degenerate = positives == 0 || positives == bits.len();
        let seed = cfg.train.seed.wrapping_add(k as u64);
        let net = init_network(&sizes, crate::neural::Head::Softmax, seed)?;
        let tcfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let t = one_hot(bits);
        let hb = held_set.labels.column(k);
        let ht = one_hot(hb);
        let heldout = (xho.nrows() > 0).then(|| (xho.view(), ht.view()));
        let (net, history): (Network, History) = train(&net, xtr.view(), t.view(), &tcfg, heldout)?;
        let acc = FeatureAccuracy {
            feature: sys.features()[k].clone(),
            train_accuracy: accuracy(&net, xtr.view(), bits),
            heldout_accuracy: (xho.nrows() > 0).then(|| accuracy(&net, xho.view(), hb)),
            positive_rate: positives as f64 / bits.len() as f64,
            degenerate,
            best_epoch: history.best_epoch,
        };
        log::info!(
            "feature {}: train {:.3} held-out {:?} (best epoch {})",
            acc.feature,
            acc.train_accuracy,
            acc.heldout_accuracy,
            acc.best_epoch
        );
        Ok((net, acc))
    };

    let k = sys.width();
    let jobs = cfg.jobs.clamp(1, k);
    let mut results: Vec<Option<Result<(Network, FeatureAccuracy)>>> = (0..k).map(|_| None).collect();
    if jobs == 1 {
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(train_one(i));
        }
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let train_one = &train_one;
                    s.spawn(move || {
                        (j..k).step_by(jobs).map(|i| (i, train_one(i))).collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("training thread panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }
    let mut nets = Vec::with_capacity(k);
    let mut table = AccuracyTable::default();
    for r in results {
        let (mut net, acc) = r.expect("every feature trained")?;
        fold_input_normalization(&mut net, &mean, &std);
        nets.push(net);
        table.rows.push(acc);
    }
    Ok((
        AnalyzerBank {
            system: sys.clone(),
            nets,
        },
        table,
    ))
}

/// Writes `system.txt`: the system name, then its table as CSV.
pub(crate) fn write_system_file(sys: &FeatureSystem, path: &Path) -> Result<()> {
    let mut f = crate::error::create_file(path)?;
    writeln!(f, "{}", sys.name())?;
    sys.write_csv(&mut f)?;
    Ok(())
}

pub(crate) fn read_system_file(path: &Path) -> Result<FeatureSystem> {
    let text = crate::error::read_text(path)?;
    let (name, table) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let name = name.trim();
    if let Ok(builtin) = name.parse::<SystemName>() {
        return Ok(load_system(builtin));
    }
    FeatureSystem::read_csv(name, table.as_bytes())
}

/// File name for the network of feature `k`. The index prefix keeps names
/// distinct on case-insensitive filesystems (GP has both `A` and `a`).
pub fn feature_file_stem(k: usize, feature: &str) -> String {
    format!("{k:02}_{feature}")
}

impl AnalyzerBank {
    pub fn new(system: FeatureSystem, nets: Vec<Network>) -> Result<Self> {
        if nets.len() != system.width() {
            return Err(Error::Dimension {
                expected: system.width(),
                got: nets.len(),
            });
        }
        for n in &nets {
            if n.input_size() != ANALYZER_INPUT || n.output_size() != 2 {
                return Err(Error::contract(format!(
                    "analyzer nets must map {ANALYZER_INPUT} inputs to 2 outputs, got {:?}",
                    n.sizes()
                )));
            }
        }
        Ok(AnalyzerBank { system, nets })
    }

    pub fn system(&self) -> &FeatureSystem {
        &self.system
    }

    pub fn nets(&self) -> &[Network] {
        &self.nets
    }

    /// Posteriors for every frame of `w`: z[n][k] = P(feature k active).
    pub fn analyze(&self, w: &Waveform) -> PosteriorMatrix {
        let inputs = analyzer_inputs(w);
        let n = inputs.len();
        let mut frames = vec![vec![0.0; self.nets.len()]; n];
        if n > 0 {
            let x = Array2::from_shape_vec((n, ANALYZER_INPUT), inputs.concat()).expect("rows");
            for (k, net) in self.nets.iter().enumerate() {
                let y = net.forward_batch(x.view()).expect("checked input width");
                for (t, row) in y.rows().into_iter().enumerate() {
                    frames[t][k] = row[1];
                }
            }
        }
        PosteriorMatrix::new(frames, self.system.name(), FRAME_SHIFT_SECONDS)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_system_file(&self.system, &dir.join("system.txt"))?;
        for (k, (net, feat)) in self.nets.iter().zip(self.system.features()).enumerate() {
            net.save(&dir.join(format!("{}.net", feature_file_stem(k, feat))))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let system = read_system_file(&dir.join("system.txt"))?;
        let paths: Vec<_> = system
            .features()
            .iter()
            .enumerate()
            .map(|(k, f)| dir.join(format!("{}.net", feature_file_stem(k, f))))
            .collect();
        let missing: Vec<_> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingFiles(missing));
        }
        let nets = paths.iter().map(|p| Network::load(p)).collect::<Result<Vec<_>>>()?;
        AnalyzerBank::new(system, nets)
    }
}

/// Hard decisions: 1 iff the posterior is at least `threshold`.
pub fn binarize(z: &PosteriorMatrix, threshold: f64) -> Result<PosteriorMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!("threshold {threshold} outside (0, 1)")));
    }
    let frames = z
        .frames
        .iter()
        .map(|r| r.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect())
        .collect();
    Ok(PosteriorMatrix::new(frames, z.system.clone(), z.frame_shift))
}
