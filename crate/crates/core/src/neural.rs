//! Fully connected feedforward networks trained with mini-batch SGD.
//!
//! Hidden layers are logistic; the output head is either a softmax
//! (cross-entropy) or linear (squared error). Weights are stored `out × in`.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const FILE_MAGIC: &str = "PHONOLAB-NET";
const FILE_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Softmax,
    Linear,
}

impl Head {
    pub fn as_str(self) -> &'static str {
        match self {
            Head::Softmax => "softmax",
            Head::Linear => "linear",
        }
    }

    /// The loss each head is trained with.
    pub fn natural_loss(self) -> Loss {
        match self {
            Head::Softmax => Loss::CrossEntropy,
            Head::Linear => Loss::Mse,
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "softmax" => Ok(Head::Softmax),
            "linear" => Ok(Head::Linear),
            other => Err(Error::contract(format!("unknown output head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over samples of −Σ t·log p.
    CrossEntropy,
    /// Mean over samples of ½‖y − t‖².
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    head: Head,
    seed: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_network(sizes: &[usize], head: Head, seed: u64) -> Result<Network> {
    if sizes.len() < 2 {
        return Err(Error::contract(format!(
            "a network needs at least 2 layers, got {}",
            sizes.len()
        )));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::contract(format!("layer {i} has size 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.random_range(-limit..=limit)
                }),
                biases: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Network {
        sizes: sizes.to_vec(),
        layers,
        head,
        seed,
    })
}

impl Network {
    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("a network needs at least one weight layer"));
        }
        let mut sizes = vec![layers[0].weights.ncols()];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.ncols() != *sizes.last().unwrap() || l.biases.len() != l.weights.nrows() {
                return Err(Error::contract(format!("layer {i} shapes are inconsistent")));
            }
            sizes.push(l.weights.nrows());
        }
        Ok(Network {
            sizes,
            layers,
            head,
            seed: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension {
                expected: self.input_size(),
                got: input.len(),
            });
        }
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    /// Row-per-sample forward pass.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_size() {
            return Err(Error::Dimension {
                expected: self.input_size(),
                got: x.ncols(),
            });
        }
        Ok(self.activations(x).pop().unwrap())
    }

    /// Output of every layer, input excluded.
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = if i == 0 { x } else { acts[i - 1].view() };
            let mut z = prev.dot(&layer.weights.t());
            z += &layer.biases;
            if i < last {
                z.mapv_inplace(sigmoid);
            } else if self.head == Head::Softmax {
                softmax_rows(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Mean loss over the rows of `x`.
    pub fn loss(&self, x: ArrayView2<f64>, t: ArrayView2<f64>, loss: Loss) -> Result<f64> {
        let y = self.forward_batch(x)?;
        check_targets(&y, t)?;
        Ok(batch_loss(&y, t, loss))
    }

    /// Analytic gradients (weights, biases per layer) of the mean loss.
    fn gradients(
        &self,
        x: ArrayView2<f64>,
        t: ArrayView2<f64>,
        loss: Loss,
    ) -> (Vec<(Array2<f64>, Array1<f64>)>, f64) {
        let acts = self.activations(x);
        let y = acts.last().unwrap();
        let value = batch_loss(y, t, loss);
        let b = x.nrows() as f64;
        let mut delta = output_delta(y, t, self.head, loss) / b;
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let gw = delta.t().dot(&input);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                back.zip_mut_with(&acts[i - 1], |d, &a| *d *= a * (1.0 - a));
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (grads, value)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(crate::error::create_file(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{FILE_MAGIC} {FILE_VERSION}")?;
        writeln!(w, "{}", self.head)?;
        writeln!(w, "{}", join(self.sizes.iter().map(|s| s.to_string())))?;
        writeln!(w, "seed {}", self.seed)?;
        for layer in &self.layers {
            writeln!(w, "{}", join(layer.biases.iter().map(|v| format!("{v:.16e}"))))?;
            for row in layer.weights.rows() {
                writeln!(w, "{}", join(row.iter().map(|v| format!("{v:.16e}"))))?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = crate::error::open_file(path)?;
        Network::read_from(BufReader::new(f), &path.display().to_string())
    }

    /// Parses the text network format; `name` labels parse errors.
    pub fn read_from<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::parse(name, i + 1, e.to_string())),
                None => Err(Error::parse(name, 0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let (ln, magic) = next("header")?;
        let mut parts = magic.split_whitespace();
        if parts.next() != Some(FILE_MAGIC) {
            return Err(Error::parse(name, ln, "not a network file"));
        }
        match parts.next() {
            Some(FILE_VERSION) => {}
            Some(v) => return Err(Error::UnsupportedVersion(v.to_string())),
            None => return Err(Error::parse(name, ln, "missing version")),
        }
        let (ln, head) = next("head")?;
        let head = head.parse::<Head>().map_err(|e| Error::parse(name, ln, e.to_string()))?;
        let (ln, sizes) = next("layer sizes")?;
        let sizes: Vec<usize> = sizes
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::parse(name, ln, format!("bad layer size `{s}`"))))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::parse(name, ln, "need at least two positive layer sizes"));
        }
        let (ln, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|v| v.trim().parse::<u64>().ok())
            .ok_or_else(|| Error::parse(name, ln, "expected `seed <integer>`"))?;
        let parse_row = |ln: usize, line: &str, want: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::parse(name, ln, format!("bad number `{s}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != want {
                return Err(Error::parse(
                    name,
                    ln,
                    format!("expected {want} values, found {}", vals.len()),
                ));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(name, ln, "non-finite parameter"));
            }
            Ok(vals)
        };
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (ln, line) = next("biases")?;
            let biases = Array1::from(parse_row(ln, &line, fan_out)?);
            let mut flat = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                let (ln, line) = next("weight row")?;
                flat.extend(parse_row(ln, &line, fan_in)?);
            }
            let weights = Array2::from_shape_vec((fan_out, fan_in), flat).expect("shape checked");
            layers.push(Layer { weights, biases });
        }
        Ok(Network {
            sizes,
            layers,
            head,
            seed,
        })
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

fn check_targets(y: &Array2<f64>, t: ArrayView2<f64>) -> Result<()> {
    if y.dim() != t.dim() {
        return Err(Error::Dimension {
            expected: y.ncols(),
            got: t.ncols(),
        });
    }
    Ok(())
}

fn batch_loss(y: &Array2<f64>, t: ArrayView2<f64>, loss: Loss) -> f64 {
    let b = y.nrows().max(1) as f64;
    let total: f64 = match loss {
        Loss::CrossEntropy => y
            .iter()
            .zip(t.iter())
            .map(|(&p, &q)| if q != 0.0 { -q * p.max(1e-300).ln() } else { 0.0 })
            .sum(),
        Loss::Mse => y.iter().zip(t.iter()).map(|(p, q)| 0.5 * (p - q) * (p - q)).sum(),
    };
    total / b
}

/// Per-sample derivative of the loss with respect to the output pre-activations.
fn output_delta(y: &Array2<f64>, t: ArrayView2<f64>, head: Head, loss: Loss) -> Array2<f64> {
    match (head, loss) {
        (Head::Softmax, Loss::CrossEntropy) | (Head::Linear, Loss::Mse) => y - &t,
        (Head::Linear, Loss::CrossEntropy) => {
            let mut d = Array2::zeros(y.dim());
            ndarray::Zip::from(&mut d)
                .and(y)
                .and(t)
                .for_each(|d, &p, &q| *d = if q != 0.0 { -q / p } else { 0.0 });
            d
        }
        (Head::Softmax, Loss::Mse) => {
            // J^T (y − t) for the softmax Jacobian diag(y) − y yᵀ.
            let g = y - &t;
            let mut d = Array2::zeros(y.dim());
            for ((mut drow, yrow), grow) in d.rows_mut().into_iter().zip(y.rows()).zip(g.rows()) {
                let dot = yrow.dot(&grow);
                for j in 0..drow.len() {
                    drow[j] = yrow[j] * (grow[j] - dot);
                }
            }
            d
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without held-out improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub loss: Loss,
    /// Classical momentum coefficient; 0 gives plain SGD.
    pub momentum: f64,
}

impl TrainConfig {
    pub fn classifier() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            early_stop_patience: 10,
            loss: Loss::CrossEntropy,
            momentum: 0.0,
        }
    }

    pub fn regressor() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            loss: Loss::Mse,
            ..TrainConfig::classifier()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::contract("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::contract("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned (0 = initial network).
    pub best_epoch: usize,
}

/// Mini-batch SGD with a best-epoch snapshot.
///
/// The returned network is the one with the lowest held-out loss (or training
/// loss without a held-out set) seen at the end of any epoch.
pub fn train(
    net: &Network,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    cfg: &TrainConfig,
    heldout: Option<(ArrayView2<f64>, ArrayView2<f64>)>,
) -> Result<(Network, History)> {
    cfg.validate()?;
    if inputs.nrows() != targets.nrows() {
        return Err(Error::contract(format!(
            "{} input rows but {} target rows",
            inputs.nrows(),
            targets.nrows()
        )));
    }
    if inputs.ncols() != net.input_size() {
        return Err(Error::Dimension {
            expected: net.input_size(),
            got: inputs.ncols(),
        });
    }
    if targets.ncols() != net.output_size() {
        return Err(Error::Dimension {
            expected: net.output_size(),
            got: targets.ncols(),
        });
    }
    if let Some((hx, ht)) = heldout {
        if hx.ncols() != net.input_size() || ht.ncols() != net.output_size() || hx.nrows() != ht.nrows()
        {
            return Err(Error::contract("held-out set shape does not match the network"));
        }
    }
    let mut history = History::default();
    if cfg.epochs == 0 || inputs.nrows() == 0 {
        return Ok((net.clone(), history));
    }
    let score = |n: &Network| -> Result<Option<f64>> {
        match heldout {
            Some((hx, ht)) if hx.nrows() > 0 => Ok(Some(n.loss(hx, ht, cfg.loss)?)),
            _ => Ok(None),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.nrows()).collect();
    let mut current = net.clone();
    let mut velocity: Vec<(Array2<f64>, Array1<f64>)> = current
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.biases.len())))
        .collect();
    let initial = match score(&current)? {
        Some(h) => h,
        None => current.loss(inputs, targets, cfg.loss)?,
    };
    let mut best = (initial, current.clone(), 0usize);
    let mut stale = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = inputs.select(Axis(0), chunk);
            let bt = targets.select(Axis(0), chunk);
            let (grads, value) = current.gradients(bx.view(), bt.view(), cfg.loss);
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            total += value * chunk.len() as f64;
            for ((layer, (gw, gb)), (vw, vb)) in
                current.layers.iter_mut().zip(&grads).zip(velocity.iter_mut())
            {
                vw.zip_mut_with(gw, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                vb.zip_mut_with(gb, |v, &g| *v = cfg.momentum * *v - cfg.learning_rate * g);
                layer.weights += &*vw;
                layer.biases += &*vb;
            }
        }
        let train_loss = total / inputs.nrows() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let heldout_loss = score(&current)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            heldout_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} held-out {heldout_loss:?}");
        let criterion = heldout_loss.unwrap_or(train_loss);
        if criterion < best.0 {
            best = (criterion, current.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    history.best_epoch = best.2;
    let mut out = best.1;
    out.seed = net.seed;
    Ok((out, history))
}

/// Largest relative discrepancy between backprop and central differences
/// (ε = 1e-5) over every parameter: |a − n| / max(|a| + |n|, 1e-4).
pub fn gradient_check(net: &Network, input: &[f64], target: &[f64], loss: Loss) -> Result<f64> {
    if input.len() != net.input_size() {
        return Err(Error::Dimension {
            expected: net.input_size(),
            got: input.len(),
        });
    }
    if target.len() != net.output_size() {
        return Err(Error::Dimension {
            expected: net.output_size(),
            got: target.len(),
        });
    }
    const EPS: f64 = 1e-5;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    let t = ArrayView2::from_shape((1, target.len()), target).expect("row view");
    let (grads, _) = net.gradients(x, t, loss);
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-4);
    for (li, (gw, gb)) in grads.iter().enumerate() {
        for idx in ndarray::indices(gw.dim()) {
            let orig = probe.layers[li].weights[idx];
            probe.layers[li].weights[idx] = orig + EPS;
            let up = probe.loss(x, t, loss)?;
            probe.layers[li].weights[idx] = orig - EPS;
            let down = probe.loss(x, t, loss)?;
            probe.layers[li].weights[idx] = orig;
            worst = worst.max(rel(gw[idx], (up - down) / (2.0 * EPS)));
        }
        for j in 0..gb.len() {
            let orig = probe.layers[li].biases[j];
            probe.layers[li].biases[j] = orig + EPS;
            let up = probe.loss(x, t, loss)?;
            probe.layers[li].biases[j] = orig - EPS;
            let down = probe.loss(x, t, loss)?;
            probe.layers[li].biases[j] = orig;
            worst = worst.max(rel(gb[j], (up - down) / (2.0 * EPS)));
        }
    }
    Ok(worst)
}

/// Converts row vectors into a dense matrix; all rows must share one length.
pub fn to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::contract("ragged rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("shape checked"))
}
