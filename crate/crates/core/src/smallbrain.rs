//! The one-hidden-layer dense regressor ("small brain"): initialization,
//! forward pass, minibatch MSE training, evaluation, checkpoints and the
//! inference throughput benchmark.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoders::EncodedSet;
use crate::error::{Error, Result};
use crate::metrics;
use crate::optics::IMAGE_N;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Sigmoid,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Activation::Linear),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Sigmoid => 1,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Sigmoid),
            _ => Err(Error::Format(format!("unknown activation code {c}"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// `out = act_out(w2ᵀ · act_hidden(w1ᵀ · y + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    /// input_dim × hidden
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// hidden × output_dim
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub act_hidden: Activation,
    pub act_out: Activation,
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit))
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases, deterministic per seed.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        acts: (Activation, Activation),
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::Config("network dimensions must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = xavier(&mut rng, input_dim, hidden_dim);
        let w2 = xavier(&mut rng, hidden_dim, output_dim);
        Ok(Self {
            w1,
            b1: Array1::zeros(hidden_dim),
            w2,
            b2: Array1::zeros(output_dim),
            act_hidden: acts.0,
            act_out: acts.1,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = self.w1.dim();
        let (h2, o) = self.w2.dim();
        if h2 != h || self.b1.len() != h || self.b2.len() != o || i == 0 || o == 0 {
            return Err(Error::Format(format!(
                "inconsistent network shapes: w1 {i}x{h}, b1 {}, w2 {h2}x{o}, b2 {}",
                self.b1.len(),
                self.b2.len()
            )));
        }
        let finite = |a: &[f64]| a.iter().all(|v| v.is_finite());
        let parts = [self.w1.as_slice(), self.b1.as_slice(), self.w2.as_slice(), self.b2.as_slice()];
        if parts.iter().any(|p| p.map(|p| !finite(p)).unwrap_or(true)) {
            return Err(Error::Numeric("network holds non-finite or non-contiguous weights".into()));
        }
        Ok(())
    }

    /// Reconstruction of a single input vector.
    pub fn forward(&self, y: &[f64]) -> Result<Array1<f64>> {
        if y.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: y.len() });
        }
        let mut out = vec![0.0; self.output_dim()];
        self.infer_into(y, 1, &mut out)?;
        Ok(Array1::from_vec(out))
    }

    /// Batched inference over row-major `inputs` (rows × input_dim) into
    /// `out` (rows × output_dim). Each row's result is bit-identical to
    /// [`DenseNet::forward`] on that row, whatever the batch size.
    pub fn infer_into(&self, inputs: &[f64], rows: usize, out: &mut [f64]) -> Result<()> {
        let (i, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        if inputs.len() != rows * i {
            return Err(Error::Dimension { expected: rows * i, got: inputs.len() });
        }
        if out.len() != rows * o {
            return Err(Error::Dimension { expected: rows * o, got: out.len() });
        }
        let (w1, b1, w2, b2) = (
            self.w1.as_slice().ok_or_else(non_contiguous)?,
            self.b1.as_slice().ok_or_else(non_contiguous)?,
            self.w2.as_slice().ok_or_else(non_contiguous)?,
            self.b2.as_slice().ok_or_else(non_contiguous)?,
        );
        let mut hidden = vec![0.0; SAMPLE_BLOCK.min(rows) * h];
        for s0 in (0..rows).step_by(SAMPLE_BLOCK) {
            let sb = SAMPLE_BLOCK.min(rows - s0);
            let hid = &mut hidden[..sb * h];
            affine_act(&inputs[s0 * i..(s0 + sb) * i], sb, i, w1, b1, self.act_hidden, hid);
            affine_act(hid, sb, h, w2, b2, self.act_out, &mut out[s0 * o..(s0 + sb) * o]);
        }
        Ok(())
    }

    /// Batched inference on a matrix of inputs (rows × input_dim).
    pub fn infer(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let rows = inputs.nrows();
        let owned;
        let flat = match inputs.as_slice() {
            Some(s) => s,
            None => {
                owned = inputs.as_standard_layout().into_owned();
                owned.as_slice().expect("standard layout")
            }
        };
        let mut out = vec![0.0; rows * self.output_dim()];
        self.infer_into(flat, rows, &mut out)?;
        Ok(Array2::from_shape_vec((rows, self.output_dim()), out).expect("output shape"))
    }

    /// Training-path forward pass with ndarray GEMMs; returns (hidden, output).
    fn forward_train(&self, y: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let mut hid = y.dot(&self.w1) + &self.b1;
        let ah = self.act_hidden;
        hid.mapv_inplace(|z| ah.apply(z));
        let mut out = hid.dot(&self.w2) + &self.b2;
        let ao = self.act_out;
        out.mapv_inplace(|z| ao.apply(z));
        (hid, out)
    }

    /// MSE (mean over samples and outputs) and its exact gradients.
    pub fn loss_gradients(&self, y: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Result<(f64, Gradients)> {
        if y.ncols() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: y.ncols() });
        }
        if x.ncols() != self.output_dim() || x.nrows() != y.nrows() {
            return Err(Error::Dimension { expected: self.output_dim(), got: x.ncols() });
        }
        let (hid, out) = self.forward_train(y);
        let n = (x.len()) as f64;
        let diff = &out - &x;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        let ao = self.act_out;
        let mut d_out = diff;
        Zip::from(&mut d_out).and(&out).for_each(|d, &a| *d *= 2.0 / n * ao.slope(a));
        let g_w2 = hid.t().dot(&d_out);
        let g_b2 = d_out.sum_axis(Axis(0));
        let mut d_hid = d_out.dot(&self.w2.t());
        let ah = self.act_hidden;
        Zip::from(&mut d_hid).and(&hid).for_each(|d, &a| *d *= ah.slope(a));
        let g_w1 = y.t().dot(&d_hid);
        let g_b1 = d_hid.sum_axis(Axis(0));
        Ok((loss, Gradients { w1: g_w1, b1: g_b1, w2: g_w2, b2: g_b2 }))
    }

    /// The single affine map equivalent to a linear/linear net: `(W, c)` with
    /// `out = Wᵀ·y + c`.
    pub fn collapse_linear(&self) -> Option<(Array2<f64>, Array1<f64>)> {
        if self.act_hidden != Activation::Linear || self.act_out != Activation::Linear {
            return None;
        }
        Some((self.w1.dot(&self.w2), self.b1.dot(&self.w2) + &self.b2))
    }
}

fn non_contiguous() -> Error {
    Error::Numeric("network weights are not contiguous".into())
}

const SAMPLE_BLOCK: usize = 64;
// Column panel kept hot in L2 while every row of a sample block passes over it.
const PANEL: usize = 64;
// Register tile: MR samples × NR columns of accumulators.
const MR: usize = 4;
const NR: usize = 8;

/// `out[s, :] = act(b + Σ_k input[s, k] · w[k, :])`, summing k in ascending
/// order for every output element regardless of blocking.
fn affine_act(input: &[f64], rows: usize, in_dim: usize, w: &[f64], b: &[f64], act: Activation, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: avx2 was detected at runtime. Plain mul and add are not
        // fused, so results match the baseline build bit for bit.
        return unsafe { affine_act_avx2(input, rows, in_dim, w, b, act, out) };
    }
    affine_act_body(input, rows, in_dim, w, b, act, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn affine_act_avx2(
    input: &[f64],
    rows: usize,
    in_dim: usize,
    w: &[f64],
    b: &[f64],
    act: Activation,
    out: &mut [f64],
) {
    affine_act_body(input, rows, in_dim, w, b, act, out)
}

#[inline(always)]
fn affine_act_body(input: &[f64], rows: usize, in_dim: usize, w: &[f64], b: &[f64], act: Activation, out: &mut [f64]) {
    let out_dim = b.len();
    let full = rows - rows % MR;
    for p0 in (0..out_dim).step_by(PANEL) {
        let p1 = (p0 + PANEL).min(out_dim);
        for s0 in (0..full).step_by(MR) {
            for c0 in (p0..p1).step_by(NR) {
                let ct = NR.min(p1 - c0);
                let mut acc = [[0.0f64; NR]; MR];
                for a in acc.iter_mut() {
                    a[..ct].copy_from_slice(&b[c0..c0 + ct]);
                }
                if ct == NR {
                    let x: [&[f64]; MR] = std::array::from_fn(|s| &input[(s0 + s) * in_dim..(s0 + s + 1) * in_dim]);
                    for k in 0..in_dim {
                        let wr: &[f64; NR] = w[k * out_dim + c0..k * out_dim + c0 + NR].try_into().expect("tile");
                        for s in 0..MR {
                            let v = x[s][k];
                            for j in 0..NR {
                                acc[s][j] += v * wr[j];
                            }
                        }
                    }
                } else {
                    for k in 0..in_dim {
                        let wr = &w[k * out_dim + c0..k * out_dim + c0 + ct];
                        for (s, a) in acc.iter_mut().enumerate() {
                            let v = input[(s0 + s) * in_dim + k];
                            for (aj, wj) in a[..ct].iter_mut().zip(wr) {
                                *aj += v * wj;
                            }
                        }
                    }
                }
                for (s, a) in acc.iter().enumerate() {
                    let dst = &mut out[(s0 + s) * out_dim + c0..(s0 + s) * out_dim + c0 + ct];
                    for (d, &z) in dst.iter_mut().zip(&a[..ct]) {
                        *d = act.apply(z);
                    }
                }
            }
        }
        // leftover rows: one row at a time across the whole panel
        for s in full..rows {
            let mut acc = [0.0f64; PANEL];
            let acc = &mut acc[..p1 - p0];
            acc.copy_from_slice(&b[p0..p1]);
            let x = &input[s * in_dim..(s + 1) * in_dim];
            for (k, &v) in x.iter().enumerate() {
                for (a, wj) in acc.iter_mut().zip(&w[k * out_dim + p0..k * out_dim + p1]) {
                    *a += v * wj;
                }
            }
            for (d, &z) in out[s * out_dim + p0..s * out_dim + p1].iter_mut().zip(acc.iter()) {
                *d = act.apply(z);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Affine rescaling applied to inputs during training only; the learned
/// weights are folded back so the stored net consumes raw inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputScaling {
    None,
    /// Subtract the per-feature mean and divide by the RMS deviation over all features.
    Global,
    /// Subtract the per-feature mean and divide by each feature's standard
    /// deviation, floored at `floor` times the largest one.
    PerFeature {
        floor: f64,
    },
}

impl InputScaling {
    pub fn name(self) -> String {
        match self {
            InputScaling::None => "none".into(),
            InputScaling::Global => "global".into(),
            InputScaling::PerFeature { floor } => format!("feature:{floor}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(InputScaling::None),
            "global" => Some(InputScaling::Global),
            "feature" => Some(InputScaling::PerFeature { floor: 0.0 }),
            _ => s
                .strip_prefix("feature:")
                .and_then(|f| f.parse::<f64>().ok())
                .filter(|f| (0.0..=1.0).contains(f))
                .map(|floor| InputScaling::PerFeature { floor }),
        }
    }

    /// Per-feature (shift, scale) so that the network sees `(y − shift) / scale`.
    fn fit(self, y: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
        let d = y.ncols();
        if self == InputScaling::None {
            return (Array1::zeros(d), Array1::ones(d));
        }
        let mean = y.mean_axis(Axis(0)).expect("non-empty");
        let centered = &y - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        let scale = match self {
            InputScaling::Global => {
                let rms = var.mean().unwrap_or(0.0).sqrt();
                Array1::from_elem(d, if rms > 0.0 { rms } else { 1.0 })
            }
            InputScaling::PerFeature { floor } => {
                let sd = var.mapv(f64::sqrt);
                let top = sd.iter().cloned().fold(0.0, f64::max);
                let lo = (floor * top).max(top * 1e-12);
                sd.mapv(|v| if top > 0.0 { v.max(lo) } else { 1.0 })
            }
            InputScaling::None => unreachable!(),
        };
        (mean, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub scaling: InputScaling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch: 64, lr: 1e-3, seed: 0, optimizer: Optimizer::adam(), scaling: InputScaling::Global }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.lr)));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return Err(Error::Config("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Inputs and targets as dense row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub y: Array2<f64>,
    pub x: Array2<f64>,
}

impl TrainingData {
    pub fn new(y: Array2<f64>, x: Array2<f64>) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::Dimension { expected: y.nrows(), got: x.nrows() });
        }
        if y.nrows() == 0 {
            return Err(Error::Format("no training samples".into()));
        }
        Ok(Self { y, x })
    }

    pub fn from_set(set: &EncodedSet) -> Result<Self> {
        let n = set.len();
        let mut y = Array2::zeros((n, set.input_dim()));
        let mut x = Array2::zeros((n, IMAGE_N * IMAGE_N));
        for (i, s) in set.samples.iter().enumerate() {
            y.row_mut(i).assign(&ArrayView1::from(&s.y[..]));
            x.row_mut(i).assign(&ArrayView1::from(s.x_truth.as_slice().expect("contiguous truth")));
        }
        Self::new(y, x)
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_mse,test_mse")?;
        for r in &self.epochs {
            let test = r.test_mse.map(|v| format!("{v:.8}")).unwrap_or_default();
            writeln!(w, "{},{:.8},{test}", r.epoch, r.train_mse)?;
        }
        Ok(())
    }

    pub fn test_curve(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|r| r.test_mse).collect()
    }
}

/// Raw-coordinate MSE of `net` on `data` (training path, unclamped outputs).
fn dataset_mse(net: &DenseNet, data: &TrainingData) -> f64 {
    let mut total = 0.0;
    for start in (0..data.len()).step_by(512) {
        let end = (start + 512).min(data.len());
        let (_, out) = net.forward_train(data.y.slice(s![start..end, ..]));
        total += (&out - &data.x.slice(s![start..end, ..])).mapv(|d| d * d).sum();
    }
    total / data.x.len() as f64
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

fn zeros_like(net: &DenseNet) -> Gradients {
    Gradients {
        w1: Array2::zeros(net.w1.raw_dim()),
        b1: Array1::zeros(net.b1.raw_dim()),
        w2: Array2::zeros(net.w2.raw_dim()),
        b2: Array1::zeros(net.b2.raw_dim()),
    }
}

fn step<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    opt: Optimizer,
    lr: f64,
    t: i32,
) {
    match opt {
        Optimizer::Sgd => Zip::from(p).and(g).for_each(|p, &g| *p -= lr * g),
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Minibatch training on the MSE loss with a fixed per-epoch shuffle order.
///
/// Inputs are rescaled by `cfg.scaling` while training. The net is trained in
/// those coordinates starting from the given weights, and only the learned
/// changes are mapped back, so a zero learning rate leaves the net exactly
/// unchanged. The epoch-end training MSE (and test MSE when `test` is given)
/// is recorded after each epoch.
pub fn train(
    net: &DenseNet,
    data: &TrainingData,
    test: Option<&TrainingData>,
    cfg: &TrainConfig,
) -> Result<(DenseNet, History)> {
    cfg.validate()?;
    net.validate()?;
    if data.y.ncols() != net.input_dim() || data.x.ncols() != net.output_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: data.y.ncols() });
    }
    let (shift, scale) = cfg.scaling.fit(data.y.view());
    let z = (&data.y - &shift) / &scale;

    // Working net in scaled coordinates: w1' = diag(scale)·w1, b1' = b1 + shiftᵀ·w1.
    let mut work = net.clone();
    work.w1 = &net.w1 * &scale.view().insert_axis(Axis(1));
    work.b1 = &net.b1 + &shift.dot(&net.w1);
    let start = work.clone();

    let mut adam = AdamState { m: zeros_like(net), v: zeros_like(net), t: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    let mut result = net.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let yb = z.select(Axis(0), chunk);
            let xb = data.x.select(Axis(0), chunk);
            let (loss, g) = work.loss_gradients(yb.view(), xb.view())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            adam.t += 1;
            let t = adam.t;
            step(&mut work.w1, &g.w1, &mut adam.m.w1, &mut adam.v.w1, cfg.optimizer, cfg.lr, t);
            step(&mut work.b1, &g.b1, &mut adam.m.b1, &mut adam.v.b1, cfg.optimizer, cfg.lr, t);
            step(&mut work.w2, &g.w2, &mut adam.m.w2, &mut adam.v.w2, cfg.optimizer, cfg.lr, t);
            step(&mut work.b2, &g.b2, &mut adam.m.b2, &mut adam.v.b2, cfg.optimizer, cfg.lr, t);
        }
        result = fold_back(net, &work, &start, &shift, &scale);
        let train_mse = dataset_mse(&result, data);
        if !train_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: order.len().div_ceil(cfg.batch) });
        }
        let test_mse = test.map(|t| dataset_mse(&result, t));
        history.epochs.push(EpochRecord { epoch, train_mse, test_mse });
    }
    Ok((result, history))
}

fn fold_back(orig: &DenseNet, work: &DenseNet, start: &DenseNet, shift: &Array1<f64>, scale: &Array1<f64>) -> DenseNet {
    let dw1 = (&work.w1 - &start.w1) / scale.view().insert_axis(Axis(1));
    let db1 = &work.b1 - &start.b1 - shift.dot(&dw1);
    DenseNet {
        w1: &orig.w1 + &dw1,
        b1: &orig.b1 + &db1,
        w2: work.w2.clone(),
        b2: work.b2.clone(),
        act_hidden: orig.act_hidden,
        act_out: orig.act_out,
    }
}

/// Per-sample reconstruction quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub mse: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_mse: f64,
    pub mean_ssim: f64,
    pub per_sample: Vec<SampleScore>,
    /// Reconstructions clamped to [0, 1], one 28×28 image per sample.
    pub reconstructions: Vec<Array2<f64>>,
}

/// Reconstructs every sample and scores it against the truth. Outputs are
/// clamped to the unit intensity range before scoring.
pub fn evaluate(net: &DenseNet, data: &TrainingData) -> Result<Evaluation> {
    if data.y.ncols() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: data.y.ncols() });
    }
    if net.output_dim() != IMAGE_N * IMAGE_N {
        return Err(Error::Dimension { expected: IMAGE_N * IMAGE_N, got: net.output_dim() });
    }
    let out = net.infer(data.y.view())?;
    let mut per_sample = Vec::with_capacity(data.len());
    let mut reconstructions = Vec::with_capacity(data.len());
    for (row, truth) in out.outer_iter().zip(data.x.outer_iter()) {
        let rec = row.mapv(|v| v.clamp(0.0, 1.0)).into_shape_with_order((IMAGE_N, IMAGE_N)).expect("784 outputs");
        let truth = truth.into_shape_with_order((IMAGE_N, IMAGE_N)).expect("784 targets");
        let mse = metrics::mse(rec.view(), truth)?;
        let ssim = metrics::ssim(rec.view(), truth)?;
        per_sample.push(SampleScore { mse, ssim });
        reconstructions.push(rec);
    }
    let n = per_sample.len() as f64;
    Ok(Evaluation {
        mean_mse: per_sample.iter().map(|s| s.mse).sum::<f64>() / n,
        mean_ssim: per_sample.iter().map(|s| s.ssim).sum::<f64>() / n,
        per_sample,
        reconstructions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames: usize,
    pub seconds: f64,
    pub fps: f64,
    pub batch: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

/// Sustained batched inference rate over at least `duration` of wall-clock
/// time, cycling through `inputs` (rows × input_dim) in batches of `batch`.
pub fn throughput_bench(
    net: &DenseNet,
    inputs: ArrayView2<'_, f64>,
    batch: usize,
    duration: Duration,
) -> Result<BenchReport> {
    if inputs.nrows() == 0 || batch == 0 {
        return Err(Error::Config("benchmark needs inputs and a batch size >= 1".into()));
    }
    if inputs.ncols() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: inputs.ncols() });
    }
    // Pre-tile the inputs so every batch is one contiguous slice.
    let rows = inputs.nrows().max(batch);
    let d = net.input_dim();
    let mut flat = Vec::with_capacity(rows * d);
    for r in 0..rows {
        flat.extend(inputs.row(r % inputs.nrows()).iter());
    }
    let mut out = vec![0.0; batch * net.output_dim()];
    let mut frames = 0usize;
    let mut cursor = 0usize;
    let t0 = Instant::now();
    loop {
        if cursor + batch > rows {
            cursor = 0;
        }
        net.infer_into(&flat[cursor * d..(cursor + batch) * d], batch, &mut out)?;
        std::hint::black_box(&out);
        cursor += batch;
        frames += batch;
        if t0.elapsed() >= duration {
            break;
        }
    }
    let seconds = t0.elapsed().as_secs_f64();
    Ok(BenchReport {
        frames,
        seconds,
        fps: frames as f64 / seconds,
        batch,
        input_dim: net.input_dim(),
        hidden_dim: net.hidden_dim(),
        output_dim: net.output_dim(),
    })
}

pub const VNET_MAGIC: [u8; 4] = *b"VNET";
pub const VNET_VERSION: u32 = 1;

impl DenseNet {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        w.write_all(&VNET_MAGIC)?;
        let header = [
            VNET_VERSION,
            self.input_dim() as u32,
            self.hidden_dim() as u32,
            self.output_dim() as u32,
            self.act_hidden.code(),
            self.act_out.code(),
        ];
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.w1.len() * 4);
        let parts: [&[f64]; 4] = [
            self.w1.as_slice().ok_or_else(non_contiguous)?,
            self.b1.as_slice().ok_or_else(non_contiguous)?,
            self.w2.as_slice().ok_or_else(non_contiguous)?,
            self.b2.as_slice().ok_or_else(non_contiguous)?,
        ];
        for part in parts {
            buf.clear();
            for &v in part {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        const HEADER: usize = 28;
        if bytes.len() < HEADER {
            return Err(Error::Truncated { needed: HEADER, found: bytes.len() });
        }
        if bytes[..4] != VNET_MAGIC {
            return Err(Error::BadMagic {
                expected: u32::from_le_bytes(VNET_MAGIC),
                found: u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")),
            });
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes"));
        if word(1) != VNET_VERSION {
            return Err(Error::Version(word(1)));
        }
        let (i, h, o) = (word(2) as usize, word(3) as usize, word(4) as usize);
        let (ah, ao) = (Activation::from_code(word(5))?, Activation::from_code(word(6))?);
        let count = i * h + h + h * o + o;
        let needed = HEADER + count * 4;
        if bytes.len() != needed {
            return Err(if bytes.len() < needed {
                Error::Truncated { needed, found: bytes.len() }
            } else {
                Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - needed))
            });
        }
        let mut vals =
            bytes[HEADER..].chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))));
        let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
        let net = DenseNet {
            w1: Array2::from_shape_vec((i, h), take(i * h)).map_err(|e| Error::Format(e.to_string()))?,
            b1: Array1::from_vec(take(h)),
            w2: Array2::from_shape_vec((h, o), take(h * o)).map_err(|e| Error::Format(e.to_string()))?,
            b2: Array1::from_vec(take(o)),
            act_hidden: ah,
            act_out: ao,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w).map_err(|e| match e {
            Error::Io(io) => Error::file(path, io),
            other => other,
        })?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(BufReader::new(f))
    }

    /// Rounds every parameter to f32, as a checkpoint round trip would.
    pub fn to_f32_precision(&self) -> Self {
        let r = |v: f64| f64::from(v as f32);
        DenseNet { w1: self.w1.mapv(r), b1: self.b1.mapv(r), w2: self.w2.mapv(r), b2: self.b2.mapv(r), ..self.clone() }
    }
}
