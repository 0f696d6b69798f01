//! Spatial encoders: per-lenslet focal-plane frames, sensor readout,
//! crop/downsample to network inputs, and the encoded-dataset file format.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optics::{vortex_lens_mask, ComplexField, ForwardModel, Grid, OpticalConfig, VortexCharge, IMAGE_N};
use crate::sensor::{self, CameraModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    PlainFourier,
    Vortex,
    Random,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::PlainFourier => "plain",
            EncoderKind::Vortex => "vortex",
            EncoderKind::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" | "none" => Some(EncoderKind::PlainFourier),
            "vortex" => Some(EncoderKind::Vortex),
            "random" => Some(EncoderKind::Random),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Vortex charges, one frame each; ignored for the other kinds.
    pub charges: Vec<VortexCharge>,
    pub random_seed: u64,
    /// Fraction of the focal-plane grid side kept around the center.
    pub crop_frac: f64,
    pub out_n: usize,
}

impl EncoderSpec {
    pub fn plain() -> Self {
        Self { kind: EncoderKind::PlainFourier, charges: Vec::new(), random_seed: 0, crop_frac: 0.5, out_n: IMAGE_N }
    }

    pub fn vortex(charges: &[f64]) -> Self {
        Self { kind: EncoderKind::Vortex, charges: charges.iter().map(|&m| VortexCharge(m)).collect(), ..Self::plain() }
    }

    pub fn random(seed: u64) -> Self {
        Self { kind: EncoderKind::Random, random_seed: seed, ..Self::plain() }
    }

    /// Charges actually used, one per frame. Plain Fourier is the single charge 0.
    pub fn frame_charges(&self) -> Vec<VortexCharge> {
        match self.kind {
            EncoderKind::PlainFourier => vec![VortexCharge(0.0)],
            EncoderKind::Vortex => self.charges.clone(),
            EncoderKind::Random => Vec::new(),
        }
    }

    pub fn frames(&self) -> usize {
        match self.kind {
            EncoderKind::Random => 1,
            _ => self.frame_charges().len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.frames() * self.out_n * self.out_n
    }

    /// Short label such as `vortex[1,3]`.
    pub fn label(&self) -> String {
        match self.kind {
            EncoderKind::Vortex => {
                let ms: Vec<String> = self.charges.iter().map(|m| format!("{}", m.0)).collect();
                format!("vortex[{}]", ms.join(","))
            }
            EncoderKind::Random => format!("random[{}]", self.random_seed),
            EncoderKind::PlainFourier => "plain".into(),
        }
    }

    pub fn crop_side(&self, grid_n: usize) -> usize {
        (grid_n as f64 * self.crop_frac).round() as usize
    }

    pub fn validate(&self, cfg: &OpticalConfig) -> Result<()> {
        cfg.validate()?;
        if self.kind == EncoderKind::Vortex && self.charges.is_empty() {
            return Err(Error::Encoder("vortex encoder needs at least one charge".into()));
        }
        if let Some(m) = self.charges.iter().find(|m| !m.0.is_finite()) {
            return Err(Error::Encoder(format!("charge {} is not finite", m.0)));
        }
        if !(self.crop_frac > 0.0 && self.crop_frac <= 1.0) {
            return Err(Error::Encoder(format!("crop_frac {} outside (0, 1]", self.crop_frac)));
        }
        if self.out_n < 8 {
            return Err(Error::Encoder(format!("out_n {} is below 8", self.out_n)));
        }
        let side = self.crop_side(cfg.grid_n);
        if side < self.out_n {
            return Err(Error::Geometry(format!(
                "crop of {side} samples is smaller than the {0}x{0} output",
                self.out_n
            )));
        }
        Ok(())
    }
}

/// Network input `y` (frames catenated in charge order) and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub y: Vec<f64>,
    pub frames: usize,
    pub out_n: usize,
    pub x_truth: Array2<f64>,
}

impl EncodedSample {
    pub fn frame(&self, k: usize) -> ArrayView2<'_, f64> {
        let len = self.out_n * self.out_n;
        ArrayView2::from_shape((self.out_n, self.out_n), &self.y[k * len..(k + 1) * len]).expect("frame slice")
    }
}

/// Phase-only diffuser: i.i.d. uniform phases inside the aperture plus the
/// lenslet's quadratic lens term, zero outside. Phases come from a ChaCha
/// stream keyed by `seed`, one stream per pixel.
pub fn random_phase_mask(seed: u64, cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.grid_n;
    ComplexField::from_fn(n, cfg.extent, |(row, col)| {
        let (x, y) = cfg.coords(row, col);
        let r = x.hypot(y);
        if r < cfg.aperture_a {
            let mut rng = base.clone();
            rng.set_stream((row * n + col) as u64);
            let theta = rng.random::<f64>() * TAU;
            Complex64::from_polar(1.0, cfg.lens_phase(r) + theta)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Fractional-overlap weights mapping `k` source samples onto `out` bins.
fn area_weights(k: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = k as f64 / out as f64;
    (0..out)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let lo = a.floor() as usize;
            let hi = (b.ceil() as usize).min(k);
            (lo..hi)
                .filter_map(|j| {
                    let w = (b.min((j + 1) as f64) - a.max(j as f64)) / scale;
                    (w > 1e-12).then_some((j, w))
                })
                .collect()
        })
        .collect()
}

/// Central crop of `round(n·crop_frac)` samples, then area-average pooling to
/// `out_n × out_n` (each output is the mean over its exact source footprint).
pub fn crop_downsample(pattern: ArrayView2<'_, f64>, crop_frac: f64, out_n: usize) -> Result<Grid> {
    let (rows, cols) = pattern.dim();
    if rows != cols {
        return Err(Error::Geometry(format!("pattern must be square, got {rows}x{cols}")));
    }
    if !(crop_frac > 0.0 && crop_frac <= 1.0) {
        return Err(Error::Geometry(format!("crop_frac {crop_frac} outside (0, 1]")));
    }
    let k = (rows as f64 * crop_frac).round() as usize;
    if k < out_n || out_n == 0 {
        return Err(Error::Geometry(format!("crop of {k} samples cannot be pooled to {out_n}x{out_n}")));
    }
    let start = (rows - k) / 2;
    let w = area_weights(k, out_n);
    // rows first, then columns
    let mut tmp = Array2::<f64>::zeros((out_n, k));
    for (o, taps) in w.iter().enumerate() {
        for &(j, wt) in taps {
            let src = pattern.row(start + j);
            for c in 0..k {
                tmp[[o, c]] += wt * src[start + c];
            }
        }
    }
    let mut out = Array2::<f64>::zeros((out_n, out_n));
    for r in 0..out_n {
        for (o, taps) in w.iter().enumerate() {
            out[[r, o]] = taps.iter().map(|&(j, wt)| wt * tmp[[r, j]]).sum();
        }
    }
    Ok(out)
}

/// How each frame is exposed before readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    /// Clean intensity, quantized by the camera.
    Noiseless,
    /// Poisson shot and dark noise at a fixed flux scale.
    Flux(f64),
    /// Per-frame flux solved so each full-resolution frame hits this PSNR.
    TargetPsnr(f64),
}

/// Readout settings shared by all frames of an encoding run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub camera: CameraModel,
    pub exposure: Exposure,
    /// When false the clean intensity is passed through without quantization.
    pub quantize: bool,
}

impl Default for Readout {
    fn default() -> Self {
        Self { camera: CameraModel::default(), exposure: Exposure::Noiseless, quantize: true }
    }
}

/// An encoder with its pupils precomputed for one optical configuration.
#[derive(Debug, Clone)]
pub struct Encoder {
    spec: EncoderSpec,
    model: ForwardModel,
    pupils: Vec<ComplexField>,
}

impl Encoder {
    pub fn new(spec: &EncoderSpec, cfg: &OpticalConfig) -> Result<Self> {
        spec.validate(cfg)?;
        let model = ForwardModel::new(cfg)?;
        let masks = match spec.kind {
            EncoderKind::Random => vec![random_phase_mask(spec.random_seed, cfg)?],
            _ => spec.frame_charges().into_iter().map(|m| vortex_lens_mask(m, cfg)).collect::<Result<Vec<_>>>()?,
        };
        let pupils = masks.iter().map(|m| model.pupil(m)).collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: spec.clone(), model, pupils })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn config(&self) -> &OpticalConfig {
        self.model.config()
    }

    /// Full-resolution noiseless focal-plane intensities, one per frame.
    pub fn patterns(&self, img: ArrayView2<'_, f64>) -> Result<Vec<Grid>> {
        self.pupils.iter().map(|p| self.model.intensity_with_pupil(img, p)).collect()
    }

    /// Camera readout of one full-resolution frame, in units of full scale.
    pub fn read_frame(&self, pattern: &Grid, readout: &Readout, seed: u64) -> Result<Grid> {
        let cam = readout.camera.with_seed(seed);
        let exposed = match readout.exposure {
            Exposure::Noiseless => pattern.clone(),
            Exposure::Flux(f) => sensor::add_noise(pattern.view(), &cam.with_flux(f))?,
            Exposure::TargetPsnr(db) => {
                let f = sensor::flux_for_target_psnr(pattern.view(), db, &cam)?;
                sensor::add_noise(pattern.view(), &cam.with_flux(f))?
            }
        };
        if readout.quantize {
            let q = sensor::quantize(exposed.view(), &cam)?;
            let full = f64::from(cam.full_scale());
            Ok(q.data.mapv(|v| f64::from(v) / full))
        } else {
            Ok(exposed)
        }
    }

    /// Encodes one image. `index` selects the noise streams so that samples of
    /// a batch get independent, reproducible noise.
    pub fn encode(&self, img: ArrayView2<'_, f64>, readout: &Readout, index: u64) -> Result<EncodedSample> {
        let patterns = self.patterns(img)?;
        let out_n = self.spec.out_n;
        let mut y = Vec::with_capacity(self.spec.input_dim());
        for (k, p) in patterns.iter().enumerate() {
            let seed = sensor::derive_seed(readout.camera.rng_seed, &[index, k as u64]);
            let frame = self.read_frame(p, readout, seed)?;
            let small = crop_downsample(frame.view(), self.spec.crop_frac, out_n)?;
            y.extend(small.iter());
        }
        Ok(EncodedSample { y, frames: patterns.len(), out_n, x_truth: img.to_owned() })
    }

    /// Parallel batch encoding; sample `i` uses noise index `i`.
    pub fn encode_batch(&self, images: &[Array2<f64>], readout: &Readout) -> Result<Vec<EncodedSample>> {
        images.par_iter().enumerate().map(|(i, img)| self.encode(img.view(), readout, i as u64)).collect()
    }
}

/// Convenience wrapper: builds an [`Encoder`] and encodes a single image.
pub fn encode(
    img: ArrayView2<'_, f64>,
    spec: &EncoderSpec,
    cfg: &OpticalConfig,
    readout: &Readout,
) -> Result<EncodedSample> {
    Encoder::new(spec, cfg)?.encode(img, readout, 0)
}

pub const VPTY_MAGIC: [u8; 4] = *b"VPTY";
pub const VPTY_VERSION: u32 = 1;

/// A homogeneous collection of encoded samples, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub frames: usize,
    pub out_n: usize,
    pub samples: Vec<EncodedSample>,
}

impl EncodedSet {
    pub fn new(samples: Vec<EncodedSample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Format("encoded set is empty".into()));
        };
        let (frames, out_n) = (first.frames, first.out_n);
        for s in &samples {
            if s.frames != frames || s.out_n != out_n || s.y.len() != frames * out_n * out_n {
                return Err(Error::Dimension { expected: frames * out_n * out_n, got: s.y.len() });
            }
            if s.x_truth.dim() != (IMAGE_N, IMAGE_N) {
                return Err(Error::Dimension { expected: IMAGE_N * IMAGE_N, got: s.x_truth.len() });
            }
        }
        Ok(Self { frames, out_n, samples })
    }

    pub fn input_dim(&self) -> usize {
        self.frames * self.out_n * self.out_n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&VPTY_MAGIC)?;
        for v in [VPTY_VERSION, self.samples.len() as u32, self.frames as u32, self.out_n as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity((self.input_dim() + IMAGE_N * IMAGE_N) * 4);
        for s in &self.samples {
            buf.clear();
            for &v in s.y.iter().chain(s.x_truth.iter()) {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 20;
        if bytes.len() < HEADER {
            return Err(Error::Truncated { needed: HEADER, found: bytes.len() });
        }
        if bytes[..4] != VPTY_MAGIC {
            return Err(Error::BadMagic {
                expected: u32::from_le_bytes(VPTY_MAGIC),
                found: u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")),
            });
        }
        let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes")) as usize;
        let version = word(1) as u32;
        if version != VPTY_VERSION {
            return Err(Error::Version(version));
        }
        let (count, frames, out_n) = (word(2), word(3), word(4));
        let ylen = frames * out_n * out_n;
        let per = (ylen + IMAGE_N * IMAGE_N) * 4;
        let needed = HEADER + count * per;
        if bytes.len() < needed {
            return Err(Error::Truncated { needed, found: bytes.len() });
        }
        let floats = |chunk: &[u8]| -> Vec<f64> {
            chunk.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))).collect()
        };
        let samples = bytes[HEADER..needed]
            .chunks_exact(per.max(1))
            .take(count)
            .map(|rec| {
                let (yb, xb) = rec.split_at(ylen * 4);
                EncodedSample {
                    y: floats(yb),
                    frames,
                    out_n,
                    x_truth: Array2::from_shape_vec((IMAGE_N, IMAGE_N), floats(xb)).expect("784 values"),
                }
            })
            .collect();
        if count == 0 {
            return Ok(Self { frames, out_n, samples });
        }
        Self::new(samples)
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

    /// One CSV row per sample: index, frames, y statistics and truth mean.
    pub fn write_metadata_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,frames,out_n,y_min,y_max,y_mean,x_mean")?;
        for (i, s) in self.samples.iter().enumerate() {
            let (lo, hi) = s.y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let mean = s.y.iter().sum::<f64>() / s.y.len() as f64;
            let xm = s.x_truth.mean().unwrap_or(0.0);
            writeln!(w, "{i},{},{},{lo:.6},{hi:.6},{mean:.6},{xm:.6}", s.frames, s.out_n)?;
        }
        Ok(())
    }
}
