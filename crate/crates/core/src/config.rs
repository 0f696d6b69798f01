//! Flat `key = value` run configuration covering every knob of the pipeline.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::encoders::{EncoderKind, EncoderSpec, Exposure, Readout};
use crate::error::{Error, Result};
use crate::optics::{Beam, OpticalConfig, VortexCharge};
use crate::sensor::{self, CameraModel};
use crate::smallbrain::{Activation, InputScaling, Optimizer, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optics: OpticalConfig,
    pub encoder: EncoderSpec,
    pub camera: CameraModel,
    /// `None` for noiseless encodings.
    pub psnr_db: Option<f64>,
    pub noisy: bool,
    pub train: TrainConfig,
    pub hidden: usize,
    pub act_hidden: Activation,
    pub act_out: Activation,
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub flip_augment: bool,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub psnr_list: Vec<f64>,
    pub sweep_encoders: Vec<EncoderSpec>,
    pub bench_seconds: f64,
    pub bench_batch: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optics: OpticalConfig::default(),
            encoder: EncoderSpec::vortex(&[1.0, 3.0]),
            camera: CameraModel::default(),
            psnr_db: None,
            noisy: false,
            train: TrainConfig::default(),
            hidden: 784,
            act_hidden: Activation::Linear,
            act_out: Activation::Sigmoid,
            seed: 0,
            dataset: None,
            test_dataset: None,
            n_train: 0,
            n_test: 0,
            flip_augment: false,
            train_data: None,
            test_data: None,
            eval_data: None,
            checkpoint: None,
            psnr_list: vec![20.0, 10.0, 5.0, 2.0],
            sweep_encoders: vec![EncoderSpec::vortex(&[1.0, 3.0]), EncoderSpec::random(7)],
            bench_seconds: 3.0,
            bench_batch: 64,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::ConfigKey(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| bad(key, value, &e.to_string()))
}

fn float(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => num(key, value),
    }
}

fn float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| float(key, s)).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// Parses `kind` or `kind:params` (`vortex:1,3`, `random:7`, `plain`).
pub fn parse_encoder(text: &str) -> Result<EncoderSpec> {
    let (kind, params) = text.split_once(':').unwrap_or((text, ""));
    let kind =
        EncoderKind::parse(kind.trim()).ok_or_else(|| bad("encoder", text, "expected plain, vortex or random"))?;
    Ok(match kind {
        EncoderKind::PlainFourier => EncoderSpec::plain(),
        EncoderKind::Vortex => EncoderSpec::vortex(&float_list("encoder", params)?),
        EncoderKind::Random => {
            EncoderSpec::random(if params.trim().is_empty() { 7 } else { num("encoder", params.trim())? })
        }
    })
}

pub fn show_encoder(spec: &EncoderSpec) -> String {
    match spec.kind {
        EncoderKind::PlainFourier => "plain".into(),
        EncoderKind::Vortex => format!("vortex:{}", show_list(&spec.charges.iter().map(|m| m.0).collect::<Vec<_>>())),
        EncoderKind::Random => format!("random:{}", spec.random_seed),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "grid_n" => self.optics.grid_n = num(key, v)?,
            "object_n" => self.optics.object_n = num(key, v)?,
            "extent" => self.optics.extent = float(key, v)?,
            "f_lambda" => self.optics.f_lambda = float(key, v)?,
            "aperture_a" => self.optics.aperture_a = float(key, v)?,
            "waist_w" => self.optics.waist_w = float(key, v)?,
            "alpha0" => self.optics.alpha0 = float(key, v)?,
            "beam" => self.optics.beam = Beam::parse(v).ok_or_else(|| bad(key, v, "expected gaussian or flat"))?,
            "encoder" => {
                let spec = parse_encoder(v)?;
                self.encoder = EncoderSpec { crop_frac: self.encoder.crop_frac, out_n: self.encoder.out_n, ..spec };
            }
            "crop_frac" => self.encoder.crop_frac = float(key, v)?,
            "out_n" => self.encoder.out_n = num(key, v)?,
            "bit_depth" => self.camera.bit_depth = num(key, v)?,
            "dark_var" => self.camera.dark_var = float(key, v)?,
            "flux_scale" => self.camera.flux_scale = float(key, v)?,
            "noisy" => self.noisy = boolean(key, v)?,
            "psnr_db" => self.psnr_db = if v == "none" { None } else { Some(float(key, v)?) },
            "epochs" => self.train.epochs = num(key, v)?,
            "batch" => self.train.batch = num(key, v)?,
            "lr" => self.train.lr = float(key, v)?,
            "optimizer" => {
                self.train.optimizer = match v {
                    "adam" => Optimizer::adam(),
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(bad(key, v, "expected adam or sgd")),
                }
            }
            "adam_beta1" | "adam_beta2" | "adam_eps" => {
                let x = float(key, v)?;
                let Optimizer::Adam { beta1, beta2, eps } = self.train.optimizer else {
                    return Err(bad(key, v, "only valid with optimizer = adam (set optimizer first)"));
                };
                self.train.optimizer = match key.trim() {
                    "adam_beta1" => Optimizer::Adam { beta1: x, beta2, eps },
                    "adam_beta2" => Optimizer::Adam { beta1, beta2: x, eps },
                    _ => Optimizer::Adam { beta1, beta2, eps: x },
                };
            }
            "input_scaling" => {
                self.train.scaling = InputScaling::parse(v)
                    .ok_or_else(|| bad(key, v, "expected none, global, feature or feature:<floor>"))?
            }
            "hidden" => self.hidden = num(key, v)?,
            "act_hidden" => {
                self.act_hidden = Activation::parse(v).ok_or_else(|| bad(key, v, "expected linear or sigmoid"))?
            }
            "act_out" => {
                self.act_out = Activation::parse(v).ok_or_else(|| bad(key, v, "expected linear or sigmoid"))?
            }
            "seed" => self.seed = num(key, v)?,
            "dataset" => self.dataset = path(v),
            "test_dataset" => self.test_dataset = path(v),
            "n_train" => self.n_train = num(key, v)?,
            "n_test" => self.n_test = num(key, v)?,
            "flip_augment" => self.flip_augment = boolean(key, v)?,
            "train_data" => self.train_data = path(v),
            "test_data" => self.test_data = path(v),
            "eval_data" => self.eval_data = path(v),
            "checkpoint" => self.checkpoint = path(v),
            "psnr_list" => self.psnr_list = float_list(key, v)?,
            "sweep_encoders" => {
                self.sweep_encoders =
                    v.split(';').map(str::trim).filter(|s| !s.is_empty()).map(parse_encoder).collect::<Result<_>>()?
            }
            "bench_seconds" => self.bench_seconds = float(key, v)?,
            "bench_batch" => self.bench_batch = num(key, v)?,
            other => return Err(Error::ConfigKey(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses config text: one `key = value` per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::ConfigKey(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    /// Checks every section; errors are reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.encoder.validate(&self.optics)?;
        for e in &self.sweep_encoders {
            EncoderSpec { crop_frac: self.encoder.crop_frac, out_n: self.encoder.out_n, ..e.clone() }
                .validate(&self.optics)?;
        }
        self.camera.validate()?;
        if self.hidden == 0 {
            return Err(Error::ConfigKey("hidden must be >= 1".into()));
        }
        if !(self.bench_seconds > 0.0 && self.bench_seconds.is_finite()) || self.bench_batch == 0 {
            return Err(Error::ConfigKey("bench_seconds and bench_batch must be positive".into()));
        }
        if let Some(db) = self.psnr_db {
            if !db.is_finite() {
                return Err(Error::ConfigKey("psnr_db must be finite".into()));
            }
        }
        Ok(())
    }

    /// Encoder spec for a sweep entry, sharing this config's crop and output size.
    pub fn sweep_spec(&self, e: &EncoderSpec) -> EncoderSpec {
        EncoderSpec { crop_frac: self.encoder.crop_frac, out_n: self.encoder.out_n, ..e.clone() }
    }

    pub fn camera_seeded(&self) -> CameraModel {
        self.camera.with_seed(sensor::derive_seed(self.seed, &[0x6e6f697365]))
    }

    /// Readout implied by the camera keys: a PSNR target wins over a fixed
    /// flux, and neither applies unless `noisy = true` or a target is set.
    pub fn readout(&self) -> Readout {
        let exposure = match (self.psnr_db, self.noisy) {
            (Some(db), _) => Exposure::TargetPsnr(db),
            (None, true) => Exposure::Flux(self.camera.flux_scale),
            (None, false) => Exposure::Noiseless,
        };
        Readout { camera: self.camera_seeded(), exposure, quantize: true }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: sensor::derive_seed(self.seed, &[0x747261696e]), ..self.train }
    }

    pub fn init_seed(&self) -> u64 {
        sensor::derive_seed(self.seed, &[0x696e6974])
    }

    pub fn split_seed(&self) -> u64 {
        self.seed
    }

    /// Every key with its resolved value, in a stable order.
    pub fn render(&self) -> String {
        let o = &self.optics;
        let (b1, b2, eps, opt) = match self.train.optimizer {
            Optimizer::Adam { beta1, beta2, eps } => (beta1, beta2, eps, "adam"),
            Optimizer::Sgd => (0.9, 0.999, 1e-8, "sgd"),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grid_n", o.grid_n.to_string());
        kv("object_n", o.object_n.to_string());
        kv("extent", o.extent.to_string());
        kv("f_lambda", if o.f_lambda.is_infinite() { "inf".into() } else { o.f_lambda.to_string() });
        kv("aperture_a", o.aperture_a.to_string());
        kv("waist_w", o.waist_w.to_string());
        kv("alpha0", o.alpha0.to_string());
        kv("beam", o.beam.name().into());
        kv("encoder", show_encoder(&self.encoder));
        kv("crop_frac", self.encoder.crop_frac.to_string());
        kv("out_n", self.encoder.out_n.to_string());
        kv("bit_depth", self.camera.bit_depth.to_string());
        kv("dark_var", self.camera.dark_var.to_string());
        kv("flux_scale", self.camera.flux_scale.to_string());
        kv("noisy", self.noisy.to_string());
        kv("psnr_db", self.psnr_db.map(|d| d.to_string()).unwrap_or_else(|| "none".into()));
        kv("epochs", self.train.epochs.to_string());
        kv("batch", self.train.batch.to_string());
        kv("lr", self.train.lr.to_string());
        kv("optimizer", opt.into());
        if opt == "adam" {
            kv("adam_beta1", b1.to_string());
            kv("adam_beta2", b2.to_string());
            kv("adam_eps", eps.to_string());
        }
        kv("input_scaling", self.train.scaling.name());
        kv("hidden", self.hidden.to_string());
        kv("act_hidden", self.act_hidden.name().into());
        kv("act_out", self.act_out.name().into());
        kv("seed", self.seed.to_string());
        kv("dataset", show_path(&self.dataset));
        kv("test_dataset", show_path(&self.test_dataset));
        kv("n_train", self.n_train.to_string());
        kv("n_test", self.n_test.to_string());
        kv("flip_augment", self.flip_augment.to_string());
        kv("train_data", show_path(&self.train_data));
        kv("test_data", show_path(&self.test_data));
        kv("eval_data", show_path(&self.eval_data));
        kv("checkpoint", show_path(&self.checkpoint));
        kv("psnr_list", show_list(&self.psnr_list));
        kv("sweep_encoders", self.sweep_encoders.iter().map(show_encoder).collect::<Vec<_>>().join(";"));
        kv("bench_seconds", self.bench_seconds.to_string());
        kv("bench_batch", self.bench_batch.to_string());
        s
    }

    /// FNV-1a hash of the rendered configuration.
    pub fn hash(&self) -> u64 {
        self.render().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

/// Charges as plain numbers, for display.
pub fn charges_of(spec: &EncoderSpec) -> Vec<f64> {
    spec.charges.iter().map(|m: &VortexCharge| m.0).collect()
}
