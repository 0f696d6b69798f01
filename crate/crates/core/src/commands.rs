//! Implementations of the `vortex` command-line verbs. Each command writes
//! its outputs and the fully resolved configuration into an output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::{self, ImageSet, Split};
use crate::encoders::{EncodedSet, Encoder, EncoderSpec, Exposure, Readout};
use crate::error::{Error, Result};
use crate::optics::IMAGE_N;
use crate::pgm;
use crate::sensor;
use crate::smallbrain::{self, DenseNet, Evaluation, History, TrainingData};

pub const RESOLVED_CONFIG: &str = "config.resolved";

/// Resolved configuration plus the output directory of one command run.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let out = out.into();
        fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
        let ctx = Self { cfg, out };
        ctx.write(RESOLVED_CONFIG, ctx.cfg.render().as_bytes())?;
        Ok(ctx)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::file(&p, e))
    }

    fn required<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| Error::ConfigKey(format!("this command needs `{key}` to be set")))
    }
}

/// Train and optional test image sets selected by the dataset keys.
pub fn load_images(cfg: &RunConfig) -> Result<(ImageSet, Option<ImageSet>)> {
    let path =
        cfg.dataset.as_deref().ok_or_else(|| Error::ConfigKey("this command needs `dataset` to be set".into()))?;
    let all = ImageSet::from_idx(path, Split::Train)?;
    let take = |set: ImageSet, n: usize| -> Result<ImageSet> {
        if n > set.len() {
            return Err(Error::Format(format!("{} has {} images, {n} requested", set.name, set.len())));
        }
        let mut set = set;
        if n > 0 {
            set.images.truncate(n);
        }
        Ok(set)
    };
    let (train, test) = if let Some(tp) = cfg.test_dataset.as_deref() {
        let test = ImageSet::from_idx(tp, Split::Test)?;
        (take(all, cfg.n_train)?, Some(take(test, cfg.n_test)?))
    } else if cfg.n_test > 0 {
        let n_train = if cfg.n_train > 0 { cfg.n_train } else { all.len().saturating_sub(cfg.n_test) };
        let (a, b) = dataset::split(&all, n_train, cfg.n_test, cfg.split_seed())?;
        (a, Some(b))
    } else {
        (take(all, cfg.n_train)?, None)
    };
    let train = if cfg.flip_augment { dataset::flip_augment(&train) } else { train };
    Ok((train, test))
}

/// Mean PSNR implied by the camera settings over the frames of `images`.
pub fn implied_psnr(encoder: &Encoder, images: &[Array2<f64>], readout: &Readout) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for img in images {
        for p in encoder.patterns(img.view())? {
            let db = match readout.exposure {
                Exposure::TargetPsnr(db) => db,
                Exposure::Flux(f) => sensor::psnr(p.view(), &readout.camera.with_flux(f))?,
                Exposure::Noiseless => sensor::psnr(p.view(), &readout.camera)?,
            };
            sum += db;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub train_count: usize,
    pub test_count: usize,
    pub frames: usize,
    pub out_n: usize,
    pub psnr_db: f64,
}

pub fn simulate(ctx: &Context, log: &mut dyn Write) -> Result<SimulateReport> {
    let cfg = &ctx.cfg;
    let (train, test) = load_images(cfg)?;
    let encoder = Encoder::new(&cfg.encoder, &cfg.optics)?;
    let readout = cfg.readout();
    let write_set = |name: &str, set: &ImageSet, offset: u64| -> Result<usize> {
        let mut r = readout;
        r.camera.rng_seed = sensor::derive_seed(r.camera.rng_seed, &[offset]);
        let enc = EncodedSet::new(encoder.encode_batch(&set.images, &r)?)?;
        enc.save(&ctx.path(&format!("{name}.vpty")))?;
        let mut csv = Vec::new();
        enc.write_metadata_csv(&mut csv)?;
        ctx.write(&format!("{name}.csv"), &csv)?;
        Ok(enc.len())
    };
    let train_count = write_set("train", &train, 0)?;
    let test_count = match &test {
        Some(t) => write_set("test", t, 1)?,
        None => 0,
    };
    let probe = &train.images[..train.len().min(32)];
    let psnr_db = implied_psnr(&encoder, probe, &readout)?;
    writeln!(
        log,
        "encoder {} ({} frames of {}x{})",
        cfg.encoder.label(),
        cfg.encoder.frames(),
        cfg.encoder.out_n,
        cfg.encoder.out_n
    )?;
    writeln!(log, "train: {train_count} samples -> {}", ctx.path("train.vpty").display())?;
    if test_count > 0 {
        writeln!(log, "test: {test_count} samples -> {}", ctx.path("test.vpty").display())?;
    }
    writeln!(log, "implied PSNR: {psnr_db:.2} dB (dark_var {})", cfg.camera.dark_var)?;
    Ok(SimulateReport { train_count, test_count, frames: cfg.encoder.frames(), out_n: cfg.encoder.out_n, psnr_db })
}

fn fresh_net(cfg: &RunConfig, input_dim: usize) -> Result<DenseNet> {
    DenseNet::init(input_dim, cfg.hidden, IMAGE_N * IMAGE_N, (cfg.act_hidden, cfg.act_out), cfg.init_seed())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: History,
    pub test: Option<(f64, f64)>,
}

pub fn train(ctx: &Context, log: &mut dyn Write) -> Result<TrainReport> {
    let cfg = &ctx.cfg;
    let train_set = EncodedSet::load(ctx.required(&cfg.train_data, "train_data")?)?;
    let test_set = cfg.test_data.as_deref().map(EncodedSet::load).transpose()?;
    let data = TrainingData::from_set(&train_set)?;
    let test = test_set.as_ref().map(TrainingData::from_set).transpose()?;
    let net = match cfg.checkpoint.as_deref() {
        Some(p) => DenseNet::load(p)?,
        None => fresh_net(cfg, train_set.input_dim())?,
    };
    if net.input_dim() != data.y.ncols() {
        return Err(Error::Dimension { expected: net.input_dim(), got: data.y.ncols() });
    }
    let (net, history) = if cfg.train.epochs == 0 {
        if cfg.checkpoint.is_none() {
            return Err(Error::ConfigKey("epochs = 0 only makes sense when resuming from a checkpoint".into()));
        }
        (net, History::default())
    } else {
        smallbrain::train(&net, &data, test.as_ref(), &cfg.train_config())?
    };
    net.save(&ctx.path("model.vnet"))?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    ctx.write("history.csv", &csv)?;
    for r in &history.epochs {
        match r.test_mse {
            Some(t) => writeln!(log, "epoch {:>3}  train_mse {:.6}  test_mse {t:.6}", r.epoch, r.train_mse)?,
            None => writeln!(log, "epoch {:>3}  train_mse {:.6}", r.epoch, r.train_mse)?,
        }
    }
    let scored = match &test {
        Some(t) => {
            let ev = smallbrain::evaluate(&net.to_f32_precision(), t)?;
            writeln!(log, "test: mean SSIM {:.4}, mean MSE {:.5}", ev.mean_ssim, ev.mean_mse)?;
            Some((ev.mean_ssim, ev.mean_mse))
        }
        None => None,
    };
    writeln!(log, "checkpoint -> {}", ctx.path("model.vnet").display())?;
    Ok(TrainReport { history, test: scored })
}

fn tile_montage(ctx: &Context, name: &str, tiles: Vec<Array2<f64>>) -> Result<()> {
    if tiles.is_empty() {
        return Ok(());
    }
    let m = pgm::montage(&tiles, 5, 5, 2)?;
    pgm::save_pgm8(&ctx.path(name), m.view())
}

/// 5×5 montages of truth, each input frame and the reconstruction.
pub fn write_montages(ctx: &Context, prefix: &str, set: &EncodedSet, ev: &Evaluation) -> Result<()> {
    let n = set.len().min(25);
    tile_montage(ctx, &format!("{prefix}truth.pgm"), set.samples[..n].iter().map(|s| s.x_truth.clone()).collect())?;
    for k in 0..set.frames {
        let tiles = set.samples[..n].iter().map(|s| s.frame(k).to_owned()).collect();
        tile_montage(ctx, &format!("{prefix}input_frame{k}.pgm"), tiles)?;
    }
    tile_montage(ctx, &format!("{prefix}recon.pgm"), ev.reconstructions[..n].to_vec())
}

pub fn eval(ctx: &Context, log: &mut dyn Write) -> Result<Evaluation> {
    let cfg = &ctx.cfg;
    let net = DenseNet::load(ctx.required(&cfg.checkpoint, "checkpoint")?)?;
    let set = EncodedSet::load(ctx.required(&cfg.eval_data, "eval_data")?)?;
    let ev = smallbrain::evaluate(&net, &TrainingData::from_set(&set)?)?;
    let mut csv = String::from("index,mse,ssim\n");
    for (i, s) in ev.per_sample.iter().enumerate() {
        csv.push_str(&format!("{i},{:.8},{:.8}\n", s.mse, s.ssim));
    }
    csv.push_str(&format!("mean,{:.8},{:.8}\n", ev.mean_mse, ev.mean_ssim));
    ctx.write("metrics.csv", csv.as_bytes())?;
    write_montages(ctx, "", &set, &ev)?;
    writeln!(log, "{} samples: mean SSIM {:.4}, mean MSE {:.5}", set.len(), ev.mean_ssim, ev.mean_mse)?;
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub psnr_db: f64,
    pub encoder: String,
    /// `None` when the level is above the encoder's dark-free PSNR.
    pub scores: Option<(f64, f64)>,
}

/// Trains one noiseless net per sweep encoder, then scores it on test sets
/// re-encoded at each PSNR level.
pub fn sweep_noise(ctx: &Context, log: &mut dyn Write) -> Result<Vec<SweepRow>> {
    let cfg = &ctx.cfg;
    let mut rows = Vec::new();
    if !cfg.psnr_list.is_empty() {
        let (train_imgs, test_imgs) = load_images(cfg)?;
        let test_imgs = test_imgs
            .ok_or_else(|| Error::ConfigKey("sweep-noise needs a test split (n_test or test_dataset)".into()))?;
        let clean = Readout { camera: cfg.camera_seeded(), ..Readout::default() };
        for spec in &cfg.sweep_encoders {
            let spec = cfg.sweep_spec(spec);
            let (encoder, net) = train_noiseless(cfg, &spec, &train_imgs, &clean)?;
            let label = spec.label();
            let lowest = cfg.psnr_list.iter().cloned().fold(f64::INFINITY, f64::min);
            for &db in &cfg.psnr_list {
                let readout = Readout { exposure: Exposure::TargetPsnr(db), ..clean };
                let scores = match encoder.encode_batch(&test_imgs.images, &readout) {
                    Ok(samples) => {
                        let set = EncodedSet::new(samples)?;
                        let ev = smallbrain::evaluate(&net, &TrainingData::from_set(&set)?)?;
                        if db == lowest {
                            write_montages(ctx, &format!("{}_{db}dB_", spec.kind.name()), &set, &ev)?;
                        }
                        Some((ev.mean_ssim, ev.mean_mse))
                    }
                    Err(Error::UnachievablePsnr { .. }) => None,
                    Err(e) => return Err(e),
                };
                match scores {
                    Some((s, m)) => writeln!(log, "{label:>16} {db:>6.1} dB  SSIM {s:.4}  MSE {m:.5}")?,
                    None => writeln!(log, "{label:>16} {db:>6.1} dB  unachievable")?,
                }
                rows.push(SweepRow { psnr_db: db, encoder: label.clone(), scores });
            }
        }
    }
    let mut csv = String::from("psnr_db,encoder,mean_ssim,mean_mse\n");
    for r in &rows {
        let (s, m) =
            r.scores.map(|(s, m)| (format!("{s:.6}"), format!("{m:.6}"))).unwrap_or(("nan".into(), "nan".into()));
        csv.push_str(&format!("{},{},{s},{m}\n", r.psnr_db, r.encoder));
    }
    ctx.write("sweep.csv", csv.as_bytes())?;
    Ok(rows)
}

/// Encodes `images` noiselessly and trains a fresh net on them.
pub fn train_noiseless(
    cfg: &RunConfig,
    spec: &EncoderSpec,
    images: &ImageSet,
    clean: &Readout,
) -> Result<(Encoder, DenseNet)> {
    let encoder = Encoder::new(spec, &cfg.optics)?;
    let set = EncodedSet::new(encoder.encode_batch(&images.images, clean)?)?;
    let data = TrainingData::from_set(&set)?;
    let net = fresh_net(cfg, spec.input_dim())?;
    let (net, _) = smallbrain::train(&net, &data, None, &cfg.train_config())?;
    Ok((encoder, net))
}

/// Short description of the host CPU for benchmark logs.
pub fn machine_info() -> String {
    let model = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".into());
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{model}; {threads} hardware threads; {}-{}", std::env::consts::OS, std::env::consts::ARCH)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub single: smallbrain::BenchReport,
    pub batched: smallbrain::BenchReport,
    pub bit_identical: bool,
    pub machine: String,
    pub config_hash: u64,
}

pub fn bench(ctx: &Context, log: &mut dyn Write) -> Result<BenchSummary> {
    let cfg = &ctx.cfg;
    let net = match cfg.checkpoint.as_deref() {
        Some(p) => DenseNet::load(p)?,
        None => fresh_net(cfg, cfg.encoder.input_dim())?,
    };
    let inputs = match cfg.eval_data.as_deref() {
        Some(p) => TrainingData::from_set(&EncodedSet::load(p)?)?.y,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Array2::from_shape_simple_fn((256, net.input_dim()), || rng.random::<f64>())
        }
    };
    let summary =
        bench_net(&net, inputs.view(), cfg.bench_batch, Duration::from_secs_f64(cfg.bench_seconds), cfg.hash())?;
    writeln!(log, "machine: {}", summary.machine)?;
    writeln!(log, "net: {} -> {} -> {}", net.input_dim(), net.hidden_dim(), net.output_dim())?;
    writeln!(log, "batch 1: {:.0} frames/s", summary.single.fps)?;
    writeln!(
        log,
        "batch {}: {:.0} frames/s over {:.2} s",
        summary.batched.batch, summary.batched.fps, summary.batched.seconds
    )?;
    writeln!(log, "matches forward(): {}", if summary.bit_identical { "bit-identical" } else { "NO" })?;
    writeln!(log, "config hash: {:016x}", summary.config_hash)?;
    let text = format!(
        "machine,{}\nbatch,fps,frames,seconds\n1,{:.1},{},{:.3}\n{},{:.1},{},{:.3}\n",
        summary.machine,
        summary.single.fps,
        summary.single.frames,
        summary.single.seconds,
        summary.batched.batch,
        summary.batched.fps,
        summary.batched.frames,
        summary.batched.seconds
    );
    ctx.write("bench.csv", text.as_bytes())?;
    Ok(summary)
}

/// Times batch-1 and batched inference and checks the batched outputs
/// against single-sample `forward()`.
pub fn bench_net(
    net: &DenseNet,
    inputs: ArrayView2<'_, f64>,
    batch: usize,
    duration: Duration,
    config_hash: u64,
) -> Result<BenchSummary> {
    let single = smallbrain::throughput_bench(net, inputs, 1, duration / 4)?;
    let batched = smallbrain::throughput_bench(net, inputs, batch, duration)?;
    let probe = inputs.nrows().min(batch.max(1));
    let out = net.infer(inputs.slice(ndarray::s![..probe, ..]))?;
    let mut bit_identical = true;
    for (r, row) in inputs.outer_iter().take(probe).enumerate() {
        let one = net.forward(&row.to_vec())?;
        bit_identical &= out.row(r).iter().zip(one.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Ok(BenchSummary { single, batched, bit_identical, machine: machine_info(), config_hash })
}

/// Default IDX path for a converted CSV: `<out_dir>/<stem>-idx3-ubyte`.
pub fn idx_path_for(csv: &Path, out_dir: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "images".into());
    out_dir.join(format!("{stem}-idx3-ubyte"))
}

/// Converts a CSV of 784-value rows into an IDX3 file.
pub fn convert(csv: &Path, target: &Path, log: &mut dyn Write) -> Result<usize> {
    if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    let n = dataset::convert_csv_to_idx(csv, target)?;
    writeln!(log, "{n} images -> {}", target.display())?;
    Ok(n)
}
