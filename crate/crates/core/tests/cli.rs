use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use vortex_core::config::RunConfig;
use vortex_core::dataset::{load_idx, to_raw, write_idx};
use vortex_core::encoders::EncodedSet;

fn vortex(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortex")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 20 small deterministic blobs written as an IDX3 file.
fn fixture(dir: &Path) -> PathBuf {
    let imgs: Vec<Array2<f64>> = (0..20)
        .map(|k| {
            let (ci, cj) = (9.0 + (k % 5) as f64 * 2.0, 10.0 + (k / 5) as f64 * 2.0);
            Array2::from_shape_fn((28, 28), |(i, j)| {
                let (x, y) = (i as f64 - ci, j as f64 - cj);
                (-(x * x + 0.5 * y * y) / 18.0).exp()
            })
        })
        .collect();
    let p = dir.join("fixture-idx3-ubyte");
    write_idx(&p, &to_raw(&imgs)).unwrap();
    p
}

fn pgm_size(path: &Path) -> (usize, usize) {
    let bytes = fs::read(path).unwrap();
    let head = String::from_utf8_lossy(&bytes[..20]).into_owned();
    let mut it = head.split_whitespace();
    assert_eq!(it.next(), Some("P5"));
    (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
}

#[test]
fn simulate_fixture_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = fixture(d);
    let set = format!("dataset={}", data.display());
    let out = ok(&vortex(&["simulate", "--out", "a", &set, "encoder=vortex:1,3"], d));
    assert!(out.contains("train: 20 samples"), "{out}");
    assert!(out.contains("implied PSNR"), "{out}");
    ok(&vortex(&["simulate", "--out", "b", &set, "encoder=vortex:1,3"], d));
    let (a, b) = (fs::read(d.join("a/train.vpty")).unwrap(), fs::read(d.join("b/train.vpty")).unwrap());
    assert_eq!(a, b);
    let enc = EncodedSet::parse(&a).unwrap();
    assert_eq!((enc.len(), enc.frames, enc.out_n), (20, 2, 28));
    let resolved = fs::read_to_string(d.join("a/config.resolved")).unwrap();
    let cfg = RunConfig::parse(&resolved).unwrap();
    assert_eq!(cfg.dataset.as_deref(), Some(data.as_path()));
}

#[test]
fn noisy_simulation_depends_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    for (name, seed) in [("s1", "1"), ("s1b", "1"), ("s2", "2")] {
        ok(&vortex(&["simulate", "--out", name, "--seed", seed, &set, "psnr_db=5"], d));
    }
    let read = |n: &str| fs::read(d.join(n).join("train.vpty")).unwrap();
    assert_eq!(read("s1"), read("s1b"));
    assert_ne!(read("s1"), read("s2"));
}

#[test]
fn simulate_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    let small_crop = vortex(&["simulate", &set, "crop_frac=0.1"], d);
    assert_eq!(small_crop.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&small_crop.stderr).contains("crop"));
    assert_eq!(vortex(&["simulate", &set, "no_such_key=1"], d).status.code(), Some(1));
    assert_eq!(vortex(&["simulate", "dataset=missing-idx3-ubyte"], d).status.code(), Some(2));
    assert_eq!(vortex(&["simulate", &set, "psnr_db=60"], d).status.code(), Some(3));
    assert_eq!(vortex(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(vortex(&[], d).status.code(), Some(1));
}

#[test]
fn print_defaults_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&vortex(&["--print-defaults"], dir.path()));
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = fixture(d);
    fs::write(
        d.join("run.cfg"),
        format!("# fixture run\ndataset = {}\nencoder = vortex:3\nseed = 4\n", data.display()),
    )
    .unwrap();
    ok(&vortex(&["simulate", "--config", "run.cfg", "--out", "o", "crop_frac=0.4"], d));
    let cfg = RunConfig::load(&d.join("o/config.resolved")).unwrap();
    assert_eq!(cfg.encoder.frames(), 1);
    assert_eq!(cfg.encoder.crop_frac, 0.4);
    assert_eq!(cfg.seed, 4);
}

#[test]
fn train_resume_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    ok(&vortex(&["simulate", "--out", "sim", &set, "n_train=15", "n_test=5"], d));
    assert_eq!(EncodedSet::load(&d.join("sim/test.vpty")).unwrap().len(), 5);

    let common = ["train_data=sim/train.vpty", "test_data=sim/test.vpty", "hidden=32"];
    let mut args = vec!["train", "--out", "t", "epochs=2", "batch=5"];
    args.extend(common);
    let log = ok(&vortex(&args, d));
    assert!(log.contains("test: mean SSIM"), "{log}");
    let history = fs::read_to_string(d.join("t/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert_eq!(history.lines().next(), Some("epoch,train_mse,test_mse"));

    let mut args = vec!["train", "--out", "r", "epochs=0", "checkpoint=t/model.vnet"];
    args.extend(common);
    ok(&vortex(&args, d));
    assert_eq!(fs::read(d.join("t/model.vnet")).unwrap(), fs::read(d.join("r/model.vnet")).unwrap());

    ok(&vortex(&["eval", "--out", "e", "checkpoint=t/model.vnet", "eval_data=sim/test.vpty"], d));
    let metrics = fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 5 + 1);
    assert!(metrics.lines().last().unwrap().starts_with("mean,"));
    for name in ["truth.pgm", "input_frame0.pgm", "input_frame1.pgm", "recon.pgm"] {
        assert_eq!(pgm_size(&d.join("e").join(name)), (148, 148), "{name}");
    }

    let missing = vortex(&["eval", "checkpoint=nope.vnet", "eval_data=sim/test.vpty"], d);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_numeric_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    ok(&vortex(&["simulate", "--out", "sim", &set], d));
    let out = vortex(
        &[
            "train",
            "train_data=sim/train.vpty",
            "hidden=16",
            "epochs=3",
            "lr=1e12",
            "optimizer=sgd",
            "act_out=linear",
            "input_scaling=none",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn memorized_sample_evaluates_near_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    ok(&vortex(&["simulate", "--out", "sim", &set, "n_train=1"], d));
    ok(&vortex(
        &[
            "train",
            "--out",
            "t",
            "train_data=sim/train.vpty",
            "hidden=16",
            "epochs=400",
            "batch=1",
            "lr=0.01",
            "act_out=linear",
        ],
        d,
    ));
    let log = ok(&vortex(&["eval", "--out", "e", "checkpoint=t/model.vnet", "eval_data=sim/train.vpty"], d));
    let metrics = fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    let ssim: f64 = metrics.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(ssim > 0.999, "{log}");
}

#[test]
fn sweep_noise_rows_and_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = format!("dataset={}", fixture(d).display());
    ok(&vortex(&["sweep-noise", "--out", "empty", "psnr_list="], d));
    assert_eq!(fs::read_to_string(d.join("empty/sweep.csv")).unwrap(), "psnr_db,encoder,mean_ssim,mean_mse\n");

    let args = ["sweep-noise", "--out", "s", &set, "n_train=15", "n_test=5", "hidden=16", "epochs=2", "psnr_list=20,5"];
    ok(&vortex(&args, d));
    let csv = fs::read_to_string(d.join("s/sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("20,vortex"));
    // 20 dB is above what the random diffuser pattern can reach
    assert!(rows[2].starts_with("20,random") && rows[2].ends_with("nan,nan"), "{csv}");
    assert!(!rows[3].contains("nan"));
    assert_eq!(pgm_size(&d.join("s/vortex_5dB_recon.pgm")), (148, 148));
}

#[test]
fn bench_reports_throughput() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&vortex(&["bench", "bench_seconds=0.3", "hidden=64"], dir.path()));
    assert!(out.contains("frames/s"));
    assert!(out.contains("machine:"));
    assert!(out.contains("bit-identical"));
    assert!(out.contains("config hash:"));
}

#[test]
fn convert_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let row = |k: usize| (0..784).map(|i| ((i * 7 + k) % 256).to_string()).collect::<Vec<_>>().join(",");
    fs::write(d.join("glyphs.csv"), format!("{}\n{}\n{}\n", row(0), row(1), row(2))).unwrap();
    let log = ok(&vortex(&["convert", "glyphs.csv", "--out", "conv"], d));
    assert!(log.starts_with("3 images"));
    let raw = load_idx(&d.join("conv/glyphs-idx3-ubyte")).unwrap();
    assert_eq!(raw.pixels.len(), 3);
    assert_eq!(raw.pixels[1][5], 36);
    ok(&vortex(&["convert", "glyphs.csv", "named-idx3-ubyte"], d));
    assert_eq!(fs::read(d.join("named-idx3-ubyte")).unwrap(), fs::read(d.join("conv/glyphs-idx3-ubyte")).unwrap());

    fs::write(d.join("bad.csv"), "1,2,3\n").unwrap();
    assert_eq!(vortex(&["convert", "bad.csv"], d).status.code(), Some(2));
}
