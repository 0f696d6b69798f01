//! Checks that run on the bundled image sets.

use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::Array2;
use vortex_core::config::RunConfig;
use vortex_core::dataset::{ImageSet, Split};
use vortex_core::encoders::{EncodedSet, Encoder, EncoderSpec, Readout};
use vortex_core::optics::{derivative_oracle_check, gaussian_aperture, phase_object, OpticalConfig};
use vortex_core::smallbrain::{self, Activation, DenseNet, TrainConfig, TrainingData};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn derivative_oracle_on_digit_phase_objects() {
    let digits = ImageSet::from_idx(&data("mnist-digits-4500-idx3-ubyte"), Split::Train).unwrap();
    let cfg = OpticalConfig { waist_w: 0.11, ..Default::default() };
    let g = gaussian_aperture(&cfg).unwrap();
    for img in digits.images.iter().take(3) {
        let h = phase_object(img.view(), &cfg).unwrap().mul(&g).unwrap();
        for s in [1, -1] {
            let d = derivative_oracle_check(&h, s, cfg.f_lambda, 4).unwrap();
            assert!(d < 5e-3, "sign {s}: {d}");
        }
    }
}

#[test]
fn fashion_training_mse_does_not_increase_early() {
    let all = ImageSet::from_idx(&data("fashion-mnist-5000-idx3-ubyte"), Split::Train).unwrap();
    let cfg = RunConfig::default();
    let enc = Encoder::new(&EncoderSpec::vortex(&[1.0, 3.0]), &cfg.optics).unwrap();
    let set = EncodedSet::new(enc.encode_batch(&all.images[..4500], &Readout::default()).unwrap()).unwrap();
    let data = TrainingData::from_set(&set).unwrap();
    let net = DenseNet::init(1568, cfg.hidden, 784, (Activation::Linear, Activation::Sigmoid), 0).unwrap();
    let train_cfg = TrainConfig { epochs: 3, ..cfg.train_config() };
    let (_, history) = smallbrain::train(&net, &data, None, &train_cfg).unwrap();
    let mse: Vec<f64> = history.epochs.iter().map(|e| e.train_mse).collect();
    assert!(mse.windows(2).all(|w| w[1] <= w[0]), "{mse:?}");
}

#[test]
fn throughput_scales_with_width_and_batch() {
    let inputs = Array2::from_shape_fn((256, 1568), |(i, j)| ((i * 31 + j * 7) % 97) as f64 / 97.0);
    let acts = (Activation::Linear, Activation::Sigmoid);
    let fps = |hidden, batch| {
        let net = DenseNet::init(1568, hidden, 784, acts, 0).unwrap();
        smallbrain::throughput_bench(&net, inputs.view(), batch, Duration::from_millis(600)).unwrap().fps
    };
    let (narrow, wide) = (fps(392, 64), fps(784, 64));
    assert!(wide < narrow, "{wide} vs {narrow}");
    let single = fps(784, 1);
    assert!(wide >= single, "batched {wide} vs single {single}");
}
