use ndarray::Array2;
use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, ProptestConfig, Strategy};
use vortex_core::config::RunConfig;
use vortex_core::dataset::{encode_idx, normalize_unit, parse_idx, RawImages};
use vortex_core::encoders::{crop_downsample, EncodedSet, Encoder, EncoderSpec, Readout};
use vortex_core::metrics;
use vortex_core::optics::{forward_intensity, OpticalConfig, VortexCharge};
use vortex_core::sensor::{self, CameraModel};

fn image(seed: u64) -> Array2<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Array2::from_shape_simple_fn((28, 28), || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 33) % 256) as f64 / 255.0
    })
}

fn raw_images() -> impl Strategy<Value = RawImages> {
    (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(rows, cols, n)| {
        prop::collection::vec(prop::collection::vec(0u8..=255, rows * cols), n).prop_map(move |pixels| RawImages {
            rows,
            cols,
            pixels,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn idx_round_trip(raw in raw_images()) {
        let back = parse_idx(&encode_idx(&raw).unwrap()).unwrap();
        prop_assert_eq!(&back, &raw);
    }

    #[test]
    fn normalized_images_lie_in_unit_range(pixels in prop::collection::vec(prop::collection::vec(0u8..=255, 784), 1..3)) {
        let raw = RawImages { rows: 28, cols: 28, pixels };
        prop_assert!(normalize_unit(&raw).unwrap().iter().all(|im| im.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn optical_power_is_charge_independent(seed in 0u64..1000, m in -6i32..=6) {
        let cfg = OpticalConfig::default();
        let img = image(seed);
        let p0: f64 = forward_intensity(img.view(), VortexCharge(0.0), &cfg).unwrap().sum();
        let pm: f64 = forward_intensity(img.view(), VortexCharge(m as f64), &cfg).unwrap().sum();
        prop_assert!((p0 - pm).abs() < 1e-9 * p0);
    }

    #[test]
    fn quantized_frames_span_full_scale(seed in 0u64..1000, bits in 8u32..=16, flux in 0.1f64..50.0) {
        let cam = CameraModel { bit_depth: bits, flux_scale: flux, rng_seed: seed, ..Default::default() };
        let pattern = image(seed).mapv(|v| v * v);
        let counts = sensor::add_noise(pattern.view(), &cam).unwrap();
        prop_assert!(counts.iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
        let frame = sensor::quantize(counts.view(), &cam).unwrap();
        let max = frame.data.iter().cloned().max().unwrap();
        prop_assert_eq!(max, cam.full_scale());
    }

    #[test]
    fn flux_solve_hits_target(seed in 0u64..200, db in 1.0f64..6.0) {
        let pattern = image(seed).mapv(|v| v + 0.05);
        let cam = CameraModel::default();
        match sensor::flux_for_target_psnr(pattern.view(), db, &cam) {
            Ok(flux) => {
                let got = sensor::psnr(pattern.view(), &cam.with_flux(flux)).unwrap();
                prop_assert!((got - db).abs() < 1e-9, "{} vs {}", got, db);
            }
            Err(_) => prop_assert!(db >= sensor::dark_free_psnr(pattern.view()).unwrap()),
        }
    }

    #[test]
    fn solved_flux_is_proportional_to_dark_level(seed in 0u64..200, db in 1.0f64..5.0, dark in 0.1f64..50.0) {
        let pattern = image(seed).mapv(|v| v + 0.05);
        let cam = CameraModel { dark_var: dark, ..Default::default() };
        let full = sensor::flux_for_target_psnr(pattern.view(), db, &cam);
        let half = sensor::flux_for_target_psnr(pattern.view(), db, &CameraModel { dark_var: dark / 2.0, ..cam });
        if let (Ok(f), Ok(h)) = (full, half) {
            prop_assert!((h - f / 2.0).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn crop_downsample_preserves_mean_of_cropped_region(seed in 0u64..1000, out_n in prop::sample::select(vec![7usize, 14, 28])) {
        let big = Array2::from_shape_fn((56, 56), |(i, j)| image(seed)[[i / 2, j / 2]]);
        let small = crop_downsample(big.view(), 1.0, out_n).unwrap();
        prop_assert!((small.mean().unwrap() - big.mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_symmetric(a in 0u64..1000, b in 0u64..1000) {
        let (x, y) = (image(a), image(b));
        let s = metrics::ssim(x.view(), y.view()).unwrap();
        prop_assert!(s <= 1.0 + 1e-12);
        prop_assert_eq!(s, metrics::ssim(y.view(), x.view()).unwrap());
        prop_assert_eq!(metrics::mse(x.view(), y.view()).unwrap(), metrics::mse(y.view(), x.view()).unwrap());
    }

    #[test]
    fn vpty_round_trip_at_f32_precision(seeds in prop::collection::vec(0u64..1000, 1..4), charges in prop::sample::select(vec![vec![1.0], vec![1.0, 3.0]])) {
        let enc = Encoder::new(&EncoderSpec::vortex(&charges), &OpticalConfig::default()).unwrap();
        let imgs: Vec<_> = seeds.iter().map(|&s| image(s)).collect();
        let set = EncodedSet::new(enc.encode_batch(&imgs, &Readout::default()).unwrap()).unwrap();
        let mut bytes = Vec::new();
        set.write(&mut bytes).unwrap();
        let back = EncodedSet::parse(&bytes).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for (a, b) in set.samples.iter().zip(&back.samples) {
            prop_assert!(a.y.iter().zip(&b.y).all(|(u, v)| (u - v).abs() <= 1e-7));
            prop_assert!(a.x_truth.iter().zip(b.x_truth.iter()).all(|(u, v)| (u - v).abs() <= 1e-7));
        }
    }

    #[test]
    fn config_render_round_trips(seed in 0u64..u64::MAX, hidden in 1usize..4096, lr in 1e-6f64..1.0, db in prop::option::of(0.5f64..40.0), enc in prop::sample::select(vec!["plain", "vortex:1,3", "vortex:2", "random:11"]), noisy in prop::bool::ANY) {
        let mut cfg = RunConfig { seed, hidden, ..Default::default() };
        cfg.set("lr", &lr.to_string()).unwrap();
        cfg.set("encoder", enc).unwrap();
        cfg.noisy = noisy;
        cfg.psnr_db = db;
        let back = RunConfig::parse(&cfg.render()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
