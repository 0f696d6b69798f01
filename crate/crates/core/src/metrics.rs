//! Image-quality metrics used to score reconstructions.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub ssim: f64,
    pub psnr_db: f64,
}

impl MetricReport {
    pub fn compute(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Self> {
        let mse = mse(a, b)?;
        Ok(Self { mse, ssim: ssim(a, b)?, psnr_db: psnr_from_mse(mse, 1.0) })
    }
}

fn same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// Mean of squared per-pixel differences.
pub fn mse(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Normalized 1D Gaussian taps of length [`SSIM_WINDOW`].
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Symmetric (half-sample) reflection of an index into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - 1 - k;
    }
    k as usize
}

/// Separable Gaussian blur with symmetric boundary handling.
fn blur(img: &Array2<f64>, taps: &[f64; SSIM_WINDOW]) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                acc += w * img[[i, reflect(j as isize + t as isize - half, cols)]];
            }
            tmp[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                acc += w * tmp[[reflect(i as isize + t as isize - half, rows), j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5), unit
/// dynamic range and symmetric padding.
///
/// Inputs must lie in [0, 1]. Anticorrelated patches can make local values
/// negative; the mean is reported as computed, not clamped.
pub fn ssim(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(a, b)?;
    for v in a.iter().chain(b.iter()) {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Image(format!("SSIM input {v} outside [0, 1]")));
        }
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let taps = gaussian_taps();
    let a = a.to_owned();
    let b = b.to_owned();
    let mu_a = blur(&a, &taps);
    let mu_b = blur(&b, &taps);
    let aa = blur(&(&a * &a), &taps);
    let bb = blur(&(&b * &b), &taps);
    let ab = blur(&(&a * &b), &taps);

    let mut total = 0.0;
    for idx in 0..a.len() {
        let (i, j) = (idx / a.ncols(), idx % a.ncols());
        let (ma, mb) = (mu_a[[i, j]], mu_b[[i, j]]);
        let va = aa[[i, j]] - ma * ma;
        let vb = bb[[i, j]] - mb * mb;
        let cov = ab[[i, j]] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / a.len() as f64)
}

pub fn psnr_from_mse(mse: f64, dynamic_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (dynamic_range * dynamic_range / mse).log10()
    }
}

/// `10·log10(range² / mse(a, b))`; `+∞` for identical images.
pub fn psnr_report(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, dynamic_range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, dynamic_range))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((28, 28), |_| rng.random::<f64>())
    }

    #[test]
    fn mse_basics() {
        let z = Array2::zeros((28, 28));
        let o = Array2::ones((28, 28));
        assert_eq!(mse(z.view(), z.view()).unwrap(), 0.0);
        assert_eq!(mse(z.view(), o.view()).unwrap(), 1.0);
        assert!(mse(z.view(), Array2::zeros((27, 28)).view()).is_err());
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let a = random_image(1);
        let b = random_image(2);
        let mut acc = 0.0;
        for i in 0..28 {
            for j in 0..28 {
                let d = a[[i, j]] - b[[i, j]];
                acc += d * d;
            }
        }
        assert!((mse(a.view(), b.view()).unwrap() - acc / 784.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_constant_images() {
        let z = Array2::zeros((28, 28));
        let o = Array2::ones((28, 28));
        let c1 = 0.01f64 * 0.01;
        let c2 = 0.03f64 * 0.03;
        let want = ((2.0 * 0.0 * 1.0 + c1) * (2.0 * 0.0 + c2)) / ((0.0 + 1.0 + c1) * (0.0 + 0.0 + c2));
        let got = ssim(z.view(), o.view()).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn ssim_identity_on_random_images() {
        for seed in 0..100 {
            let a = random_image(seed);
            assert!((ssim(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ssim_rejects_out_of_range() {
        let mut a = Array2::zeros((28, 28));
        a[[0, 0]] = 1.2;
        assert!(ssim(a.view(), a.view()).is_err());
    }

    #[test]
    fn ssim_window_is_normalized() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
    }

    #[test]
    fn psnr_values() {
        let a = Array2::zeros((10, 10));
        let mut b = Array2::zeros((10, 10));
        b.fill(0.1); // mse 0.01
        assert!((psnr_report(a.view(), b.view(), 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr_report(a.view(), a.view(), 1.0).unwrap(), f64::INFINITY);
        let x = random_image(4);
        let y = random_image(5);
        let m = mse(x.view(), y.view()).unwrap();
        assert!((psnr_report(x.view(), y.view(), 1.0).unwrap() - 10.0 * (1.0 / m).log10()).abs() < 1e-12);
    }

    #[test]
    fn one_pixel_shift_changes_mse() {
        let a = random_image(9);
        let mut shifted = Array2::zeros((28, 28));
        for i in 0..28 {
            for j in 1..28 {
                shifted[[i, j]] = a[[i, j - 1]];
            }
        }
        assert!(mse(a.view(), shifted.view()).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric(s1 in 0u64..10_000, s2 in 0u64..10_000) {
            let a = random_image(s1);
            let b = random_image(s2);
            prop_assert_eq!(ssim(a.view(), b.view()).unwrap(), ssim(b.view(), a.view()).unwrap());
        }
    }
}
