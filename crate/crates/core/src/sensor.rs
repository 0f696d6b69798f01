//! Camera model: photon-flux scaling, Poisson shot and dark noise,
//! max-normalized quantization and the peak-over-mean PSNR used as the noise axis.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub bit_depth: u32,
    /// Expected dark counts per pixel per exposure.
    pub dark_var: f64,
    /// Photons per unit of clean intensity.
    pub flux_scale: f64,
    pub rng_seed: u64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { bit_depth: 12, dark_var: 2.0, flux_scale: 1.0, rng_seed: 0 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::Camera(format!("bit depth {} outside [8, 16]", self.bit_depth)));
        }
        if !(self.dark_var >= 0.0 && self.dark_var.is_finite()) {
            return Err(Error::Camera(format!("dark variance {} must be finite and >= 0", self.dark_var)));
        }
        if !(self.flux_scale > 0.0 && self.flux_scale.is_finite()) {
            return Err(Error::Camera(format!("flux scale {} must be finite and > 0", self.flux_scale)));
        }
        Ok(())
    }

    pub fn full_scale(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn with_flux(self, flux_scale: f64) -> Self {
        Self { flux_scale, ..self }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }
}

/// Integer-quantized frame plus the camera settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub data: Array2<u16>,
    pub bit_depth: u32,
    pub flux_scale: f64,
    pub dark_var: f64,
}

impl SensorFrame {
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

/// Mixes a base seed with further words into an independent 64-bit key
/// (splitmix64 finalizer).
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    words.iter().fold(mix(base), |acc, &w| mix(acc ^ mix(w)))
}

fn poisson<R: rand::Rng>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    // rand_distr rejects means whose samples could overflow; such fluxes are
    // far outside any 16-bit camera anyway.
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng),
        Err(_) => mean.round(),
    }
}

/// Shot noise on `flux_scale · clean` plus dark counts, one ChaCha stream per
/// pixel index so each pixel's draw depends only on (seed, index).
pub fn add_noise(clean: ArrayView2<'_, f64>, cam: &CameraModel) -> Result<Array2<f64>> {
    cam.validate()?;
    if let Some(v) = clean.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Image(format!("sensor input {v} must be finite and >= 0")));
    }
    let base = ChaCha8Rng::seed_from_u64(cam.rng_seed);
    let cols = clean.ncols();
    Ok(Array2::from_shape_fn(clean.dim(), |(i, j)| {
        let mut rng = base.clone();
        rng.set_stream((i * cols + j) as u64);
        poisson(cam.flux_scale * clean[[i, j]], &mut rng) + poisson(cam.dark_var, &mut rng)
    }))
}

/// Rescales so the frame maximum maps to `2^L − 1`, rounding to nearest.
pub fn quantize(counts: ArrayView2<'_, f64>, cam: &CameraModel) -> Result<SensorFrame> {
    cam.validate()?;
    if let Some(v) = counts.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Image(format!("counts {v} must be finite and >= 0")));
    }
    let full = f64::from(cam.full_scale());
    let max = counts.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { full / max } else { 0.0 };
    Ok(SensorFrame {
        data: counts.mapv(|v| (v * scale).round().clamp(0.0, full) as u16),
        bit_depth: cam.bit_depth,
        flux_scale: cam.flux_scale,
        dark_var: cam.dark_var,
    })
}

fn max_and_mean(clean: ArrayView2<'_, f64>) -> Result<(f64, f64)> {
    if clean.is_empty() {
        return Err(Error::Image("empty frame".into()));
    }
    if let Some(v) = clean.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Image(format!("sensor input {v} must be finite and >= 0")));
    }
    let max = clean.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Err(Error::Image("PSNR is undefined for an all-zero frame".into()));
    }
    Ok((max, clean.sum() / clean.len() as f64))
}

/// `10·log10(max(s) / (mean(s) + dark))` with `s = flux_scale · clean`.
pub fn psnr(clean: ArrayView2<'_, f64>, cam: &CameraModel) -> Result<f64> {
    cam.validate()?;
    let (max, mean) = max_and_mean(clean)?;
    let f = cam.flux_scale;
    Ok(10.0 * (f * max / (f * mean + cam.dark_var)).log10())
}

/// PSNR in the limit of infinite flux, where dark counts no longer matter.
pub fn dark_free_psnr(clean: ArrayView2<'_, f64>) -> Result<f64> {
    let (max, mean) = max_and_mean(clean)?;
    Ok(10.0 * (max / mean).log10())
}

/// Solves `psnr(clean, flux) = target_db` for the flux at the camera's fixed
/// dark level.
pub fn flux_for_target_psnr(clean: ArrayView2<'_, f64>, target_db: f64, cam: &CameraModel) -> Result<f64> {
    if !(cam.dark_var > 0.0 && cam.dark_var.is_finite()) {
        return Err(Error::Camera("solving for flux needs a positive dark variance".into()));
    }
    if !target_db.is_finite() {
        return Err(Error::Camera(format!("target PSNR {target_db} is not finite")));
    }
    let (max, mean) = max_and_mean(clean)?;
    let t = 10f64.powf(target_db / 10.0);
    let denom = max - t * mean;
    let limit_db = 10.0 * (max / mean).log10();
    if denom <= 0.0 || target_db >= limit_db {
        return Err(Error::UnachievablePsnr { target_db, limit_db });
    }
    Ok(t * cam.dark_var / denom)
}
