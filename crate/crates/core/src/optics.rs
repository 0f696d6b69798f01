//! Coherent forward model of the vortex lenslet camera.
//!
//! Grids are square and row-major. Sample `(row, col)` sits at
//! `x = (col - n/2)·dx`, `y = (row - n/2)·dx` with `dx = extent / n`, so the
//! origin is the sample at index `n/2` along each axis (for even and odd `n`).
//! The focal plane uses the same centering: index `n/2` is zero frequency.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Real 2D grid (intensities, images).
pub type Grid = Array2<f64>;

/// Side length of the dataset images.
pub const IMAGE_N: usize = 28;

/// 2D complex field sampled on a square grid centered on the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    extent: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, extent: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows != cols || rows < 2 {
            return Err(Error::Geometry(format!("field must be square with side >= 2, got {rows}x{cols}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::Geometry(format!("extent must be positive, got {extent}")));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric("field contains non-finite samples".into()));
        }
        Ok(Self { data, extent })
    }

    pub fn from_fn(n: usize, extent: f64, f: impl FnMut((usize, usize)) -> Complex64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), f), extent)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    /// Sum of |value|² over the grid.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> Grid {
        self.data.mapv(|v| v.norm_sqr())
    }

    /// Pointwise product with another field on the same grid.
    pub fn mul(&self, other: &ComplexField) -> Result<ComplexField> {
        if self.n() != other.n() {
            return Err(Error::Dimension { expected: self.n(), got: other.n() });
        }
        let mut data = self.data.clone();
        Zip::from(&mut data).and(&other.data).for_each(|a, &b| *a *= b);
        Ok(ComplexField { data, extent: self.extent })
    }
}

/// Illumination profile in front of the lenslet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beam {
    /// `(1/w)·exp(-(r/w)²)` with waist `w`.
    Gaussian,
    /// Uniform unit illumination (plane wave).
    Flat,
}

impl Beam {
    pub fn name(self) -> &'static str {
        match self {
            Beam::Gaussian => "gaussian",
            Beam::Flat => "flat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Beam::Gaussian),
            "flat" => Some(Beam::Flat),
            _ => None,
        }
    }
}

/// Geometry and physical constants of the simulated optical system.
///
/// All lengths are dimensionless. `f_lambda` may be `f64::INFINITY`, which
/// disables the quadratic lens term of the mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalConfig {
    pub grid_n: usize,
    pub object_n: usize,
    pub extent: f64,
    pub f_lambda: f64,
    pub aperture_a: f64,
    pub waist_w: f64,
    pub alpha0: f64,
    pub beam: Beam,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            grid_n: 128,
            object_n: IMAGE_N,
            extent: 1.0,
            f_lambda: 0.1,
            aperture_a: 0.5,
            waist_w: 0.35,
            alpha0: PI / 2.0,
            beam: Beam::Gaussian,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.grid_n < 2 {
            return bad(format!("grid_n must be >= 2, got {}", self.grid_n));
        }
        if self.object_n == 0 || self.object_n > self.grid_n {
            return bad(format!("object_n must be in 1..=grid_n ({}), got {}", self.grid_n, self.object_n));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad(format!("extent must be positive, got {}", self.extent));
        }
        if self.f_lambda.is_nan() || self.f_lambda <= 0.0 {
            return bad(format!("f_lambda must be positive, got {}", self.f_lambda));
        }
        if self.aperture_a.is_nan() || self.aperture_a <= 0.0 {
            return bad(format!("aperture_a must be positive, got {}", self.aperture_a));
        }
        if !self.alpha0.is_finite() {
            return bad(format!("alpha0 must be finite, got {}", self.alpha0));
        }
        if self.beam == Beam::Gaussian {
            if !(self.waist_w > 0.0 && self.waist_w.is_finite()) {
                return bad(format!("waist_w must be positive, got {}", self.waist_w));
            }
            let half_object = self.object_n as f64 / self.grid_n as f64 * self.extent / 2.0;
            if self.waist_w < half_object {
                return bad(format!("waist_w {} is smaller than the object half-width {half_object}", self.waist_w));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.extent / self.grid_n as f64
    }

    /// Physical coordinates `(x, y)` of grid sample `(row, col)`.
    pub fn coords(&self, row: usize, col: usize) -> (f64, f64) {
        let c = (self.grid_n / 2) as f64;
        let dx = self.dx();
        ((col as f64 - c) * dx, (row as f64 - c) * dx)
    }

    fn polar(&self, row: usize, col: usize) -> (f64, f64) {
        let (x, y) = self.coords(row, col);
        (x.hypot(y), y.atan2(x))
    }

    /// Quadratic lens phase `-π r² / (fλ)`; zero in the `fλ → ∞` limit.
    pub fn lens_phase(&self, r: f64) -> f64 {
        if self.f_lambda.is_infinite() {
            0.0
        } else {
            -PI * r * r / self.f_lambda
        }
    }

    /// First row/column of the centrally embedded object.
    pub fn object_offset(&self) -> usize {
        self.grid_n / 2 - self.object_n / 2
    }
}

/// Topological charge of a vortex; any finite real value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct VortexCharge(pub f64);

impl VortexCharge {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_finite() {
            Ok(Self(m))
        } else {
            Err(Error::Config(format!("topological charge must be finite, got {m}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<i32> for VortexCharge {
    fn from(m: i32) -> Self {
        Self(m as f64)
    }
}

/// Checks that `img` is an `object_n`-square image with values in [0, 1].
pub fn validate_image(img: ArrayView2<'_, f64>, side: usize) -> Result<()> {
    if img.dim() != (side, side) {
        return Err(Error::Image(format!("expected {side}x{side} image, got {}x{}", img.nrows(), img.ncols())));
    }
    if let Some(v) = img.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Image(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Phase-only object `exp(i·α0·X)` embedded in a unit-transmission grid.
pub fn phase_object(img: ArrayView2<'_, f64>, cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    validate_image(img, cfg.object_n)?;
    let off = cfg.object_offset();
    let mut data = Array2::from_elem((cfg.grid_n, cfg.grid_n), Complex64::new(1.0, 0.0));
    data.slice_mut(ndarray::s![off..off + cfg.object_n, off..off + cfg.object_n])
        .zip_mut_with(&img, |d, &x| *d = Complex64::from_polar(1.0, cfg.alpha0 * x));
    ComplexField::new(data, cfg.extent)
}

/// Lenslet mask `exp(-iπr²/(fλ) + i·m·φ)` inside the aperture disk, zero outside.
pub fn vortex_lens_mask(m: VortexCharge, cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    ComplexField::from_fn(cfg.grid_n, cfg.extent, |(row, col)| {
        let (r, phi) = cfg.polar(row, col);
        if r < cfg.aperture_a {
            Complex64::from_polar(1.0, cfg.lens_phase(r) + m.0 * phi)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Illumination amplitude; `(1/w)·exp(-(r/w)²)` for a Gaussian beam.
pub fn gaussian_aperture(cfg: &OpticalConfig) -> Result<ComplexField> {
    cfg.validate()?;
    let w = cfg.waist_w;
    ComplexField::from_fn(cfg.grid_n, cfg.extent, |(row, col)| match cfg.beam {
        Beam::Gaussian => {
            let (r, _) = cfg.polar(row, col);
            Complex64::new((-(r / w).powi(2)).exp() / w, 0.0)
        }
        Beam::Flat => Complex64::new(1.0, 0.0),
    })
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Centered unitary 2D DFT of a square row-major buffer, in place.
pub(crate) fn centered_dft_in_place(data: &mut Array2<Complex64>) {
    let n = data.nrows();
    debug_assert_eq!(n, data.ncols());
    let c = n / 2;
    let fft = plan(n);

    // ifftshift: the origin sample moves to index 0
    let mut buf: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        let si = (i + c) % n;
        for j in 0..n {
            buf.push(data[[si, (j + c) % n]]);
        }
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(&mut buf, &mut scratch);
    let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(&buf, &mut tr, n);
    fft.process_with_scratch(&mut tr, &mut scratch);
    // tr holds the spectrum transposed: tr[kx * n + ky]
    let scale = 1.0 / n as f64;
    for k in 0..n {
        let sk = (k + n - c) % n;
        for l in 0..n {
            data[[k, l]] = tr[((l + n - c) % n) * n + sk] * scale;
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const B: usize = 16;
    for ib in (0..n).step_by(B) {
        for jb in (0..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                for j in jb..(jb + B).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Centered, unitary 2D DFT: zero frequency lands on the grid center and
/// total power is preserved. The output extent is in cycles per unit length.
pub fn propagate_to_focal_plane(field: &ComplexField) -> ComplexField {
    let mut data = field.data.clone();
    centered_dft_in_place(&mut data);
    ComplexField { extent: field.n() as f64 / field.extent, data }
}

/// Back-focal-plane field of a lenslet whose transmitted field is `field`.
///
/// Propagation by `f` behind a lens of phase `-πr²/(fλ)` cancels that phase and
/// leaves a Fourier transform, so the lens term is removed before transforming.
pub fn lens_to_focal_plane(field: &ComplexField, cfg: &OpticalConfig) -> ComplexField {
    let mut data = field.data.clone();
    if cfg.f_lambda.is_finite() {
        for ((row, col), v) in data.indexed_iter_mut() {
            let (r, _) = cfg.polar(row, col);
            *v *= Complex64::from_polar(1.0, -cfg.lens_phase(r));
        }
    }
    centered_dft_in_place(&mut data);
    ComplexField { extent: field.n() as f64 / field.extent, data }
}

/// Precomputed illumination and masks for repeated forward modeling.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    cfg: OpticalConfig,
    beam: ComplexField,
}

impl ForwardModel {
    pub fn new(cfg: &OpticalConfig) -> Result<Self> {
        Ok(Self { cfg: *cfg, beam: gaussian_aperture(cfg)? })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.cfg
    }

    /// Focal-plane intensity of `img` seen through the lenslet `mask`.
    pub fn intensity(&self, img: ArrayView2<'_, f64>, mask: &ComplexField) -> Result<Grid> {
        let field = phase_object(img, &self.cfg)?.mul(&self.beam)?.mul(mask)?;
        Ok(lens_to_focal_plane(&field, &self.cfg).intensity())
    }

    /// Beam times mask with the lens phase already cancelled, ready for
    /// [`ForwardModel::intensity_with_pupil`].
    pub fn pupil(&self, mask: &ComplexField) -> Result<ComplexField> {
        let mut p = self.beam.mul(mask)?;
        if self.cfg.f_lambda.is_finite() {
            for ((row, col), v) in p.data.indexed_iter_mut() {
                let (r, _) = self.cfg.polar(row, col);
                *v *= Complex64::from_polar(1.0, -self.cfg.lens_phase(r));
            }
        }
        Ok(p)
    }

    /// Same result as [`ForwardModel::intensity`] for the mask the pupil was built from.
    pub fn intensity_with_pupil(&self, img: ArrayView2<'_, f64>, pupil: &ComplexField) -> Result<Grid> {
        validate_image(img, self.cfg.object_n)?;
        if pupil.n() != self.cfg.grid_n {
            return Err(Error::Dimension { expected: self.cfg.grid_n, got: pupil.n() });
        }
        let off = self.cfg.object_offset();
        let mut data = pupil.data.clone();
        data.slice_mut(ndarray::s![off..off + self.cfg.object_n, off..off + self.cfg.object_n])
            .zip_mut_with(&img, |d, &x| *d *= Complex64::from_polar(1.0, self.cfg.alpha0 * x));
        centered_dft_in_place(&mut data);
        Ok(data.mapv(|v| v.norm_sqr()))
    }
}

/// Noiseless focal-plane intensity `|F{object · beam · mask(m)}|²`.
pub fn forward_intensity(img: ArrayView2<'_, f64>, m: VortexCharge, cfg: &OpticalConfig) -> Result<Grid> {
    let mask = vortex_lens_mask(m, cfg)?;
    ForwardModel::new(cfg)?.intensity(img, &mask)
}

/// Intensity-weighted mean distance from the grid center, in samples.
pub fn mean_radius(pattern: &Grid) -> f64 {
    let c = (pattern.nrows() / 2) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for ((i, j), &v) in pattern.indexed_iter() {
        num += v * (i as f64 - c).hypot(j as f64 - c);
        den += v;
    }
    num / den
}

/// Compares the two sides of the vortex Fourier-derivative identity for |m| = 1.
///
/// Side A transforms `(x + i·s·y)·h` directly. Side B differentiates the
/// transform of `h`: with `u = fλ·ν` and the `exp(-2πi ν·x)` kernel,
/// `F{(x + i s y) h} = -(fλ/2π)·(s ∂/∂v − i ∂/∂u) F{h}`. Derivatives are
/// fourth-order central differences on a transform grid zero-padded by `pad`
/// (finer frequency sampling). Returns `max|A − B| / max|A|` over the interior.
pub fn derivative_oracle_check(h: &ComplexField, sign_m: i32, f_lambda: f64, pad: usize) -> Result<f64> {
    if sign_m.abs() != 1 {
        return Err(Error::Config(format!("derivative check needs |m| = 1, got {sign_m}")));
    }
    if pad == 0 {
        return Err(Error::Config("pad factor must be >= 1".into()));
    }
    if !(f_lambda > 0.0 && f_lambda.is_finite()) {
        return Err(Error::Config(format!("f_lambda must be finite and positive, got {f_lambda}")));
    }
    let s = sign_m as f64;
    let n = h.n();
    let big = n * pad;
    let dx = h.extent / n as f64;
    let off = big / 2 - n / 2;

    let mut padded = Array2::from_elem((big, big), Complex64::new(0.0, 0.0));
    let mut weighted = padded.clone();
    let cb = (big / 2) as f64;
    for ((i, j), &v) in h.data.indexed_iter() {
        let (pi, pj) = (i + off, j + off);
        let x = (pj as f64 - cb) * dx;
        let y = (pi as f64 - cb) * dx;
        padded[[pi, pj]] = v;
        weighted[[pi, pj]] = v * Complex64::new(x, s * y);
    }
    centered_dft_in_place(&mut padded);
    centered_dft_in_place(&mut weighted);

    // spacing of u = fλ·ν on the padded grid
    let du = f_lambda / (big as f64 * dx);
    let d = |a: Complex64, b: Complex64, c: Complex64, e: Complex64| {
        // f(+1), f(-1), f(+2), f(-2)
        (8.0 * (a - b) - (c - e)) / (12.0 * du)
    };
    let mut max_a: f64 = 0.0;
    let mut max_diff: f64 = 0.0;
    let i = Complex64::new(0.0, 1.0);
    for k in 2..big - 2 {
        for l in 2..big - 2 {
            let dv = d(padded[[k + 1, l]], padded[[k - 1, l]], padded[[k + 2, l]], padded[[k - 2, l]]);
            let du_ = d(padded[[k, l + 1]], padded[[k, l - 1]], padded[[k, l + 2]], padded[[k, l - 2]]);
            let b = -(f_lambda / (2.0 * PI)) * (s * dv - i * du_);
            let a = weighted[[k, l]];
            max_a = max_a.max(a.norm());
            max_diff = max_diff.max((a - b).norm());
        }
    }
    if max_a == 0.0 {
        return Err(Error::Numeric("derivative check: side A vanishes".into()));
    }
    Ok(max_diff / max_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(n, 1.0, |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .unwrap()
    }

    /// Direct double-sum centered unitary DFT.
    fn naive_dft(f: &ComplexField) -> Array2<Complex64> {
        let n = f.n();
        let c = (n / 2) as f64;
        let tw: Vec<Vec<Complex64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|x| Complex64::from_polar(1.0, -2.0 * PI * (k as f64 - c) * (x as f64 - c) / n as f64))
                    .collect()
            })
            .collect();
        Array2::from_shape_fn((n, n), |(k, l)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    acc += f.data()[[i, j]] * tw[k][i] * tw[l][j];
                }
            }
            acc / n as f64
        })
    }

    fn fashion_like(seed: u64) -> Grid {
        // smooth blob with soft edges
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cx, cy) = (rng.random_range(10.0..18.0), rng.random_range(10.0..18.0));
        let (sx, sy) = (rng.random_range(4.0..8.0), rng.random_range(4.0..8.0));
        Array2::from_shape_fn((28, 28), |(i, j)| {
            let d = ((j as f64 - cx) / sx).powi(2) + ((i as f64 - cy) / sy).powi(2);
            (-d).exp()
        })
    }

    #[test]
    fn zero_object_is_unit_field() {
        let cfg = OpticalConfig::default();
        let f = phase_object(Array2::zeros((28, 28)).view(), &cfg).unwrap();
        assert!(f.data().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn full_object_is_i_in_embedding() {
        let cfg = OpticalConfig::default();
        let f = phase_object(Array2::ones((28, 28)).view(), &cfg).unwrap();
        let off = cfg.object_offset();
        for ((i, j), v) in f.data().indexed_iter() {
            let inside = (off..off + 28).contains(&i) && (off..off + 28).contains(&j);
            let want = if inside { Complex64::new(0.0, 1.0) } else { Complex64::new(1.0, 0.0) };
            assert_abs_diff_eq!(v.re, want.re, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, want.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn phase_object_matches_scalar_loop() {
        let cfg = OpticalConfig::default();
        let img = fashion_like(3);
        let f = phase_object(img.view(), &cfg).unwrap();
        let off = cfg.object_offset();
        for i in 0..128 {
            for j in 0..128 {
                let x = if (off..off + 28).contains(&i) && (off..off + 28).contains(&j) {
                    img[[i - off, j - off]]
                } else {
                    0.0
                };
                let want = Complex64::new((cfg.alpha0 * x).cos(), (cfg.alpha0 * x).sin());
                let got = f.data()[[i, j]];
                assert!((got - want).norm() < 1e-14);
                assert!((got.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn phase_object_rejects_bad_images() {
        let cfg = OpticalConfig::default();
        assert!(matches!(phase_object(Array2::zeros((27, 28)).view(), &cfg), Err(Error::Image(_))));
        let mut img = Array2::zeros((28, 28));
        img[[3, 3]] = 1.5;
        assert!(matches!(phase_object(img.view(), &cfg), Err(Error::Image(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = OpticalConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.waist_w = 0.05;
        assert!(cfg.validate().is_err());
        cfg = OpticalConfig { object_n: 200, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = OpticalConfig { f_lambda: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg = OpticalConfig { f_lambda: f64::INFINITY, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn lens_free_m0_mask_is_disk_indicator() {
        let cfg = OpticalConfig { f_lambda: f64::INFINITY, ..Default::default() };
        let mask = vortex_lens_mask(VortexCharge(0.0), &cfg).unwrap();
        for ((i, j), v) in mask.data().indexed_iter() {
            let (x, y) = cfg.coords(i, j);
            let want = if x.hypot(y) < cfg.aperture_a { 1.0 } else { 0.0 };
            assert_eq!(*v, Complex64::new(want, 0.0));
        }
    }

    #[test]
    fn m1_axis_points_step_by_quarter_turn() {
        let cfg = OpticalConfig::default();
        let mask = vortex_lens_mask(VortexCharge(1.0), &cfg).unwrap();
        let c = 64;
        let r0 = 20;
        // (+r0, 0), (0, +r0), (-r0, 0), (0, -r0) in (x, y)
        let pts = [(c, c + r0), (c + r0, c), (c, c - r0), (c - r0, c)];
        let (r, _) = cfg.polar(pts[0].0, pts[0].1);
        let lens = Complex64::from_polar(1.0, -cfg.lens_phase(r));
        let vals: Vec<Complex64> = pts.iter().map(|&(i, j)| mask.data()[[i, j]] * lens).collect();
        for k in 0..4 {
            let ratio = vals[(k + 1) % 4] / vals[k];
            assert!((ratio - Complex64::new(0.0, 1.0)).norm() < 1e-12, "step {k}: {ratio}");
        }
    }

    #[test]
    fn m3_mask_matches_scalar_phase() {
        let cfg = OpticalConfig::default();
        let mask = vortex_lens_mask(VortexCharge(3.0), &cfg).unwrap();
        for i in (0..128).step_by(7) {
            for j in (0..128).step_by(5) {
                let x = (j as f64 - 64.0) / 128.0;
                let y = (i as f64 - 64.0) / 128.0;
                let r = (x * x + y * y).sqrt();
                let v = mask.data()[[i, j]];
                if r >= 0.5 {
                    assert_eq!(v, Complex64::new(0.0, 0.0));
                    continue;
                }
                let want = (-PI * r * r / 0.1 + 3.0 * y.atan2(x)).rem_euclid(2.0 * PI);
                let got = v.arg().rem_euclid(2.0 * PI);
                let diff = (got - want).abs();
                assert!(diff.min(2.0 * PI - diff) < 1e-10);
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_values_and_symmetry() {
        let cfg = OpticalConfig::default();
        let g = gaussian_aperture(&cfg).unwrap();
        let w = cfg.waist_w;
        assert_abs_diff_eq!(g.data()[[64, 64]].re, 1.0 / w, epsilon = 1e-15);
        // r = w is not on the grid; check the closed form at a sampled radius
        let (x, y) = cfg.coords(64, 64 + 45);
        let r = x.hypot(y);
        assert_abs_diff_eq!(g.data()[[64, 109]].re, (-(r / w).powi(2)).exp() / w, epsilon = 1e-15);
        let at_w = (-(w / w).powi(2)).exp() / w;
        assert_abs_diff_eq!(at_w, (-1.0f64).exp() / w, epsilon = 1e-15);
        for i in 1..128 {
            for j in 1..128 {
                assert_eq!(g.data()[[i, j]], g.data()[[128 - i, 128 - j]]);
                assert_eq!(g.data()[[i, j]].im, 0.0);
                assert!(g.data()[[i, j]].re <= g.data()[[64, 64]].re);
            }
        }
    }

    #[test]
    fn delta_transforms_to_flat_spectrum() {
        let n = 128;
        let f = ComplexField::from_fn(n, 1.0, |(i, j)| {
            if i == n / 2 && j == n / 2 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .unwrap();
        let out = propagate_to_focal_plane(&f);
        for v in out.data().iter() {
            assert_abs_diff_eq!(v.re, 1.0 / n as f64, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_transforms_to_center_delta() {
        let n = 64;
        let f = ComplexField::from_fn(n, 1.0, |_| Complex64::new(1.0, 0.0)).unwrap();
        let out = propagate_to_focal_plane(&f);
        for ((i, j), v) in out.data().indexed_iter() {
            let want = if i == n / 2 && j == n / 2 { n as f64 } else { 0.0 };
            assert!((v - Complex64::new(want, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_matches_naive_dft() {
        for (n, seed) in [(64, 1), (15, 2)] {
            let f = random_field(n, seed);
            let fast = propagate_to_focal_plane(&f);
            let slow = naive_dft(&f);
            let err = fast.data().iter().zip(slow.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "n={n}: {err}");
        }
    }

    #[test]
    fn parseval_holds_for_random_fields() {
        for seed in 0..100 {
            let f = random_field(if seed % 2 == 0 { 64 } else { 37 }, seed);
            let out = propagate_to_focal_plane(&f);
            let rel = (out.power() - f.power()).abs() / f.power();
            assert!(rel < 1e-10, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn zero_object_m0_is_central_lobe() {
        let cfg = OpticalConfig::default();
        let p = forward_intensity(Array2::zeros((28, 28)).view(), VortexCharge(0.0), &cfg).unwrap();
        let (imax, _) =
            p.indexed_iter().fold(((0, 0), f64::MIN), |acc, (ij, &v)| if v > acc.1 { (ij, v) } else { acc });
        assert_eq!(imax, (64, 64));
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn vortex_has_central_null() {
        let cfg = OpticalConfig::default();
        for m in [1.0, 2.0, 3.0] {
            let zero = forward_intensity(Array2::zeros((28, 28)).view(), VortexCharge(m), &cfg).unwrap();
            let max = zero.iter().cloned().fold(0.0, f64::max);
            assert!(zero[[64, 64]] < 1e-3 * max, "m={m}");
            let blob = forward_intensity(fashion_like(1).view(), VortexCharge(m), &cfg).unwrap();
            let max = blob.iter().cloned().fold(0.0, f64::max);
            assert!(blob[[64, 64]] < 1e-3 * max, "m={m} blob");
        }
    }

    #[test]
    fn pattern_radius_grows_with_charge() {
        let cfg = OpticalConfig::default();
        let img = fashion_like(5);
        let radii: Vec<f64> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&m| mean_radius(&forward_intensity(img.view(), VortexCharge(m), &cfg).unwrap()))
            .collect();
        assert!(radii[0] < radii[1] && radii[1] < radii[2], "{radii:?}");
    }

    #[test]
    fn total_power_independent_of_charge() {
        let cfg = OpticalConfig::default();
        let img = fashion_like(2);
        let p0: f64 = forward_intensity(img.view(), VortexCharge(0.0), &cfg).unwrap().sum();
        for m in [0.5, 1.0, 2.0, 3.0, 5.0, -4.0] {
            let p: f64 = forward_intensity(img.view(), VortexCharge(m), &cfg).unwrap().sum();
            assert!((p - p0).abs() / p0 < 1e-10, "m={m}");
        }
    }

    #[test]
    fn opposite_charge_is_point_reflection_of_conjugate_object() {
        let cfg = OpticalConfig::default();
        let conj = OpticalConfig { alpha0: -cfg.alpha0, ..cfg };
        let img = fashion_like(3);
        let n = cfg.grid_n;
        for m in [1.0, 3.0, 2.5] {
            let a = forward_intensity(img.view(), VortexCharge(-m), &cfg).unwrap();
            let b = forward_intensity(img.view(), VortexCharge(m), &conj).unwrap();
            let max = a.iter().cloned().fold(0.0, f64::max);
            for ((i, j), &v) in a.indexed_iter() {
                let w = b[[(n - i) % n, (n - j) % n]];
                assert!((v - w).abs() < 1e-9 * max, "m={m} ({i},{j}): {v} vs {w}");
            }
        }
    }

    #[test]
    fn derivative_check_rejects_higher_orders() {
        let cfg = OpticalConfig::default();
        let g = gaussian_aperture(&cfg).unwrap();
        assert!(derivative_oracle_check(&g, 2, 0.1, 1).is_err());
        assert!(derivative_oracle_check(&g, 0, 0.1, 1).is_err());
    }

    #[test]
    fn derivative_check_sign_symmetry() {
        let cfg = OpticalConfig { waist_w: 0.11, ..Default::default() };
        let g = gaussian_aperture(&cfg).unwrap();
        let plus = derivative_oracle_check(&g, 1, cfg.f_lambda, 4).unwrap();
        let minus = derivative_oracle_check(&g, -1, cfg.f_lambda, 4).unwrap();
        assert!(plus < 1e-3 && minus < 1e-3, "{plus} {minus}");
    }
}
