//! IDX3 ingestion, unit normalization, flip augmentation and seeded splits.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optics::IMAGE_N;

pub const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX_HEADER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Validation => "validation",
        }
    }
}

/// Raw images as stored in an IDX3 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

/// Unit-normalized 28×28 images with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub name: String,
    pub split: Split,
    pub images: Vec<Array2<f64>>,
}

impl ImageSet {
    pub fn new(name: impl Into<String>, split: Split, images: Vec<Array2<f64>>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Format("image set is empty".into()));
        }
        for img in &images {
            if img.dim() != (IMAGE_N, IMAGE_N) {
                return Err(Error::Dimension { expected: IMAGE_N * IMAGE_N, got: img.len() });
            }
            if img.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Image("image values must lie in [0, 1]".into()));
            }
        }
        Ok(Self { name: name.into(), split, images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Loads an IDX3 file as a unit-normalized set named after the file stem.
    pub fn from_idx(path: &Path, split: Split) -> Result<Self> {
        let raw = load_idx(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, split, normalize_unit(&raw)?)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<RawImages> {
    if bytes.len() < IDX_HEADER {
        return Err(Error::Truncated { needed: IDX_HEADER, found: bytes.len() });
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4-byte slice"));
    let magic = word(0);
    if magic != IDX3_MAGIC {
        return Err(Error::BadMagic { expected: IDX3_MAGIC, found: magic });
    }
    let (count, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let per = rows * cols;
    let needed = count
        .checked_mul(per)
        .and_then(|n| n.checked_add(IDX_HEADER))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    if bytes.len() < needed {
        return Err(Error::Truncated { needed, found: bytes.len() });
    }
    let pixels = bytes[IDX_HEADER..needed].chunks_exact(per.max(1)).take(count).map(<[u8]>::to_vec).collect();
    Ok(RawImages { rows, cols, pixels })
}

pub fn load_idx(path: &Path) -> Result<RawImages> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    parse_idx(&bytes)
}

pub fn encode_idx(raw: &RawImages) -> Result<Vec<u8>> {
    let per = raw.rows * raw.cols;
    let mut out = Vec::with_capacity(IDX_HEADER + raw.pixels.len() * per);
    for w in [IDX3_MAGIC, raw.pixels.len() as u32, raw.rows as u32, raw.cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for p in &raw.pixels {
        if p.len() != per {
            return Err(Error::Dimension { expected: per, got: p.len() });
        }
        out.extend_from_slice(p);
    }
    Ok(out)
}

pub fn write_idx(path: &Path, raw: &RawImages) -> Result<()> {
    let bytes = encode_idx(raw)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Divides by 255; images must be 28×28.
pub fn normalize_unit(raw: &RawImages) -> Result<Vec<Array2<f64>>> {
    if (raw.rows, raw.cols) != (IMAGE_N, IMAGE_N) {
        return Err(Error::Dimension { expected: IMAGE_N * IMAGE_N, got: raw.rows * raw.cols });
    }
    Ok(raw
        .pixels
        .iter()
        .map(|p| Array2::from_shape_fn((IMAGE_N, IMAGE_N), |(i, j)| f64::from(p[i * IMAGE_N + j]) / 255.0))
        .collect())
}

/// Inverse of [`normalize_unit`] for values on the 1/255 lattice.
pub fn to_raw(images: &[Array2<f64>]) -> RawImages {
    RawImages {
        rows: IMAGE_N,
        cols: IMAGE_N,
        pixels: images
            .iter()
            .map(|img| img.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect())
            .collect(),
    }
}

pub fn flip_horizontal(img: &Array2<f64>) -> Array2<f64> {
    let mut out = img.clone();
    out.invert_axis(Axis(1));
    out.as_standard_layout().into_owned()
}

pub fn flip_vertical(img: &Array2<f64>) -> Array2<f64> {
    let mut out = img.clone();
    out.invert_axis(Axis(0));
    out.as_standard_layout().into_owned()
}

/// Originals, then horizontal flips, vertical flips and double flips.
pub fn flip_augment(set: &ImageSet) -> ImageSet {
    let mut images = Vec::with_capacity(set.len() * 4);
    images.extend(set.images.iter().cloned());
    images.extend(set.images.iter().map(flip_horizontal));
    images.extend(set.images.iter().map(flip_vertical));
    images.extend(set.images.iter().map(|i| flip_vertical(&flip_horizontal(i))));
    ImageSet { name: format!("{}-flip4", set.name), split: set.split, images }
}

/// Disjoint seeded-shuffle subsets of sizes `n_train` and `n_test`.
pub fn split(set: &ImageSet, n_train: usize, n_test: usize, seed: u64) -> Result<(ImageSet, ImageSet)> {
    if n_train + n_test > set.len() {
        return Err(Error::Format(format!("cannot split {} images into {n_train} train and {n_test} test", set.len())));
    }
    if n_train == 0 || n_test == 0 {
        return Err(Error::Format("split sizes must be positive".into()));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |ix: &[usize]| ix.iter().map(|&i| set.images[i].clone()).collect::<Vec<_>>();
    Ok((
        ImageSet { name: set.name.clone(), split: Split::Train, images: pick(&order[..n_train]) },
        ImageSet { name: set.name.clone(), split: Split::Test, images: pick(&order[n_train..n_train + n_test]) },
    ))
}

/// Parses rows of 784 comma-separated uint8 values. Blank lines are skipped.
pub fn parse_csv_images<R: BufRead>(reader: R) -> Result<RawImages> {
    let per = IMAGE_N * IMAGE_N;
    let mut pixels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<u8> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<u8>().map_err(|e| Error::Format(format!("line {}: bad value {f:?}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if row.len() != per {
            return Err(Error::Format(format!("line {}: expected {per} values, found {}", lineno + 1, row.len())));
        }
        pixels.push(row);
    }
    if pixels.is_empty() {
        return Err(Error::Format("CSV contains no images".into()));
    }
    Ok(RawImages { rows: IMAGE_N, cols: IMAGE_N, pixels })
}

/// Converts a CSV of 784-value rows into an IDX3 file; returns the image count.
pub fn convert_csv_to_idx(csv_path: &Path, out: &Path) -> Result<usize> {
    let f = fs::File::open(csv_path).map_err(|e| Error::file(csv_path, e))?;
    let raw = parse_csv_images(BufReader::new(f))?;
    let bytes = encode_idx(&raw)?;
    let mut w = fs::File::create(out).map_err(|e| Error::file(out, e))?;
    w.write_all(&bytes).map_err(|e| Error::file(out, e))?;
    Ok(raw.pixels.len())
}
