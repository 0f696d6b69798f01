//! Binary PGM (P5) output for debug dumps, sensor frames and montages.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Writes an 8-bit P5 image, scaling so the grid maximum maps to 255.
/// Negative values are clamped to 0; an all-zero grid stays black.
pub fn write_pgm8<W: Write>(mut w: W, grid: ArrayView2<'_, f64>) -> Result<()> {
    let (rows, cols) = grid.dim();
    let max = grid.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let bytes: Vec<u8> = grid.iter().map(|&v| (v.max(0.0) * scale).round().min(255.0) as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Writes a 16-bit big-endian P5 image with the given maxval.
pub fn write_pgm16<W: Write>(mut w: W, grid: ArrayView2<'_, u16>, maxval: u16) -> Result<()> {
    let (rows, cols) = grid.dim();
    write!(w, "P5\n{cols} {rows}\n{maxval}\n")?;
    let mut bytes = Vec::with_capacity(grid.len() * 2);
    for &v in grid.iter() {
        bytes.extend_from_slice(&v.min(maxval).to_be_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn save_pgm8(path: &Path, grid: ArrayView2<'_, f64>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    write_pgm8(&mut w, grid)?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn save_pgm16(path: &Path, grid: ArrayView2<'_, u16>, maxval: u16) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    write_pgm16(&mut w, grid, maxval)?;
    w.flush().map_err(|e| Error::file(path, e))
}

/// Tiles equally sized images row-major into a `cols`-wide grid with `gap`
/// pixels of zero between tiles. Missing tiles are left black.
pub fn montage(tiles: &[Array2<f64>], cols: usize, rows: usize, gap: usize) -> Result<Array2<f64>> {
    let Some(first) = tiles.first() else {
        return Err(Error::Image("montage needs at least one tile".into()));
    };
    let (th, tw) = first.dim();
    if tiles.iter().any(|t| t.dim() != (th, tw)) {
        return Err(Error::Image("montage tiles differ in size".into()));
    }
    let height = rows * th + rows.saturating_sub(1) * gap;
    let width = cols * tw + cols.saturating_sub(1) * gap;
    let mut out = Array2::zeros((height, width));
    for (k, tile) in tiles.iter().take(rows * cols).enumerate() {
        let (r, c) = (k / cols, k % cols);
        let (r0, c0) = (r * (th + gap), c * (tw + gap));
        out.slice_mut(ndarray::s![r0..r0 + th, c0..c0 + tw]).assign(tile);
    }
    Ok(out)
}
