//! Square raster geometry.
//!
//! Images are n×n and flattened row by row. Flat indices and pixel positions
//! are both 1-based: flat index `j` sits at row `⌈j/n⌉`, column
//! `((j-1) mod n) + 1`. Only differences of positions enter the ground costs,
//! so the origin is irrelevant to every result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optional per-image metadata carried alongside a raster.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    /// ISO-8601 date of the acquisition.
    pub date: Option<String>,
    /// `[lon_min, lat_min, lon_max, lat_max]`.
    pub bbox: Option<[f64; 4]>,
    /// Mean wind `(east, north)` in m/s.
    pub wind: Option<[f64; 2]>,
}

/// An n×n nonnegative raster with a validity mask.
///
/// Masked pixels always hold the value 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GridImage {
    n: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    pub meta: GridMeta,
}

/// 1-based `(row, col)` position of a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PixelPosition {
    pub row: usize,
    pub col: usize,
}

impl PixelPosition {
    /// 1-based flat index of this position on an n×n grid.
    pub fn flat_index(self, n: usize) -> usize {
        (self.row - 1) * n + self.col
    }
}

impl GridImage {
    /// Builds an image from row-major values and a mask. Masked values are
    /// zeroed; observed values must be finite and nonnegative.
    pub fn new(n: usize, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("grid side must be positive".into()));
        }
        let len = n * n;
        if values.len() != len || mask.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} values and mask bits, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        for (i, (v, &m)) in values.iter_mut().zip(&mask).enumerate() {
            if !m {
                *v = 0.0;
            } else if !v.is_finite() || *v < 0.0 {
                let p = pixel_position(i + 1, n)?;
                return Err(Error::Domain(format!(
                    "value {v} at row {}, col {} must be finite and nonnegative",
                    p.row, p.col
                )));
            }
        }
        Ok(GridImage {
            n,
            values,
            mask,
            meta: GridMeta::default(),
        })
    }

    /// Fully observed image.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        GridImage::new(n, values, vec![true; n * n])
    }

    /// Builds an image where `NaN` marks a missing pixel.
    pub fn from_nan_values(n: usize, raw: Vec<f64>) -> Result<Self> {
        let mask: Vec<bool> = raw.iter().map(|v| !v.is_nan()).collect();
        GridImage::new(n, raw, mask)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        GridImage::from_values(n, vec![0.0; n * n])
    }

    pub fn with_meta(mut self, meta: GridMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Value at a 1-based position, `None` when masked.
    pub fn get(&self, pos: PixelPosition) -> Option<f64> {
        let i = pos.flat_index(self.n) - 1;
        self.mask[i].then_some(self.values[i])
    }

    /// Sum of values over observed pixels.
    pub fn total_mass(&self) -> f64 {
        total_mass(self)
    }

    pub fn centroid(&self) -> Result<(f64, f64)> {
        centroid(self)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        unflatten(&self.values, self.n).expect("length is n*n by construction")
    }

    /// Flat index (0-based) of the largest observed value.
    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(_, (_, &m))| m)
            .fold(
                None,
                |best: Option<(usize, f64)>, (i, (&v, _))| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((i, v)),
                },
            )
            .map(|(i, _)| i)
    }
}

/// Maps a 1-based flat index to its row-major pixel position.
pub fn pixel_position(j: usize, n: usize) -> Result<PixelPosition> {
    let len = n * n;
    if j == 0 || j > len {
        return Err(Error::Index { index: j, max: len });
    }
    Ok(PixelPosition {
        row: j.div_ceil(n),
        col: (j - 1) % n + 1,
    })
}

/// Row-major flattening of a square matrix.
pub fn flatten(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let mut out = Vec::with_capacity(n * n);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!(
                "row {} has {} entries, expected {n} (matrix must be square)",
                r + 1,
                row.len()
            )));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

pub fn unflatten(values: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || values.len() != n * n {
        return Err(Error::Shape(format!(
            "cannot unflatten {} values into a {n}x{n} matrix",
            values.len()
        )));
    }
    Ok(values.chunks(n).map(<[f64]>::to_vec).collect())
}

pub fn total_mass(g: &GridImage) -> f64 {
    g.values
        .iter()
        .zip(&g.mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum()
}

/// Mass-weighted mean pixel position `(row, col)`.
pub fn centroid(g: &GridImage) -> Result<(f64, f64)> {
    centroid_of(&g.values, g.n)
}

/// Centroid of a raw row-major vector of nonnegative masses.
pub fn centroid_of(values: &[f64], n: usize) -> Result<(f64, f64)> {
    if values.len() != n * n {
        return Err(Error::Shape(format!(
            "{} values for a {n}x{n} grid",
            values.len()
        )));
    }
    let mut mass = 0.0;
    let mut row = 0.0;
    let mut col = 0.0;
    for (i, &v) in values.iter().enumerate() {
        mass += v;
        row += v * (i / n + 1) as f64;
        col += v * (i % n + 1) as f64;
    }
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::Domain("centroid of an image with zero mass".into()));
    }
    Ok((row / mass, col / mass))
}

/// Grid center in 1-based pixel coordinates.
pub fn grid_center(n: usize) -> (f64, f64) {
    let c = (n as f64 + 1.0) / 2.0;
    (c, c)
}
