//! Binary PPM (P6) rendering of rasters and windroses.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridImage;
use crate::ingest::{WindroseHistogram, SECTORS, SECTOR_WIDTH};

/// Color used for unobserved pixels.
pub const MISSING_RGB: [u8; 3] = [255, 0, 255];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Image {
            width,
            height,
            rgb: rgb.repeat(width * height),
        }
    }

    fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let o = 3 * (y * self.width + x);
            self.rgb[o..o + 3].copy_from_slice(&rgb);
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let o = 3 * (y * self.width + x);
        [self.rgb[o], self.rgb[o + 1], self.rgb[o + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_ppm())?;
        Ok(())
    }
}

/// Grayscale with min-max scaling over observed pixels; each grid pixel
/// becomes a `scale × scale` block. A constant image renders mid-gray.
pub fn render_grid(g: &GridImage, scale: usize) -> Result<Image> {
    if scale == 0 {
        return Err(Error::Config("render scale must be positive".into()));
    }
    let n = g.n();
    let observed = g
        .values()
        .iter()
        .zip(g.mask())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v);
    let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let mut img = Image::filled(n * scale, n * scale, MISSING_RGB);
    for (j, (&v, &m)) in g.values().iter().zip(g.mask()).enumerate() {
        let rgb = if !m {
            MISSING_RGB
        } else if hi > lo {
            let level = ((v - lo) / (hi - lo) * 255.0).round() as u8;
            [level; 3]
        } else {
            [128; 3]
        };
        let (r, c) = (j / n, j % n);
        for y in r * scale..(r + 1) * scale {
            for x in c * scale..(c + 1) * scale {
                img.put(x, y, rgb);
            }
        }
    }
    Ok(img)
}

/// Sector bars radiating from the center, length proportional to frequency
/// relative to the most frequent sector. North is up.
pub fn render_windrose(h: &WindroseHistogram, size: usize) -> Result<Image> {
    if size < 8 {
        return Err(Error::Config(
            "windrose image must be at least 8 pixels".into(),
        ));
    }
    let mut img = Image::filled(size, size, [255; 3]);
    let c = (size as f64 - 1.0) / 2.0;
    let radius = c;
    let max = h.frequencies.iter().cloned().fold(0.0, f64::max);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - c;
            let dy = c - y as f64;
            let r = dx.hypot(dy);
            if r > radius {
                continue;
            }
            let bearing = dx.atan2(dy).to_degrees().rem_euclid(360.0);
            let s = (((bearing + SECTOR_WIDTH / 2.0) / SECTOR_WIDTH).floor() as usize) % SECTORS;
            let reach = if max > 0.0 {
                h.frequencies[s] / max * radius
            } else {
                0.0
            };
            if r <= reach {
                let shade = (40 + 160 * (s % 2)) as u8;
                img.put(x, y, [shade, shade, 255]);
            } else if (r - radius).abs() < 0.75 {
                img.put(x, y, [160; 3]);
            }
        }
    }
    Ok(img)
}
