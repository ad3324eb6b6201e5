//! Synthetic plume sequences: isotropic Gaussian clouds whose mean rotates
//! around the grid center or drifts away from it.

use std::f64::consts::TAU;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{grid_center, GridImage, GridMeta};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Mean at `center + R (cos θ_k, sin θ_k)` with `θ_k = 2πk/N`.
    Rotate { radius: f64 },
    /// Mean at `center + k · step · direction`; `direction` is `(east, north)`.
    Drift { step: f64, direction: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub frames: usize,
    pub kind: ScenarioKind,
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    /// Total mass of every frame.
    pub amplitude: f64,
    pub seed: u64,
    /// Std of additive noise relative to the frame peak; 0 is noiseless.
    pub noise: f64,
    /// Constant wind `(east, north)` in m/s written to every frame.
    pub wind: Option<[f64; 2]>,
}

impl ScenarioSpec {
    pub fn rotate(n: usize, frames: usize, radius: f64) -> Self {
        ScenarioSpec::with_kind(n, frames, ScenarioKind::Rotate { radius })
    }

    pub fn drift(n: usize, frames: usize, step: f64, direction: [f64; 2]) -> Self {
        ScenarioSpec::with_kind(n, frames, ScenarioKind::Drift { step, direction })
    }

    fn with_kind(n: usize, frames: usize, kind: ScenarioKind) -> Self {
        ScenarioSpec {
            n,
            frames,
            kind,
            sigma: 1.0,
            amplitude: 1.0,
            seed: 0,
            noise: 0.0,
            wind: None,
        }
    }

    pub fn with_wind(mut self, wind: [f64; 2]) -> Self {
        self.wind = Some(wind);
        self
    }

    /// Frame means as 1-based `(row, col)`.
    pub fn means(&self) -> Result<Vec<(f64, f64)>> {
        if self.n == 0 || self.frames == 0 {
            return Err(Error::Precondition(
                "grid side and frame count must be positive".into(),
            ));
        }
        if !(self.sigma > 0.0 && self.amplitude > 0.0 && self.noise >= 0.0) {
            return Err(Error::Precondition(
                "sigma and amplitude must be positive, noise nonnegative".into(),
            ));
        }
        let (rc, cc) = grid_center(self.n);
        let offsets: Vec<[f64; 2]> = match self.kind {
            ScenarioKind::Rotate { radius } => {
                if !(radius >= 0.0 && radius < self.n as f64 / 2.0) {
                    return Err(Error::Precondition(format!(
                        "rotation radius {radius} must be below n/2 = {}",
                        self.n as f64 / 2.0
                    )));
                }
                (0..self.frames)
                    .map(|k| {
                        let theta = TAU * k as f64 / self.frames as f64;
                        [radius * theta.cos(), radius * theta.sin()]
                    })
                    .collect()
            }
            ScenarioKind::Drift { step, direction } => {
                let norm = direction[0].hypot(direction[1]);
                if !(norm > 0.0 && norm.is_finite() && step.is_finite()) {
                    return Err(Error::Precondition(
                        "drift direction must be a nonzero finite vector".into(),
                    ));
                }
                let d = [direction[0] / norm, direction[1] / norm];
                (0..self.frames)
                    .map(|k| [k as f64 * step * d[0], k as f64 * step * d[1]])
                    .collect()
            }
        };
        let hi = self.n as f64;
        offsets
            .into_iter()
            .enumerate()
            .map(|(k, [east, north])| {
                let (row, col) = (rc - north, cc + east);
                if (1.0..=hi).contains(&row) && (1.0..=hi).contains(&col) {
                    Ok((row, col))
                } else {
                    Err(Error::Precondition(format!(
                        "frame {k} mean ({row:.2}, {col:.2}) leaves the {0}x{0} grid",
                        self.n
                    )))
                }
            })
            .collect()
    }
}

/// Rasterizes every frame of the scenario at pixel centers.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<GridImage>> {
    let means = spec.means()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let two_var = 2.0 * spec.sigma * spec.sigma;

    means
        .iter()
        .enumerate()
        .map(|(k, &(mr, mc))| {
            let mut values: Vec<f64> = (0..n * n)
                .map(|i| {
                    let dr = (i / n + 1) as f64 - mr;
                    let dc = (i % n + 1) as f64 - mc;
                    (-(dr * dr + dc * dc) / two_var).exp()
                })
                .collect();
            if spec.noise > 0.0 {
                let peak = values.iter().cloned().fold(0.0, f64::max);
                for v in values.iter_mut() {
                    *v = (*v + spec.noise * peak * noise.sample(&mut rng)).max(0.0);
                }
            }
            let mass: f64 = values.iter().sum();
            if mass.is_nan() || mass <= 0.0 {
                return Err(Error::Domain(format!("frame {k} has no mass on the grid")));
            }
            for v in values.iter_mut() {
                *v *= spec.amplitude / mass;
            }
            let date = start
                .checked_add_days(Days::new(k as u64))
                .map(|d| d.format("%Y-%m-%d").to_string());
            Ok(GridImage::from_values(n, values)?.with_meta(GridMeta {
                date,
                bbox: None,
                wind: spec.wind,
            }))
        })
        .collect()
}

/// Per-pixel mean over the images that observe it. Pixels observed by no
/// image are masked in the result.
pub fn arithmetic_mean(images: &[GridImage]) -> Result<GridImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("arithmetic mean of an empty image list".into()))?;
    let n = first.n();
    let mut sum = vec![0.0; n * n];
    let mut count = vec![0u32; n * n];
    for g in images {
        if g.n() != n {
            return Err(Error::Shape(format!("images have sides {n} and {}", g.n())));
        }
        for (i, (&v, &m)) in g.values().iter().zip(g.mask()).enumerate() {
            if m {
                sum[i] += v;
                count[i] += 1;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mask = count.iter().map(|&c| c > 0).collect();
    GridImage::new(n, values, mask)
}
