use crate::error::{Error, Result};
use crate::grid::GridImage;

/// Per-pixel number of images with a valid observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageMap {
    pub n: usize,
    pub counts: Vec<u32>,
}

impl CoverageMap {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.n) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }
}

/// Counts observations per pixel, optionally clipped at `clip`.
pub fn coverage_map(images: &[GridImage], clip: Option<u32>) -> Result<CoverageMap> {
    let first = images
        .first()
        .ok_or_else(|| Error::Precondition("coverage map of an empty image list".into()))?;
    let n = first.n();
    let mut counts = vec![0u32; n * n];
    for g in images {
        if g.n() != n {
            return Err(Error::Shape(format!("images have sides {n} and {}", g.n())));
        }
        for (c, &m) in counts.iter_mut().zip(g.mask()) {
            *c += u32::from(m);
        }
    }
    if let Some(clip) = clip {
        for c in counts.iter_mut() {
            *c = (*c).min(clip);
        }
    }
    Ok(CoverageMap { n, counts })
}
