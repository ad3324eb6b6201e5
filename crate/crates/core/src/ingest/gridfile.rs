//! Text raster format.
//!
//! ```text
//! XCH4-GRID v1 3
//! 1.0,2.5,NaN
//! 0.0,1.0,1.0
//! 3.0,NaN,0.25
//! ```
//!
//! Values are row-major, `NaN` marks a missing pixel. Metadata lives in a
//! sidecar `<name>.meta.json`:
//! `{"date": ..., "bbox": [lon_min, lat_min, lon_max, lat_max], "wind_uv": [u, v]}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridImage, GridMeta};

pub const GRID_MAGIC: &str = "XCH4-GRID";
pub const GRID_VERSION: &str = "v1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaFile {
    pub date: Option<String>,
    pub bbox: Option<[f64; 4]>,
    pub wind_uv: Option<[f64; 2]>,
}

impl From<&GridMeta> for MetaFile {
    fn from(m: &GridMeta) -> Self {
        MetaFile {
            date: m.date.clone(),
            bbox: m.bbox,
            wind_uv: m.wind,
        }
    }
}

impl From<MetaFile> for GridMeta {
    fn from(m: MetaFile) -> Self {
        GridMeta {
            date: m.date,
            bbox: m.bbox,
            wind: m.wind_uv,
        }
    }
}

/// Sidecar path: `frame.grid` → `frame.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn format_grid(g: &GridImage) -> String {
    let n = g.n();
    let mut out = format!("{GRID_MAGIC} {GRID_VERSION} {n}\n");
    for (row_v, row_m) in g.values().chunks(n).zip(g.mask().chunks(n)) {
        for (c, (v, &m)) in row_v.iter().zip(row_m).enumerate() {
            if c > 0 {
                out.push(',');
            }
            if m {
                write!(out, "{v:?}").expect("writing to a String");
            } else {
                out.push_str("NaN");
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_grid_str(text: &str) -> Result<GridImage> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, None, "empty file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(GRID_MAGIC) {
        return Err(Error::parse(
            1,
            None,
            format!("expected magic '{GRID_MAGIC}'"),
        ));
    }
    match parts.next() {
        Some(GRID_VERSION) => {}
        other => {
            return Err(Error::parse(
                1,
                None,
                format!(
                    "unsupported version {:?}, expected {GRID_VERSION}",
                    other.unwrap_or("")
                ),
            ))
        }
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::parse(1, None, "missing or invalid grid side"))?;
    if parts.next().is_some() {
        return Err(Error::parse(1, None, "trailing tokens in header"));
    }

    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        if rows > n {
            return Err(Error::parse(
                line_no,
                None,
                format!("more than {n} data rows"),
            ));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(Error::parse(
                line_no,
                None,
                format!("row {rows} has {} values, expected {n}", fields.len()),
            ));
        }
        for (c, field) in fields.iter().enumerate() {
            let field = field.trim();
            let v = if field == "NaN" {
                f64::NAN
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    Error::parse(
                        line_no,
                        Some(c + 1),
                        format!("row {rows}, col {}: invalid number '{field}'", c + 1),
                    )
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::parse(
                        line_no,
                        Some(c + 1),
                        format!(
                            "row {rows}, col {}: value {field} must be finite and nonnegative",
                            c + 1
                        ),
                    ));
                }
                v
            };
            values.push(v);
        }
    }
    if rows != n {
        return Err(Error::parse(
            rows + 1,
            None,
            format!("expected {n} data rows, found {rows}"),
        ));
    }
    GridImage::from_nan_values(n, values)
}

/// Reads a grid and, when present, its sidecar metadata.
pub fn parse_grid(path: impl AsRef<Path>) -> Result<GridImage> {
    let path = path.as_ref();
    let g = parse_grid_str(&fs::read_to_string(path)?)?;
    let sidecar = meta_path(path);
    if sidecar.exists() {
        let meta: MetaFile = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
        Ok(g.with_meta(meta.into()))
    } else {
        Ok(g)
    }
}

/// Writes the grid and its sidecar.
pub fn write_grid(g: &GridImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_grid(g))?;
    let meta = serde_json::to_string_pretty(&MetaFile::from(&g.meta))?;
    fs::write(meta_path(path), meta + "\n")?;
    Ok(())
}

/// Crops a `rows × cols` raster (row-major, `NaN` = missing) to its largest
/// centered square.
pub fn crop_to_square(rows: usize, cols: usize, values: &[f64]) -> Result<GridImage> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} values for a {rows}x{cols} raster",
            values.len()
        )));
    }
    let n = rows.min(cols);
    let r0 = (rows - n) / 2;
    let c0 = (cols - n) / 2;
    let cropped = (r0..r0 + n)
        .flat_map(|r| values[r * cols + c0..r * cols + c0 + n].iter().copied())
        .collect();
    GridImage::from_nan_values(n, cropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_missing_pixel() {
        let g = parse_grid_str("XCH4-GRID v1 2\n1.5,NaN\n2.0,0.5\n").unwrap();
        assert_eq!(g.observed_count(), 3);
        assert_eq!(g.total_mass(), 4.0);
        assert_eq!(g.mask(), &[true, false, true, true]);
    }

    #[test]
    fn negative_value_names_row_and_col() {
        let err = parse_grid_str("XCH4-GRID v1 2\n1.0,2.0\n3.0,-1.0\n").unwrap_err();
        match err {
            Error::Parse { line, col, msg } => {
                assert_eq!((line, col), (3, Some(2)));
                assert!(msg.contains("row 2, col 2"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_files() {
        for bad in [
            "",
            "XCH4 v1 2\n1,2\n3,4\n",
            "XCH4-GRID v2 2\n1,2\n3,4\n",
            "XCH4-GRID v1 0\n",
            "XCH4-GRID v1 2\n1,2\n3\n",
            "XCH4-GRID v1 2\n1,2\n",
            "XCH4-GRID v1 2\n1,2\n3,4\n5,6\n",
            "XCH4-GRID v1 2\n1,x\n3,4\n",
            "XCH4-GRID v1 1\ninf\n",
        ] {
            assert!(
                matches!(parse_grid_str(bad), Err(Error::Parse { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn format_is_stable() {
        let g = GridImage::from_nan_values(2, vec![1.0, f64::NAN, 0.1, 1e-7]).unwrap();
        let text = format_grid(&g);
        assert_eq!(text, "XCH4-GRID v1 2\n1.0,NaN\n0.1,1e-7\n");
        assert_eq!(format_grid(&parse_grid_str(&text).unwrap()), text);
    }

    #[test]
    fn crop_is_centered() {
        // 2x4 raster keeps the middle two columns
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, f64::NAN, 8.0];
        let g = crop_to_square(2, 4, &v).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.values(), &[2.0, 3.0, 6.0, 0.0]);
        assert_eq!(g.mask(), &[true, true, true, false]);
        assert!(crop_to_square(2, 4, &v[..7]).is_err());
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("day.grid");
        let g = GridImage::from_nan_values(2, vec![1.0, f64::NAN, 2.0, 3.0])
            .unwrap()
            .with_meta(GridMeta {
                date: Some("2019-06-01".into()),
                bbox: Some([-81.0, 39.0, -79.0, 41.0]),
                wind: Some([3.5, -1.25]),
            });
        write_grid(&g, &path).unwrap();
        assert!(dir.path().join("day.meta.json").exists());
        assert_eq!(parse_grid(&path).unwrap(), g);
    }
}
