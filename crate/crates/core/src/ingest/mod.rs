//! File formats and observation statistics: rasters with missing pixels,
//! wind records, windroses and coverage maps.

mod coverage;
mod gridfile;
mod wind;

pub use coverage::{coverage_map, CoverageMap};
pub use gridfile::{
    crop_to_square, format_grid, meta_path, parse_grid, parse_grid_str, write_grid, MetaFile,
    GRID_MAGIC, GRID_VERSION,
};
pub use wind::{
    direction_from, mean_wind, parse_timestamp, read_wind_csv, read_wind_csv_from, sector_of,
    windrose, windrose_with, TimeWindow, WindRecord, WindroseConfig, WindroseHistogram,
    DEFAULT_CALM_THRESHOLD, DEFAULT_SPEED_EDGES, SECTORS, SECTOR_WIDTH,
};
