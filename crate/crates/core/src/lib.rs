//! Unbalanced optimal-transport barycenters of gridded methane retrievals.
//!
//! Images are `n × n` rasters with a validity mask. Costs compare pixels by
//! plain squared distance, by a Wasserstein-Fisher-Rao style cost, or by a
//! squared distance biased along the mean wind. [`ot::barycenter`] combines a
//! sequence of images into a single consensus image.

pub mod cost;
mod error;
pub mod grid;
pub mod ingest;
pub mod ot;
pub mod render;
pub mod synthetic;

pub use cost::{build_cost, kernel_from_cost, CostMatrix, CostSpec, KernelMatrix, MemoryBudget};
pub use error::{Error, Result};
pub use grid::{GridImage, GridMeta, PixelPosition};
pub use ot::{
    barycenter, sinkhorn_balanced, sinkhorn_unbalanced, BarycenterResult, SolverConfig,
    TransportResult,
};
