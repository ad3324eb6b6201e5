//! Ground costs between pixels and their Gibbs kernels.
//!
//! `C[i][j]` is the cost of moving a unit of mass from source pixel `j` to
//! destination pixel `i`. Displacements are measured destination minus
//! source in `(east, north)` pixel units: east is increasing column, north is
//! decreasing row.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on any cost entry. Wasserstein–Fisher–Rao costs diverge at
/// distance `πδ` and are clamped here; their kernel entries underflow to 0.
pub const WFR_COST_CAP: f64 = 1e6;

/// Rows of a dense matrix processed per parallel task in streaming mode.
const ROW_BLOCK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    /// Squared Euclidean distance.
    Euclidean,
    /// `-log(cos²(min(d / 2δ, π/2)))`, capped at [`WFR_COST_CAP`].
    Wfr { delta: f64 },
    /// `(d² - t⟨w, d⟩)₊` with `wind` in `(east, north)` pixel units.
    WindBiased { wind: [f64; 2], t: f64 },
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostSpec::Euclidean => Ok(()),
            CostSpec::Wfr { delta } if delta > 0.0 && delta.is_finite() => Ok(()),
            CostSpec::Wfr { delta } => Err(Error::Config(format!(
                "WFR delta must be positive and finite, got {delta}"
            ))),
            CostSpec::WindBiased { wind, t } => {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!(
                        "wind scaling t must be positive and finite, got {t}"
                    )));
                }
                if !wind.iter().all(|w| w.is_finite()) {
                    return Err(Error::Config(format!("wind vector {wind:?} is not finite")));
                }
                Ok(())
            }
        }
    }

    /// Cost of a displacement `(d_east, d_north)` from source to destination.
    pub fn eval(&self, d_east: f64, d_north: f64) -> f64 {
        let sq = d_east * d_east + d_north * d_north;
        match *self {
            CostSpec::Euclidean => sq,
            CostSpec::Wfr { delta } => {
                let arg = sq.sqrt() / (2.0 * delta);
                if arg >= FRAC_PI_2 {
                    WFR_COST_CAP
                } else {
                    (-2.0 * arg.cos().ln()).min(WFR_COST_CAP)
                }
            }
            CostSpec::WindBiased { wind, t } => {
                (sq - t * (wind[0] * d_east + wind[1] * d_north)).max(0.0)
            }
        }
    }

    /// Cost from source pixel `j` to destination pixel `i` (0-based flat
    /// indices on an n×n grid).
    pub fn eval_pixels(&self, i: usize, j: usize, n: usize) -> f64 {
        let (ri, ci) = (i / n, i % n);
        let (rj, cj) = (j / n, j % n);
        let d_east = ci as f64 - cj as f64;
        let d_north = rj as f64 - ri as f64;
        self.eval(d_east, d_north)
    }

    pub fn is_separable(&self) -> bool {
        matches!(self, CostSpec::Euclidean)
    }

    pub fn is_symmetric(&self) -> bool {
        match *self {
            CostSpec::Euclidean | CostSpec::Wfr { .. } => true,
            CostSpec::WindBiased { wind, .. } => wind == [0.0, 0.0],
        }
    }
}

/// Byte budget for dense n²×n² matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryBudget {
    pub bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget {
            bytes: 8 * 1024 * 1024 * 1024,
        }
    }
}

impl MemoryBudget {
    pub fn from_gib(gib: f64) -> Self {
        MemoryBudget {
            bytes: (gib * 1024.0 * 1024.0 * 1024.0) as u64,
        }
    }

    /// Bytes for one dense f64 matrix over an n×n grid.
    pub fn dense_bytes(n: usize) -> u64 {
        let side = (n * n) as u64;
        side.saturating_mul(side).saturating_mul(8)
    }

    /// Largest grid side whose dense matrix fits in `matrices` copies.
    pub fn max_side(&self, matrices: u64) -> usize {
        let per = self.bytes / (8 * matrices.max(1));
        let mut n = (per as f64).powf(0.25) as usize;
        while n > 0 && MemoryBudget::dense_bytes(n) * matrices > self.bytes {
            n -= 1;
        }
        while MemoryBudget::dense_bytes(n + 1) * matrices <= self.bytes {
            n += 1;
        }
        n
    }

    fn check(&self, n: usize) -> Result<()> {
        let required = MemoryBudget::dense_bytes(n);
        if required > self.bytes {
            return Err(Error::Capacity {
                n,
                side: n * n,
                required,
                budget: self.bytes,
                suggested_n: self.max_side(1),
            });
        }
        Ok(())
    }
}

/// Dense row-major cost matrix over an n×n grid.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    n: usize,
    spec: CostSpec,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Matrix side, n².
    pub fn side(&self) -> usize {
        self.n * self.n
    }

    pub fn spec(&self) -> CostSpec {
        self.spec
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Entry for destination `i`, source `j` (0-based).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.side() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.side();
        &self.entries[i * m..(i + 1) * m]
    }

    pub fn is_symmetric(&self) -> bool {
        self.spec.is_symmetric()
    }

    /// Median of the strictly positive entries, `None` if there are none.
    pub fn median_nonzero(&self) -> Option<f64> {
        let mut nz: Vec<f64> = self.entries.iter().copied().filter(|&c| c > 0.0).collect();
        if nz.is_empty() {
            return None;
        }
        let mid = nz.len() / 2;
        let (_, m, _) = nz.select_nth_unstable_by(mid, f64::total_cmp);
        Some(*m)
    }
}

pub fn build_cost(spec: CostSpec, n: usize) -> Result<CostMatrix> {
    build_cost_with_budget(spec, n, MemoryBudget::default())
}

pub fn build_cost_with_budget(
    spec: CostSpec,
    n: usize,
    budget: MemoryBudget,
) -> Result<CostMatrix> {
    if n == 0 {
        return Err(Error::Config("grid side must be positive".into()));
    }
    spec.validate()?;
    budget.check(n)?;
    let m = n * n;
    let mut entries = vec![0.0; m * m];
    entries.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, c) in row.iter_mut().enumerate() {
            *c = spec.eval_pixels(i, j, n);
        }
    });
    Ok(CostMatrix { n, spec, entries })
}

#[derive(Clone, Debug)]
enum KernelStorage {
    Dense(Vec<f64>),
    /// n×n factor `exp(-(a-b)²/λ)`; the full kernel is its Kronecker square.
    Separable(Vec<f64>),
    /// Entries are recomputed from the cost in row blocks on every product.
    Streaming,
}

/// Gibbs kernel `exp(-C/λ)`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    cost: Arc<CostMatrix>,
    lambda: f64,
    storage: KernelStorage,
}

pub fn kernel_from_cost(cost: impl Into<Arc<CostMatrix>>, lambda: f64) -> Result<KernelMatrix> {
    kernel_from_cost_with_budget(cost, lambda, MemoryBudget::default())
}

/// Builds the kernel, falling back to streaming products when a dense copy
/// would push cost plus kernel past `budget`.
pub fn kernel_from_cost_with_budget(
    cost: impl Into<Arc<CostMatrix>>,
    lambda: f64,
    budget: MemoryBudget,
) -> Result<KernelMatrix> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    let cost = cost.into();
    let n = cost.n();
    let storage = if cost.spec().is_separable() {
        let mut f = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let d = a as f64 - b as f64;
                f[a * n + b] = (-(d * d) / lambda).exp();
            }
        }
        KernelStorage::Separable(f)
    } else if MemoryBudget::dense_bytes(n).saturating_mul(2) <= budget.bytes {
        let dense = cost
            .entries()
            .par_iter()
            .map(|c| (-c / lambda).exp())
            .collect();
        KernelStorage::Dense(dense)
    } else {
        KernelStorage::Streaming
    };
    Ok(KernelMatrix {
        cost,
        lambda,
        storage,
    })
}

impl KernelMatrix {
    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn cost_arc(&self) -> &Arc<CostMatrix> {
        &self.cost
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.cost.n()
    }

    pub fn side(&self) -> usize {
        self.cost.side()
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.storage, KernelStorage::Separable(_))
    }

    pub fn is_streaming(&self) -> bool {
        matches!(self.storage, KernelStorage::Streaming)
    }

    pub(crate) fn dense_entries(&self) -> Option<&[f64]> {
        match &self.storage {
            KernelStorage::Dense(k) => Some(k),
            _ => None,
        }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            KernelStorage::Dense(k) => k[i * self.side() + j],
            _ => (-self.cost.get(i, j) / self.lambda).exp(),
        }
    }

    /// `K v`, using the fastest available representation.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(match &self.storage {
            KernelStorage::Dense(k) => dense_matvec(k, v),
            KernelStorage::Separable(f) => separable_matvec(f, self.n(), v),
            KernelStorage::Streaming => self.rowwise(v, false),
        })
    }

    /// `Kᵀ v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(match &self.storage {
            KernelStorage::Dense(k) => dense_matvec_t(k, v),
            // the Euclidean kernel is symmetric
            KernelStorage::Separable(f) => separable_matvec(f, self.n(), v),
            KernelStorage::Streaming => self.rowwise(v, true),
        })
    }

    /// Reference product computed entry by entry from the cost matrix.
    pub fn apply_rowwise(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        Ok(self.rowwise(v, false))
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.side() {
            return Err(Error::Shape(format!(
                "vector of length {} applied to a {}x{} kernel",
                v.len(),
                self.side(),
                self.side()
            )));
        }
        Ok(())
    }

    fn rowwise(&self, v: &[f64], transpose: bool) -> Vec<f64> {
        let m = self.side();
        let lambda = self.lambda;
        let cost = &self.cost;
        let mut out = vec![0.0; m];
        out.par_chunks_mut(ROW_BLOCK)
            .enumerate()
            .for_each(|(b, block)| {
                for (r, o) in block.iter_mut().enumerate() {
                    let i = b * ROW_BLOCK + r;
                    *o = (0..m)
                        .map(|j| {
                            let c = if transpose {
                                cost.get(j, i)
                            } else {
                                cost.get(i, j)
                            };
                            (-c / lambda).exp() * v[j]
                        })
                        .sum();
                }
            });
        out
    }
}

/// Free-function form of [`KernelMatrix::apply`].
pub fn apply_kernel(k: &KernelMatrix, v: &[f64]) -> Result<Vec<f64>> {
    k.apply(v)
}

pub(crate) fn dense_matvec(k: &[f64], v: &[f64]) -> Vec<f64> {
    let m = v.len();
    k.par_chunks(m)
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn dense_matvec_t(k: &[f64], v: &[f64]) -> Vec<f64> {
    let m = v.len();
    let mut out = vec![0.0; m];
    out.par_chunks_mut(ROW_BLOCK)
        .enumerate()
        .for_each(|(b, block)| {
            let j0 = b * ROW_BLOCK;
            for (i, &vi) in v.iter().enumerate() {
                if vi == 0.0 {
                    continue;
                }
                let row = &k[i * m + j0..i * m + j0 + block.len()];
                for (o, &kij) in block.iter_mut().zip(row) {
                    *o += kij * vi;
                }
            }
        });
    out
}

/// `(F ⊗ F) v` with `v` viewed as an n×n image: filter along rows, then
/// along columns.
fn separable_matvec(f: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    let mut tmp = vec![0.0; n * n];
    for r in 0..n {
        let src = &v[r * n..(r + 1) * n];
        for c in 0..n {
            let fr = &f[c * n..(c + 1) * n];
            tmp[r * n + c] = fr.iter().zip(src).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        let fr = &f[r * n..(r + 1) * n];
        for (rp, &w) in fr.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let src = &tmp[rp * n..(rp + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
    out
}
