//! Log-domain application of a Gibbs kernel.
//!
//! The solvers keep dual potentials `φ = log u`, `ψ = log v` and need
//! `log(K e^ψ)` and `log(Kᵀ e^φ)`. Three strategies:
//!
//! * separable kernels use an exact log-sum-exp along rows then columns;
//! * dense kernels use a stabilized copy `K̃ᵢⱼ = exp(-Cᵢⱼ/λ + aᵢ + bⱼ)` with
//!   reference potentials `(a, b)` absorbed from the iterates, falling back to
//!   an exact log-sum-exp for any output that underflows;
//! * streaming kernels always take the exact path.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::cost::{dense_matvec, dense_matvec_t, KernelMatrix};

/// Outputs of the stabilized product below this are recomputed exactly.
const UNDERFLOW_GUARD: f64 = 1e-200;

/// Terms this far below the maximum change a log-sum-exp by less than
/// machine precision, even a million of them together.
const NEGLIGIBLE: f64 = -50.0;

/// Largest allowed drift between iterates and the absorbed references.
const ABSORB_THRESHOLD: f64 = 30.0;

enum Mode<'a> {
    Separable {
        /// `-(a-b)²/λ`, n×n.
        log_factor: Vec<f64>,
    },
    Stabilized {
        a_ref: Vec<f64>,
        b_ref: Vec<f64>,
        kt: Cow<'a, [f64]>,
    },
    Exact,
}

pub(crate) struct LogKernel<'a> {
    kernel: &'a KernelMatrix,
    mode: Mode<'a>,
    absorptions: usize,
}

#[inline]
fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// `log Σ exp(terms)`, skipping terms that cannot matter.
#[inline]
fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = terms
        .filter_map(|t| {
            let d = t - max;
            (d > NEGLIGIBLE).then(|| d.exp())
        })
        .sum();
    max + s.ln()
}

impl<'a> LogKernel<'a> {
    pub(crate) fn new(kernel: &'a KernelMatrix) -> Self {
        let n = kernel.n();
        let m = kernel.side();
        let mode = if kernel.is_separable() {
            let lambda = kernel.lambda();
            let mut log_factor = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    let d = a as f64 - b as f64;
                    log_factor[a * n + b] = -(d * d) / lambda;
                }
            }
            Mode::Separable { log_factor }
        } else if let Some(dense) = kernel.dense_entries() {
            Mode::Stabilized {
                a_ref: vec![0.0; m],
                b_ref: vec![0.0; m],
                kt: Cow::Borrowed(dense),
            }
        } else {
            Mode::Exact
        };
        LogKernel {
            kernel,
            mode,
            absorptions: 0,
        }
    }

    #[cfg(test)]
    pub(crate) fn exact(kernel: &'a KernelMatrix) -> Self {
        LogKernel {
            kernel,
            mode: Mode::Exact,
            absorptions: 0,
        }
    }

    #[allow(dead_code)]
    pub(crate) fn absorptions(&self) -> usize {
        self.absorptions
    }

    /// Absorbs the current potentials into the stabilized kernel when forced
    /// or when they drift too far from the references.
    pub(crate) fn stabilize(&mut self, phi: &[f64], psi: &[f64], force: bool) {
        let Mode::Stabilized { a_ref, b_ref, kt } = &mut self.mode else {
            return;
        };
        let drift = |x: &[f64], r: &[f64]| {
            x.iter()
                .zip(r)
                .filter(|(v, _)| v.is_finite())
                .map(|(v, r)| (v - r).abs())
                .fold(0.0, f64::max)
        };
        if !force && drift(phi, a_ref) <= ABSORB_THRESHOLD && drift(psi, b_ref) <= ABSORB_THRESHOLD
        {
            return;
        }
        for (r, &v) in a_ref.iter_mut().zip(phi) {
            *r = finite_or_zero(v);
        }
        for (r, &v) in b_ref.iter_mut().zip(psi) {
            *r = finite_or_zero(v);
        }
        let m = a_ref.len();
        let lambda = self.kernel.lambda();
        let cost = self.kernel.cost();
        let (a_ref, b_ref) = (&*a_ref, &*b_ref);
        let mut fresh = match std::mem::take(kt) {
            Cow::Owned(v) => v,
            Cow::Borrowed(_) => vec![0.0; m * m],
        };
        fresh.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let crow = cost.row(i);
            let ai = a_ref[i];
            for ((k, &c), &bj) in row.iter_mut().zip(crow).zip(b_ref) {
                *k = (ai + bj - c / lambda).exp();
            }
        });
        *kt = Cow::Owned(fresh);
        self.absorptions += 1;
    }

    fn exact_row(&self, i: usize, psi: &[f64]) -> f64 {
        let lambda = self.kernel.lambda();
        let crow = self.kernel.cost().row(i);
        log_sum_exp(crow.iter().zip(psi).map(move |(&c, &p)| p - c / lambda))
    }

    fn exact_col(&self, j: usize, phi: &[f64]) -> f64 {
        let lambda = self.kernel.lambda();
        let cost = self.kernel.cost();
        log_sum_exp(
            phi.iter()
                .enumerate()
                .map(move |(i, &p)| p - cost.get(i, j) / lambda),
        )
    }

    /// `outᵢ = log Σⱼ exp(-Cᵢⱼ/λ + ψⱼ)` for every `i` with `need[i]`; other
    /// entries are left at 0.
    pub(crate) fn lse_rows(&self, psi: &[f64], need: &[bool]) -> Vec<f64> {
        self.apply(psi, need, false)
    }

    /// `outⱼ = log Σᵢ exp(-Cᵢⱼ/λ + φᵢ)`.
    pub(crate) fn lse_cols(&self, phi: &[f64], need: &[bool]) -> Vec<f64> {
        self.apply(phi, need, true)
    }

    fn apply(&self, x: &[f64], need: &[bool], transpose: bool) -> Vec<f64> {
        match &self.mode {
            Mode::Separable { log_factor } => separable_lse(log_factor, self.kernel.n(), x),
            Mode::Stabilized { a_ref, b_ref, kt } => {
                // rows of K̃ carry a_ref, columns carry b_ref
                let (own_ref, other_ref) = if transpose {
                    (b_ref, a_ref)
                } else {
                    (a_ref, b_ref)
                };
                let scaled: Vec<f64> = x
                    .iter()
                    .zip(other_ref.iter())
                    .map(|(&v, &r)| {
                        if v == f64::NEG_INFINITY {
                            0.0
                        } else {
                            (v - r).exp()
                        }
                    })
                    .collect();
                let s = if transpose {
                    dense_matvec_t(kt, &scaled)
                } else {
                    dense_matvec(kt, &scaled)
                };
                s.into_par_iter()
                    .enumerate()
                    .map(|(i, si)| {
                        if !need[i] {
                            0.0
                        } else if si > UNDERFLOW_GUARD && si.is_finite() {
                            si.ln() - own_ref[i]
                        } else if transpose {
                            self.exact_col(i, x)
                        } else {
                            self.exact_row(i, x)
                        }
                    })
                    .collect()
            }
            Mode::Exact => (0..x.len())
                .into_par_iter()
                .map(|i| {
                    if !need[i] {
                        0.0
                    } else if transpose {
                        self.exact_col(i, x)
                    } else {
                        self.exact_row(i, x)
                    }
                })
                .collect(),
        }
    }
}

/// Exact `log((F ⊗ F) e^x)` for an n×n image `x`, where `log_factor` holds
/// `log F`.
fn separable_lse(log_factor: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    // along each image row
    let mut tmp = vec![0.0; n * n];
    tmp.par_chunks_mut(n).enumerate().for_each(|(r, out)| {
        let src = &x[r * n..(r + 1) * n];
        for (c, o) in out.iter_mut().enumerate() {
            let lf = &log_factor[c * n..(c + 1) * n];
            *o = log_sum_exp(lf.iter().zip(src).map(|(a, b)| a + b));
        }
    });
    // then along each image column
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(r, dst)| {
        let lf = &log_factor[r * n..(r + 1) * n];
        for (c, o) in dst.iter_mut().enumerate() {
            *o = log_sum_exp(lf.iter().enumerate().map(|(rp, &a)| a + tmp[rp * n + c]));
        }
    });
    out
}
