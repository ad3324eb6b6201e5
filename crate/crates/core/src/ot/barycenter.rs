use std::borrow::Borrow;

use rayon::prelude::*;

use super::logkernel::LogKernel;
use super::sinkhorn::{ln_all, log_change, plan_stats, scaling_update, sup_gap};
use super::{BarycenterResult, SolverConfig, TransportResult};
use crate::cost::KernelMatrix;
use crate::error::{Error, Result};
use crate::grid::GridImage;

pub fn uniform_weights(count: usize) -> Vec<f64> {
    vec![1.0 / count as f64; count]
}

struct ImageState<'a> {
    op: LogKernel<'a>,
    log_data: Vec<f64>,
    need: Vec<bool>,
    phi: Vec<f64>,
    psi: Vec<f64>,
    /// `log(K'ᵀ u)` from the latest sweep.
    lse_t: Vec<f64>,
}

/// Unbalanced barycenter of `images`, each with its own kernel.
///
/// Every image keeps its own scalings `(u_k, v_k)`. A sweep updates
/// `u_k ← (g_k ⊘ K'_k v_k)^f`, then sets the barycenter to the weighted power
/// mean `ḡ = (Σ_k w_k (K'_kᵀ u_k)^{1-f})^{1/(1-f)}` and
/// `v_k ← (ḡ ⊘ K'_kᵀ u_k)^f`. As `λ_u → ∞` the power mean tends to the
/// weighted geometric mean. Iteration stops when the sup-norm change of
/// `log ḡ` drops below `tol`.
///
/// Masked pixels enter as zeros of their image.
pub fn barycenter<K>(
    images: &[GridImage],
    kernels: &[K],
    weights: &[f64],
    cfg: &SolverConfig,
) -> Result<BarycenterResult>
where
    K: Borrow<KernelMatrix> + Sync,
{
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Precondition(
            "barycenter of an empty image list".into(),
        ));
    }
    let n = images[0].n();
    if let Some(g) = images.iter().find(|g| g.n() != n) {
        return Err(Error::Shape(format!("images have sides {n} and {}", g.n())));
    }
    if kernels.len() != images.len() || weights.len() != images.len() {
        return Err(Error::Shape(format!(
            "{} images, {} kernels, {} weights",
            images.len(),
            kernels.len(),
            weights.len()
        )));
    }
    for k in kernels {
        let k = k.borrow();
        if k.n() != n {
            return Err(Error::Shape(format!(
                "kernel for side {} used on side {n}",
                k.n()
            )));
        }
        cfg.check_kernel(k)?;
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::Precondition("weights must be nonnegative".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "weights sum to {wsum}, expected 1"
        )));
    }

    let m = n * n;
    let balanced = cfg.lambda_u.is_infinite();
    let f = cfg.exponent();
    let power = 1.0 - f;
    let shift = if balanced { 0.0 } else { -1.0 };
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let all = vec![true; m];

    let mut states: Vec<ImageState<'_>> = images
        .iter()
        .zip(kernels)
        .map(|(g, k)| {
            let log_data = ln_all(g.values());
            ImageState {
                op: LogKernel::new(k.borrow()),
                need: g.values().iter().map(|&v| v > 0.0).collect(),
                phi: log_data
                    .iter()
                    .map(|&l| if l.is_finite() { 0.0 } else { l })
                    .collect(),
                psi: vec![0.0; m],
                lse_t: vec![0.0; m],
                log_data,
            }
        })
        .collect();

    let mut log_g = vec![f64::NAN; m];
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    for it in 0..cfg.max_iters {
        let force = it > 0 && it % cfg.stabilize_every == 0;
        states.par_iter_mut().for_each(|s| {
            s.op.stabilize(&s.phi, &s.psi, force);
            let lse = s.op.lse_rows(&s.psi, &s.need);
            for ((phi, &ld), &l) in s.phi.iter_mut().zip(&s.log_data).zip(&lse) {
                *phi = scaling_update(ld, l + shift, f);
            }
            s.op.stabilize(&s.phi, &s.psi, false);
            s.lse_t = s.op.lse_cols(&s.phi, &all);
            for v in s.lse_t.iter_mut() {
                *v += shift;
            }
        });

        // fixed reduction order over images keeps the result reproducible
        let log_g_new: Vec<f64> = (0..m)
            .map(|j| {
                if balanced {
                    states
                        .iter()
                        .zip(weights)
                        .filter(|(_, &w)| w > 0.0)
                        .map(|(s, &w)| w * s.lse_t[j])
                        .sum()
                } else {
                    let terms = states
                        .iter()
                        .zip(&log_w)
                        .map(|(s, &lw)| lw + power * s.lse_t[j]);
                    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        return max;
                    }
                    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
                    (max + sum.ln()) / power
                }
            })
            .collect();

        for s in states.iter_mut() {
            for ((psi, &lg), &l) in s.psi.iter_mut().zip(&log_g_new).zip(&s.lse_t) {
                *psi = scaling_update(lg, l, f);
            }
        }
        let delta = log_change(&log_g, &log_g_new);
        log_g = log_g_new;
        iterations = it + 1;

        if cfg.objective_every > 0 && iterations % cfg.objective_every == 0 {
            let g: Vec<f64> = log_g.iter().map(|v| v.exp()).collect();
            let total: f64 = states
                .iter()
                .zip(images)
                .zip(kernels)
                .zip(weights)
                .map(|(((s, img), k), w)| {
                    let stats = plan_stats(
                        k.borrow(),
                        &s.phi,
                        &s.psi,
                        shift,
                        marginals(balanced, img.values(), &g, cfg),
                    );
                    w * stats.value
                })
                .sum();
            trace.push((iterations, total));
        }
        if it > 0 && delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let g_bar: Vec<f64> = log_g.iter().map(|v| v.exp()).collect();
    let per_image = states
        .into_iter()
        .zip(images)
        .zip(kernels)
        .map(|((s, img), k)| {
            let stats = plan_stats(
                k.borrow(),
                &s.phi,
                &s.psi,
                shift,
                marginals(balanced, img.values(), &g_bar, cfg),
            );
            TransportResult {
                marginal_gap: (
                    sup_gap(&stats.rows, img.values()),
                    sup_gap(&stats.cols, &g_bar),
                ),
                log_u: s.phi,
                log_v: s.psi,
                log_scale: shift,
                value: stats.value,
                iterations,
                converged,
                row_sums: stats.rows,
                col_sums: stats.cols,
                objective_trace: Vec::new(),
            }
        })
        .collect();

    Ok(BarycenterResult {
        g_bar,
        per_image,
        iterations,
        converged,
        objective_trace: trace,
    })
}

fn marginals<'a>(
    balanced: bool,
    mu: &'a [f64],
    nu: &'a [f64],
    cfg: &SolverConfig,
) -> Option<(&'a [f64], &'a [f64], f64)> {
    (!balanced).then_some((mu, nu, cfg.lambda_u))
}
