use rayon::prelude::*;

use super::divergence::generalized_kl;
use super::logkernel::LogKernel;
use super::{SolverConfig, TransportResult};
use crate::cost::KernelMatrix;
use crate::error::{Error, Result};

const STATS_BLOCK: usize = 64;

/// Row and column sums plus objective of the plan implied by a pair of
/// potentials, computed without materializing the plan.
pub(crate) struct PlanStats {
    pub value: f64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

pub(crate) fn plan_stats(
    kernel: &KernelMatrix,
    log_u: &[f64],
    log_v: &[f64],
    log_scale: f64,
    marginals: Option<(&[f64], &[f64], f64)>,
) -> PlanStats {
    let cost = kernel.cost();
    let lambda = kernel.lambda();
    let m = cost.side();
    let blocks: Vec<(f64, f64, Vec<f64>, Vec<f64>)> = (0..m.div_ceil(STATS_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * STATS_BLOCK;
            let hi = (lo + STATS_BLOCK).min(m);
            let mut transport = 0.0;
            let mut ent = 0.0;
            let mut rows = vec![0.0; hi - lo];
            let mut cols = vec![0.0; m];
            for i in lo..hi {
                if log_u[i] == f64::NEG_INFINITY {
                    continue;
                }
                let crow = cost.row(i);
                for j in 0..m {
                    let lp = log_u[i] + log_v[j] + log_scale - crow[j] / lambda;
                    let p = lp.exp();
                    if p > 0.0 {
                        transport += crow[j] * p;
                        ent += p * lp;
                        rows[i - lo] += p;
                        cols[j] += p;
                    }
                }
            }
            (transport, ent, rows, cols)
        })
        .collect();
    let mut transport = 0.0;
    let mut ent = 0.0;
    let mut rows = Vec::with_capacity(m);
    let mut cols = vec![0.0; m];
    for (t, e, r, c) in blocks {
        transport += t;
        ent += e;
        rows.extend(r);
        for (a, b) in cols.iter_mut().zip(c) {
            *a += b;
        }
    }
    let mut value = transport + lambda * ent;
    if let Some((mu, nu, lambda_u)) = marginals {
        let kl = generalized_kl(&rows, mu).expect("sums are nonnegative")
            + generalized_kl(&cols, nu).expect("sums are nonnegative");
        value += lambda_u * kl;
    }
    PlanStats { value, rows, cols }
}

pub(crate) fn sup_gap(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Sup-norm change between two potential vectors; matching infinities count
/// as no change.
pub(crate) fn log_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| if a == b { 0.0 } else { (a - b).abs() })
        .fold(0.0, |acc, d| {
            if d.is_nan() {
                f64::INFINITY
            } else {
                acc.max(d)
            }
        })
}

pub(crate) fn ln_all(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// One KL-proximal scaling update `f (log target - lse)`, with zero targets
/// pinned at `-∞` and unreachable entries left neutral.
#[inline]
pub(crate) fn scaling_update(log_target: f64, lse: f64, f: f64) -> f64 {
    if log_target == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if lse == f64::NEG_INFINITY {
        0.0
    } else {
        f * (log_target - lse)
    }
}

/// Shift `c` such that `(φ + c, ψ - c)` maximizes the dual along the one
/// direction that leaves the plan unchanged. Plain scaling contracts that
/// direction only by a factor `λ_u / (λ_u + λ)` per sweep.
fn gauge_shift(log_mu: &[f64], log_nu: &[f64], phi: &[f64], psi: &[f64], ratio: f64) -> f64 {
    let side = |log_m: &[f64], pot: &[f64]| {
        let terms: Vec<f64> = log_m
            .iter()
            .zip(pot)
            .filter(|(l, p)| l.is_finite() && p.is_finite())
            .map(|(l, p)| l - ratio * p)
            .collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };
    let c = (side(log_mu, phi) - side(log_nu, psi)) / (2.0 * ratio);
    if c.is_finite() {
        c
    } else {
        0.0
    }
}

fn check_marginal(name: &str, x: &[f64], m: usize) -> Result<()> {
    if x.len() != m {
        return Err(Error::Shape(format!(
            "{name} has length {}, kernel side is {m}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "{name}[{i}] = {} is not a finite nonnegative mass",
            x[i]
        )));
    }
    Ok(())
}

struct Problem<'a> {
    mu: &'a [f64],
    nu: &'a [f64],
    exponent: f64,
    log_scale: f64,
    balanced: bool,
}

/// Entropic transport with exact marginals: alternating
/// `u ← μ ⊘ Kv`, `v ← ν ⊘ Kᵀu` in the log domain.
///
/// Convergence requires both a log-scaling change below `tol` and a first
/// marginal gap below `tol`; the second marginal is exact after each sweep.
/// Hitting `max_iters` returns `converged = false`.
pub fn sinkhorn_balanced(
    mu: &[f64],
    nu: &[f64],
    kernel: &KernelMatrix,
    cfg: &SolverConfig,
) -> Result<TransportResult> {
    cfg.validate()?;
    cfg.check_kernel(kernel)?;
    let m = kernel.side();
    check_marginal("mu", mu, m)?;
    check_marginal("nu", nu, m)?;
    let (sm, sn): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
    if (sm - sn).abs() > 1e-9 * sm {
        return Err(Error::Precondition(format!(
            "balanced transport needs equal masses, got {sm} and {sn}"
        )));
    }
    if sm == 0.0 {
        return Err(Error::Domain("both marginals are zero".into()));
    }
    run(
        Problem {
            mu,
            nu,
            exponent: 1.0,
            log_scale: 0.0,
            balanced: true,
        },
        kernel,
        cfg,
    )
}

/// Entropic transport with KL-relaxed marginals: `u ← (μ ⊘ K'v)^f`,
/// `v ← (ν ⊘ K'ᵀu)^f` with `f = λ_u/(λ_u+λ)` and `K' = e⁻¹K`.
pub fn sinkhorn_unbalanced(
    mu: &[f64],
    nu: &[f64],
    kernel: &KernelMatrix,
    cfg: &SolverConfig,
) -> Result<TransportResult> {
    cfg.validate()?;
    cfg.check_kernel(kernel)?;
    if cfg.lambda_u.is_infinite() {
        return Err(Error::Config(
            "lambda_u must be finite for unbalanced transport; use sinkhorn_balanced".into(),
        ));
    }
    let m = kernel.side();
    check_marginal("mu", mu, m)?;
    check_marginal("nu", nu, m)?;
    if mu.iter().all(|&v| v == 0.0) && nu.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("both marginals are zero".into()));
    }
    run(
        Problem {
            mu,
            nu,
            exponent: cfg.exponent(),
            log_scale: -1.0,
            balanced: false,
        },
        kernel,
        cfg,
    )
}

fn run(p: Problem<'_>, kernel: &KernelMatrix, cfg: &SolverConfig) -> Result<TransportResult> {
    let m = kernel.side();
    let log_mu = ln_all(p.mu);
    let log_nu = ln_all(p.nu);
    let need_rows: Vec<bool> = p.mu.iter().map(|&v| v > 0.0).collect();
    let need_cols: Vec<bool> = p.nu.iter().map(|&v| v > 0.0).collect();
    let mut phi: Vec<f64> = log_mu
        .iter()
        .map(|&l| if l.is_finite() { 0.0 } else { l })
        .collect();
    let mut psi: Vec<f64> = log_nu
        .iter()
        .map(|&l| if l.is_finite() { 0.0 } else { l })
        .collect();

    let mut op = LogKernel::new(kernel);
    let f = p.exponent;
    let shift = p.log_scale;
    let mut delta = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();
    let marginals = (!p.balanced).then_some((p.mu, p.nu, cfg.lambda_u));

    for it in 0..cfg.max_iters {
        op.stabilize(&phi, &psi, it > 0 && it % cfg.stabilize_every == 0);
        let lse = op.lse_rows(&psi, &need_rows);
        if p.balanced && delta < cfg.tol {
            let gap = (0..m)
                .filter(|&i| need_rows[i])
                .map(|i| ((phi[i] + lse[i]).exp() - p.mu[i]).abs())
                .fold(0.0, f64::max);
            if gap <= cfg.tol {
                converged = true;
                break;
            }
        }
        let mut phi_new: Vec<f64> = (0..m)
            .map(|i| scaling_update(log_mu[i], lse[i] + shift, f))
            .collect();
        op.stabilize(&phi_new, &psi, false);
        let lse_t = op.lse_cols(&phi_new, &need_cols);
        let mut psi_new: Vec<f64> = (0..m)
            .map(|j| scaling_update(log_nu[j], lse_t[j] + shift, f))
            .collect();
        if !p.balanced {
            let c = gauge_shift(
                &log_mu,
                &log_nu,
                &phi_new,
                &psi_new,
                kernel.lambda() / cfg.lambda_u,
            );
            phi_new.iter_mut().for_each(|x| *x += c);
            psi_new.iter_mut().for_each(|x| *x -= c);
        }
        delta = log_change(&phi, &phi_new).max(log_change(&psi, &psi_new));
        phi = phi_new;
        psi = psi_new;
        iterations = it + 1;
        if cfg.objective_every > 0 && iterations % cfg.objective_every == 0 {
            trace.push((
                iterations,
                plan_stats(kernel, &phi, &psi, shift, marginals).value,
            ));
        }
        if !p.balanced && delta < cfg.tol {
            converged = true;
            break;
        }
    }

    let stats = plan_stats(kernel, &phi, &psi, shift, marginals);
    Ok(TransportResult {
        marginal_gap: (sup_gap(&stats.rows, p.mu), sup_gap(&stats.cols, p.nu)),
        log_u: phi,
        log_v: psi,
        log_scale: shift,
        value: stats.value,
        iterations,
        converged,
        row_sums: stats.rows,
        col_sums: stats.cols,
        objective_trace: trace,
    })
}
