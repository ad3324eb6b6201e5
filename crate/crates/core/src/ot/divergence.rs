use crate::cost::CostMatrix;
use crate::error::{Error, Result};

fn check_nonnegative(name: &str, x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(Error::Domain(format!(
            "{name}[{i}] = {} must be finite and nonnegative",
            x[i]
        ))),
        None => Ok(()),
    }
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `Σ xᵢ log xᵢ` with `0 log 0 = 0`.
pub fn entropy(x: &[f64]) -> Result<f64> {
    check_nonnegative("x", x)?;
    Ok(x.iter().map(|&v| xlogx(v)).sum())
}

/// `Σ_{i : yᵢ > 0} xᵢ log(xᵢ / yᵢ)`. Coordinates outside the support of `y`
/// are skipped and there are no mass terms.
pub fn kl_divergence(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kl_divergence of vectors with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_nonnegative("x", x)?;
    check_nonnegative("y", y)?;
    Ok(x.iter()
        .zip(y)
        .filter(|(_, &yi)| yi > 0.0)
        .map(|(&xi, &yi)| if xi > 0.0 { xi * (xi / yi).ln() } else { 0.0 })
        .sum())
}

/// Mass-corrected divergence `KL(x|y) - Σx + Σy`, which is nonnegative and
/// vanishes only at `x = y`. Mass placed outside the support of `y` gives
/// `+∞`.
pub fn generalized_kl(x: &[f64], y: &[f64]) -> Result<f64> {
    let kl = kl_divergence(x, y)?;
    if x.iter().zip(y).any(|(&xi, &yi)| yi == 0.0 && xi > 0.0) {
        return Ok(f64::INFINITY);
    }
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    Ok(kl - sx + sy)
}

fn plan_marginals(p: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; m];
    let mut cols = vec![0.0; m];
    for (i, row) in p.chunks(m).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            rows[i] += v;
            cols[j] += v;
        }
    }
    (rows, cols)
}

fn check_plan(p: &[f64], c: &CostMatrix) -> Result<usize> {
    let m = c.side();
    if p.len() != m * m {
        return Err(Error::Shape(format!(
            "plan has {} entries, cost is {m}x{m}",
            p.len()
        )));
    }
    check_nonnegative("plan", p)?;
    Ok(m)
}

/// Regularized balanced objective `Tr(CᵀP) + λ h(P)`.
pub fn objective_balanced(p: &[f64], c: &CostMatrix, lambda: f64) -> Result<f64> {
    check_plan(p, c)?;
    let transport: f64 = p.iter().zip(c.entries()).map(|(a, b)| a * b).sum();
    Ok(transport + lambda * entropy(p)?)
}

/// Unbalanced objective
/// `Tr(CᵀP) + λ h(P) + λ_u KL̃(P1|μ) + λ_u KL̃(Pᵀ1|ν)` where `KL̃` is
/// [`generalized_kl`]. Row sums of `P` are compared with `mu`, column sums
/// with `nu`.
pub fn objective_unbalanced(
    p: &[f64],
    c: &CostMatrix,
    mu: &[f64],
    nu: &[f64],
    lambda: f64,
    lambda_u: f64,
) -> Result<f64> {
    let m = check_plan(p, c)?;
    if mu.len() != m || nu.len() != m {
        return Err(Error::Shape(format!(
            "marginals of lengths {} and {} for a {m}x{m} plan",
            mu.len(),
            nu.len()
        )));
    }
    let (rows, cols) = plan_marginals(p, m);
    let base = objective_balanced(p, c, lambda)?;
    let kl_rows = generalized_kl(&rows, mu)?;
    let kl_cols = generalized_kl(&cols, nu)?;
    Ok(base + lambda_u * (kl_rows + kl_cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{build_cost, CostSpec};
    use std::f64::consts::E;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(entropy(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[E]).unwrap() - E).abs() < 1e-15);
        assert!(entropy(&[-1.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        let x = [0.3, 1.7, 2.0];
        assert_eq!(kl_divergence(&x, &x).unwrap(), 0.0);
        assert_eq!(kl_divergence(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((kl_divergence(&[2.0], &[1.0]).unwrap() - 1.38629).abs() < 1e-5);
        assert!(kl_divergence(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn generalized_kl_properties() {
        assert_eq!(generalized_kl(&[0.5, 2.0], &[0.5, 2.0]).unwrap(), 0.0);
        // 2 ln 2 - 2 + 1
        let v = generalized_kl(&[2.0], &[1.0]).unwrap();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert_eq!(generalized_kl(&[0.0, 0.0], &[1.0, 0.5]).unwrap(), 1.5);
        assert_eq!(generalized_kl(&[1.0], &[0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn objective_examples() {
        let c = build_cost(CostSpec::Euclidean, 2).unwrap();
        let zero = vec![0.0; 16];
        let z4 = [0.0; 4];
        assert_eq!(
            objective_unbalanced(&zero, &c, &z4, &z4, 0.5, 2.0).unwrap(),
            0.0
        );

        let mu = [0.1, 0.4, 0.2, 0.3];
        let mut p = vec![0.0; 16];
        for i in 0..4 {
            p[i * 4 + i] = mu[i];
        }
        let v = objective_unbalanced(&p, &c, &mu, &mu, 0.7, 3.0).unwrap();
        assert!((v - 0.7 * entropy(&mu).unwrap()).abs() < 1e-15);

        let mut neg = p.clone();
        neg[1] = -1e-3;
        assert!(objective_unbalanced(&neg, &c, &mu, &mu, 0.7, 3.0).is_err());
        assert!(objective_unbalanced(&p[..15], &c, &mu, &mu, 0.7, 3.0).is_err());
    }

    #[test]
    fn objective_matches_term_by_term_recomputation() {
        let c = build_cost(
            CostSpec::WindBiased {
                wind: [1.0, 0.5],
                t: 0.8,
            },
            2,
        )
        .unwrap();
        let p: Vec<f64> = (0..16).map(|k| 0.01 + 0.013 * k as f64).collect();
        let mu = [0.2, 0.5, 0.1, 0.4];
        let nu = [0.3, 0.1, 0.6, 0.2];
        let (lambda, lambda_u) = (0.4, 1.3);
        let mut expected = 0.0;
        for i in 0..4 {
            let mut r = 0.0;
            let mut col = 0.0;
            for j in 0..4 {
                let pij = p[i * 4 + j];
                expected += c.get(i, j) * pij + lambda * pij * pij.ln();
                r += pij;
                col += p[j * 4 + i];
            }
            expected += lambda_u * (r * (r / mu[i]).ln() - r + mu[i]);
            expected += lambda_u * (col * (col / nu[i]).ln() - col + nu[i]);
        }
        let got = objective_unbalanced(&p, &c, &mu, &nu, lambda, lambda_u).unwrap();
        assert!((got - expected).abs() < 1e-13 * expected.abs().max(1.0));
    }
}
