use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-6;

/// Kullback-Leibler divergence in bits; `0·log 0 = 0`.
pub fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).log2())
        .sum()
}

/// Jensen-Shannon divergence with base-2 logarithms, so the value lies in [0, 1].
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("jsd over lengths {} and {}", p.len(), q.len())));
    }
    let p = normalized(p)?;
    let q = normalized(q)?;
    Ok(jsd_unchecked(&p, &q))
}

/// JSD for inputs already known to be probability vectors of equal length.
pub fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).log2();
        }
    }
    total.clamp(0.0, 1.0)
}

fn normalized(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("probability entries must be finite and non-negative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidArgument(format!("probability vector sums to {s}")));
    }
    Ok(p.iter().map(|x| x / s).collect())
}
