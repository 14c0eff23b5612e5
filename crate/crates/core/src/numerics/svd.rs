//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 60;

/// `A = U · diag(S) · Vᵀ` with `p = min(n, d)` columns in `U` and `V`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// n × p, orthonormal columns.
    pub u: Tensor<f64>,
    /// Non-negative, non-increasing.
    pub s: Vec<f64>,
    /// d × p, orthonormal columns.
    pub v: Tensor<f64>,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Tensor<f64> {
        let (n, p) = (self.u.rows(), self.u.cols());
        let d = self.v.rows();
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let row = out.row_mut(i);
            for k in 0..p {
                let coef = self.u.get(i, k) * self.s[k];
                if coef == 0.0 {
                    continue;
                }
                for (j, o) in row.iter_mut().enumerate() {
                    *o += coef * self.v.get(j, k);
                }
            }
        }
        out
    }

    /// Number of singular values above `tol · s[0]`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let top = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&x| x > tol * top && x > 0.0).count()
    }
}

/// Computes the thin SVD of an `n × d` matrix.
///
/// Signs are fixed so that the largest-magnitude entry of every `U` column is
/// positive (first such entry on ties).
pub fn svd(matrix: &Tensor<f64>) -> Result<SvdResult> {
    let (n, d) = (matrix.rows(), matrix.cols());
    if n == 0 || d == 0 || matrix.shape().len() != 2 {
        return Err(Error::Shape(format!("svd needs a non-empty matrix, got {:?}", matrix.shape())));
    }
    if !matrix.all_finite() {
        return Err(Error::InvalidArgument("svd input has non-finite entries".into()));
    }
    let mut result = if n >= d {
        // columns of A as contiguous rows
        jacobi_tall(&matrix.transpose(), n, d)?
    } else {
        let r = jacobi_tall(matrix, d, n)?;
        SvdResult {
            u: r.v,
            s: r.s,
            v: r.u,
        }
    };
    fix_signs(&mut result);
    Ok(result)
}

/// `cols` holds the `d` columns (each of length `n`, `n ≥ d`) of the matrix.
fn jacobi_tall(cols: &Tensor<f64>, n: usize, d: usize) -> Result<SvdResult> {
    let mut w: Vec<Vec<f64>> = (0..d).map(|j| cols.row(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();

    let frob2: f64 = w.iter().flatten().map(|x| x * x).sum();
    // columns this small are roundoff; rotating them only chases noise
    let floor = frob2 * (n as f64 * f64::EPSILON).powi(2);
    let tol = (n as f64).sqrt() * f64::EPSILON;
    let mut converged = false;
    let mut residual = 0.0;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..d {
            for q in p + 1..d {
                let (alpha, beta, gamma) = col_stats(&w[p], &w[q]);
                if gamma == 0.0 || alpha <= floor || beta <= floor {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    // same threshold the sweep used to skip columns, so every kept column was
    // orthogonalized against the rest
    let cutoff = floor.sqrt();
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut s = Vec::with_capacity(d);
    let mut v_cols = Vec::with_capacity(d);
    let mut deficient = Vec::new();
    for &j in &order {
        let sigma = norms[j];
        if sigma > cutoff && sigma > 0.0 {
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
            s.push(sigma);
        } else {
            deficient.push(u_cols.len());
            u_cols.push(Vec::new());
            s.push(0.0);
        }
        v_cols.push(v[j].clone());
    }
    complete_basis(&mut u_cols, &deficient, n);

    let mut u = Tensor::zeros(&[n, d]);
    for (k, col) in u_cols.iter().enumerate() {
        for i in 0..n {
            u.set(i, k, col[i]);
        }
    }
    let mut vt = Tensor::zeros(&[d, d]);
    for (k, col) in v_cols.iter().enumerate() {
        for i in 0..d {
            vt.set(i, k, col[i]);
        }
    }
    Ok(SvdResult { u, s, v: vt })
}

fn col_stats(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        aa += x * x;
        bb += y * y;
        ab += x * y;
    }
    (aa, bb, ab)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the empty columns listed in `missing` with unit vectors orthogonal
/// to every other column (Gram-Schmidt over the standard basis).
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize], n: usize) {
    let mut candidate = 0;
    for &slot in missing {
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let proj: f64 = other.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[slot] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

fn fix_signs(r: &mut SvdResult) {
    let (n, p) = (r.u.rows(), r.u.cols());
    for k in 0..p {
        let mut best = 0usize;
        for i in 0..n {
            if r.u.get(i, k).abs() > r.u.get(best, k).abs() {
                best = i;
            }
        }
        if r.u.get(best, k) < 0.0 {
            for i in 0..n {
                r.u.set(i, k, -r.u.get(i, k));
            }
            for j in 0..r.v.rows() {
                r.v.set(j, k, -r.v.get(j, k));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::matmul_at;
    use proptest::prelude::*;

    fn check_invariants(a: &Tensor<f64>, r: &SvdResult) {
        assert!(r.reconstruct().max_abs_diff(a) <= 1e-5 * a.max_abs());
        for w in r.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(r.s.iter().all(|&x| x >= 0.0));
        let p = r.s.len();
        for m in [&r.u, &r.v] {
            let g = matmul_at(m, m);
            assert!(g.max_abs_diff(&Tensor::identity(p)) < 1e-6);
        }
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd(&Tensor::identity(3)).unwrap();
        assert_eq!(r.s.len(), 3);
        for s in &r.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_two_by_two() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let r = svd(&a).unwrap();
        assert!((r.s[0] - 5.0).abs() < 1e-12);
        assert!(r.s[1].abs() < 1e-12);
        check_invariants(&a, &r);
    }

    #[test]
    fn wide_and_zero_matrices() {
        let a = Tensor::from_rows(&[vec![3.0, 0.0, 4.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let r = svd(&a).unwrap();
        assert!((r.s[0] - 5.0).abs() < 1e-12);
        check_invariants(&a, &r);
        let z = Tensor::<f64>::zeros(&[4, 2]);
        let r = svd(&z).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        check_invariants(&z, &r);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let a = Tensor::from_rows(&[vec![-1.0, 0.2], vec![-3.0, 0.1], vec![0.5, -2.0]]).unwrap();
        let r = svd(&a).unwrap();
        for k in 0..2 {
            let col: Vec<f64> = (0..3).map(|i| r.u.get(i, k)).collect();
            let best = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(best > 0.0);
        }
        let again = svd(&a).unwrap();
        assert_eq!(r.u, again.u);
        assert_eq!(r.v, again.v);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(svd(&Tensor::<f64>::zeros(&[0, 3])).is_err());
    }

    #[test]
    fn large_random_matrix() {
        let mut s = 12345u64;
        let data: Vec<f64> = (0..512 * 64)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        let a = Tensor::matrix(512, 64, data).unwrap();
        let r = svd(&a).unwrap();
        check_invariants(&a, &r);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn invariants_hold_for_random_matrices(
            n in 1usize..24, d in 1usize..12, seed in any::<u64>(), rank_cut in 0usize..4
        ) {
            let mut s = seed | 1;
            let mut data: Vec<f64> = (0..n * d).map(|_| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            }).collect();
            // duplicate some columns to exercise rank deficiency
            for c in 0..rank_cut.min(d.saturating_sub(1)) {
                for i in 0..n { data[i * d + c + 1] = data[i * d]; }
            }
            let a = Tensor::matrix(n, d, data).unwrap();
            let r = svd(&a).unwrap();
            check_invariants(&a, &r);
        }
    }
}
