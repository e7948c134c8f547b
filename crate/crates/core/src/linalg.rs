//! Small dense linear algebra: symmetric eigendecomposition by cyclic Jacobi
//! rotations and SPD solves. Dimensions here are tiny (d ≤ 100).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

const JACOBI_OFF_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

fn off_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `1e-12` times the
/// matrix scale. Eigenvectors are sign-normalized so their first nonzero
/// component is positive, and pairs are sorted by ascending eigenvalue with
/// ties kept in column order.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Eigen(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let tol = 1e-9 * (1.0 + m[(i, j)].abs().max(m[(j, i)].abs()));
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::Eigen(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }

    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut sweeps = 0;
    while off_norm(&a) > JACOBI_OFF_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Eigen(format!(
                "no convergence after {JACOBI_MAX_SWEEPS} sweeps (off-norm {:e})",
                off_norm(&a)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = v.column(i).iter().copied().collect();
            if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-14) {
                if first < 0.0 {
                    col.iter_mut().for_each(|x| *x = -*x);
                }
            }
            col
        })
        .collect();
    Ok(SymmetricEigen { values, vectors })
}

/// Solves `h x = g` for symmetric positive definite `h`.
pub fn spd_solve(h: &DMatrix<f64>, g: &[f64]) -> Result<Vec<f64>> {
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidDomain("Hessian is not positive definite".into()))?;
    let x = chol.solve(&DVector::from_column_slice(g));
    Ok(x.iter().copied().collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `a + t * (b - a)`.
pub fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn mean_of(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points.first().map_or(0, |p| p.len());
    let mut m = vec![0.0; d];
    for p in points {
        for (mi, pi) in m.iter_mut().zip(p) {
            *mi += pi;
        }
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> Result<f64> {
    let e = jacobi_eigen(m)?;
    Ok(e.values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_matrix_keeps_identity_basis() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 2.0]));
        let e = jacobi_eigen(&m).unwrap();
        assert_eq!(e.values, vec![2.0, 2.0, 2.0]);
        assert_eq!(e.vectors[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors[2], vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = jacobi_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[1][0] - s).abs() < 1e-12 && (e.vectors[1][1] - s).abs() < 1e-12);
        // sign convention: first nonzero component positive
        assert!(e.vectors[0][0] > 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(jacobi_eigen(&m).is_err());
    }

    fn sym_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            (&a + a.transpose()) * 0.5
        })
    }

    proptest! {
        #[test]
        fn matches_nalgebra_eigenvalues(m in (1usize..7).prop_flat_map(sym_matrix)) {
            let ours = jacobi_eigen(&m).unwrap();
            let mut theirs: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.values.iter().zip(&theirs) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            // reconstruction: M v = λ v
            for (lam, vec) in ours.values.iter().zip(&ours.vectors) {
                let v = DVector::from_column_slice(vec);
                let r = &m * &v - &v * *lam;
                prop_assert!(r.norm() < 1e-9 * (1.0 + m.norm()));
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
