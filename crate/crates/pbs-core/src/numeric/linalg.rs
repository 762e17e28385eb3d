//! Dense linear algebra for the small systems (n <= 4) that the primed
//! coordinate solves and rank tests produce.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Solve `A x = b` by LU with partial pivoting. Returns the solution and an
/// infinity-norm condition estimate computed from the explicit inverse.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64), LinalgError> {
    let n = a.len();
    if n == 0 || b.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::Shape(String::from("expected square A and matching b")));
    }
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        let mut pivot = col;
        let mut best = libm::fabs(lu[col][col]);
        for row in (col + 1)..n {
            let v = libm::fabs(lu[row][col]);
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            lu.swap(pivot, col);
            perm.swap(pivot, col);
        }
        for row in (col + 1)..n {
            let factor = lu[row][col] / lu[col][col];
            lu[row][col] = factor;
            for k in (col + 1)..n {
                lu[row][k] -= factor * lu[col][k];
            }
        }
    }

    let solve_one = |rhs: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[perm[i]];
            for k in 0..i {
                s -= lu[i][k] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= lu[i][k] * y[k];
            }
            y[i] = s / lu[i][i];
        }
        y
    };

    let x = solve_one(b);

    // ||A||_inf * ||A^-1||_inf via the explicit inverse; n is tiny here.
    let norm_a = a
        .iter()
        .map(|row| row.iter().map(|v| libm::fabs(*v)).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut norm_inv = 0.0f64;
    let mut rows_inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_one(&e);
        for i in 0..n {
            rows_inv[i][j] = col[i];
        }
    }
    for row in &rows_inv {
        norm_inv = norm_inv.max(row.iter().map(|v| libm::fabs(*v)).sum::<f64>());
    }

    Ok((x, norm_a * norm_inv))
}

/// Determinant via LU with partial pivoting; 0.0 for numerically singular input.
pub fn determinant(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        let mut best = libm::fabs(lu[col][col]);
        for row in (col + 1)..n {
            let v = libm::fabs(lu[row][col]);
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if pivot != col {
            lu.swap(pivot, col);
            det = -det;
        }
        det *= lu[col][col];
        for row in (col + 1)..n {
            let factor = lu[row][col] / lu[col][col];
            for k in (col + 1)..n {
                lu[row][k] -= factor * lu[col][k];
            }
        }
    }
    det
}

/// Singular values of an m x k matrix (descending), via Jacobi iteration on
/// the smaller Gram matrix.
pub fn singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let (gram, dim) = if rows <= cols {
        // M M^T
        let mut g = vec![vec![0.0; rows]; rows];
        for i in 0..rows {
            for j in 0..rows {
                g[i][j] = (0..cols).map(|k| m[i][k] * m[j][k]).sum();
            }
        }
        (g, rows)
    } else {
        // M^T M
        let mut g = vec![vec![0.0; cols]; cols];
        for i in 0..cols {
            for j in 0..cols {
                g[i][j] = (0..rows).map(|k| m[k][i] * m[k][j]).sum();
            }
        }
        (g, cols)
    };

    let mut eig = symmetric_eigenvalues(gram, dim);
    for v in &mut eig {
        *v = libm::sqrt(v.max(0.0));
    }
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig
}

fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>, n: usize) -> Vec<f64> {
    // Cyclic Jacobi; plenty for n <= 4.
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off <= 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if libm::fabs(a[p][q]) < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_2x2() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let b = vec![5.0, 10.0];
        let (x, cond) = lu_solve(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
        assert!(cond < 10.0);
    }

    #[test]
    fn detects_singularity() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert_eq!(lu_solve(&a, &[1.0, 2.0]), Err(LinalgError::Singular));
        assert_eq!(determinant(&a), 0.0);
    }

    #[test]
    fn determinant_3x3() {
        let a = vec![
            vec![2.0, 0.0, 1.0],
            vec![1.0, 3.0, 2.0],
            vec![0.0, 1.0, 1.0],
        ];
        assert!((determinant(&a) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn singular_values_of_rank_one() {
        // Rows proportional: one nonzero singular value, norm sqrt(30).
        let m = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        let sv = singular_values(&m);
        assert!((sv[0] - 70.0f64.sqrt()).abs() < 1e-12);
        assert!(sv[1].abs() < 1e-12);
    }
}
