//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest and largest singular value.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sv = m.singular_values();
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (min, max)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let ev = m.clone().symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues_sorted(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Checks symmetry and positive definiteness via the smallest eigenvalue.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || m.is_empty() {
        return false;
    }
    let asym = (m - m.transpose()).abs().max();
    asym <= tol * (1.0 + m.abs().max()) && sym_eigen_extremes(m).0 > 0.0
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Determinants of the leading principal minors, smallest first.
pub fn leading_minors(m: &DMatrix<f64>) -> Vec<f64> {
    (1..=m.nrows())
        .map(|k| m.view((0, 0), (k, k)).into_owned().determinant())
        .collect()
}

/// Solves `A^T X + X A + C = 0` for a Hurwitz `A`.
///
/// Uses a Cayley transform to the Stein equation `X = M^T X M + W` followed by
/// squared Smith iteration, which converges quadratically when every
/// eigenvalue of `A` has negative real part.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || c.shape() != (n, n) {
        return Err(Error::dims(format!(
            "lyapunov: A is {:?}, C is {:?}",
            a.shape(),
            c.shape()
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let shift = (a.norm() / (n as f64).sqrt()).max(1e-3);
    let eye = DMatrix::<f64>::identity(n, n);
    let minus = a - &eye * shift;
    let minus_inv = minus
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::dims("lyapunov: shifted matrix is singular"))?;
    let mut m = (a + &eye * shift) * &minus_inv;
    let mut x = minus_inv.transpose() * c * &minus_inv * (2.0 * shift);

    for _ in 0..64 {
        let increment = m.transpose() * &x * &m;
        let scale = x.norm().max(1e-300);
        x += &increment;
        m = &m * &m;
        if increment.norm() <= 1e-17 * scale {
            break;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState {
                t: 0.0,
                what: "lyapunov iteration diverged (matrix not Hurwitz?)".into(),
            });
        }
    }
    if m.norm() > 1e-8 {
        return Err(Error::NonFiniteState {
            t: 0.0,
            what: "lyapunov iteration did not converge (matrix not Hurwitz?)".into(),
        });
    }
    Ok((&x + x.transpose()) * 0.5)
}

/// Kronecker product of a vector-shaped block diagonal: `(M ⊗ I_p) v`.
pub fn kron_identity_apply(m: &DMatrix<f64>, p: usize, v: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n * p);
    for i in 0..n {
        for j in 0..m.ncols() {
            let w = m[(i, j)];
            if w == 0.0 {
                continue;
            }
            for d in 0..p {
                out[i * p + d] += w * v[j * p + d];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: vectorised Kronecker form of the Lyapunov equation.
    fn kron_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let eye = DMatrix::<f64>::identity(n, n);
        let at = a.transpose();
        let big = eye.kronecker(&at) + at.kronecker(&eye);
        let rhs = DVector::from_iterator(n * n, c.iter().map(|v| -v));
        let sol = big.lu().solve(&rhs).unwrap();
        DMatrix::from_column_slice(n, n, sol.as_slice())
    }

    #[test]
    fn lyapunov_matches_kronecker_oracle() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let c = DMatrix::identity(3, 3) * 2.0;
        let x = solve_continuous_lyapunov(&a, &c).unwrap();
        let oracle = kron_lyapunov(&a, &c);
        assert!((&x - &oracle).abs().max() < 1e-10);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let c = DMatrix::identity(1, 1);
        assert!(solve_continuous_lyapunov(&a, &c).is_err());
    }

    #[test]
    fn minors_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 0.5]));
        let minors = leading_minors(&m);
        assert_eq!(minors.len(), 3);
        assert!((minors[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kron_apply_matches_explicit_product() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let explicit = m.kronecker(&DMatrix::identity(2, 2)) * &v;
        assert!((kron_identity_apply(&m, 2, &v) - explicit).abs().max() < 1e-14);
    }
}
