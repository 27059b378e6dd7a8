//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Default threshold on the condition estimate above which a matrix is treated as singular.
pub const REGULARITY_THRESHOLD: f64 = 1e12;

fn norm_1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number `|M|_1 |M^-1|_1`, or infinity when the LU factorization is singular.
/// An empty matrix has condition 1.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    match m.clone().lu().try_inverse() {
        Some(inv) => {
            let c = norm_1(m) * norm_1(&inv);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

/// Solve `M x = b` by LU with partial pivoting. `None` when singular or non-finite.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let x = m.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_condition_one() {
        assert_eq!(condition_estimate(&DMatrix::identity(3, 3)), 1.0);
    }

    #[test]
    fn zero_matrix_is_singular() {
        assert!(condition_estimate(&DMatrix::zeros(2, 2)).is_infinite());
        assert!(solve(&DMatrix::zeros(2, 2), &DVector::from_vec(vec![1.0, 0.0])).is_none());
    }

    #[test]
    fn diagonal_condition() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        assert!((condition_estimate(&m) - 4.0).abs() < 1e-14);
    }
}
