use ndarray::Array2;

use super::NumericsError;

const MAX_SWEEPS: usize = 80;

/// Singular values of `m` in descending order.
///
/// One-sided Jacobi (Hestenes) rotations on the columns of the taller
/// orientation; singular values are the final column norms.
pub fn singular_values(m: &Array2<f64>) -> Result<Vec<f64>, NumericsError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    // columns of the tall orientation, stored contiguously
    let mut colsv: Vec<Vec<f64>> = if rows >= cols {
        (0..cols).map(|j| m.column(j).to_vec()).collect()
    } else {
        (0..rows).map(|i| m.row(i).to_vec()).collect()
    };
    let n = colsv.len();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (a, b) = (&colsv[p], &colsv[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in a.iter().zip(b) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = colsv.split_at_mut(q);
                let (a, b) = (&mut left[p], &mut right[0]);
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let xv = *x;
                    let yv = *y;
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sv: Vec<f64> = colsv
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Sum of singular values.
pub fn nuclear_norm(m: &Array2<f64>) -> Result<f64, NumericsError> {
    Ok(singular_values(m)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity() {
        let m = Array2::<f64>::eye(5);
        assert!((nuclear_norm(&m).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_one_hot_rows() {
        let mut m = Array2::<f64>::zeros((9, 3));
        m.column_mut(1).fill(1.0);
        assert!((nuclear_norm(&m).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn half_half() {
        let m = array![[0.5, 0.5], [0.5, 0.5]];
        assert!((nuclear_norm(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_matrix_matches_transpose() {
        let m = array![[1.0, 2.0, 0.0, -1.0], [0.5, 0.0, 3.0, 2.0]];
        let a = singular_values(&m).unwrap();
        let b = singular_values(&m.t().to_owned()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let m = array![[f64::NAN, 0.0]];
        assert_eq!(nuclear_norm(&m), Err(NumericsError::NonFinite));
    }
}
