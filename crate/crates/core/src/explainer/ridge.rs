//! Dense symmetric positive-definite solve via Cholesky.

use ndarray::Array2;

/// Relative pivot threshold below which the system is treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `a x = b` for symmetric positive-definite `a`. Returns `None`
/// when a pivot falls below `PIVOT_TOLERANCE` times the largest diagonal
/// entry (including an all-zero matrix).
pub fn solve_spd(mut a: Array2<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.len(), n);
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let floor = PIVOT_TOLERANCE * scale;
    // In-place lower factor: a = L Lᵀ.
    for j in 0..n {
        let mut pivot = a[[j, j]];
        for k in 0..j {
            pivot -= a[[j, k]] * a[[j, k]];
        }
        if pivot.is_nan() || pivot <= floor {
            return None;
        }
        let pivot = pivot.sqrt();
        a[[j, j]] = pivot;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / pivot;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[[i, k]] * b[k];
        }
        b[i] = v / a[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[[k, i]] * b[k];
        }
        b[i] = v / a[[i, i]];
    }
    Some(b)
}
