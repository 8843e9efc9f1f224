//! Dense symmetric eigendecomposition, backed by `faer`.

use faer::{Mat, Par, Side};
use ndarray::{Array1, Array2, ArrayView2};

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing.
/// Column `i` of `vectors` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    if n == 0 {
        return SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        };
    }
    // Sequential, so results never depend on the machine's thread count.
    faer::set_global_parallelism(Par::Seq);
    // Symmetrize explicitly; accumulated products are only symmetric up to rounding.
    let m = Mat::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let (eigenvalues, eigenvectors) = match m.self_adjoint_eigen(Side::Lower) {
        Ok(e) => (
            (0..n).map(|i| e.S()[i]).collect::<Vec<f64>>(),
            e.U().to_owned(),
        ),
        // Only non-finite input makes the solver give up.
        Err(_) => (vec![f64::NAN; n], Mat::from_fn(n, n, |_, _| f64::NAN)),
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .partial_cmp(&eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let values = Array1::from_iter(order.iter().map(|&i| eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        let v = eigenvectors.col(src);
        // Fix the sign so the largest-magnitude entry is positive; keeps bases stable.
        let mut pivot = 0;
        for r in 1..n {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[[r, col]] = sign * v[r];
        }
    }
    SymmetricEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_matrix_sorted_descending() {
        let a = array![[0.5, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let e = symmetric_eigen(a.view());
        assert_eq!(e.values.to_vec(), vec![2.0, 1.0, 0.5]);
        assert_eq!(e.vectors.column(0).to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn reconstructs_input() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 1.0]];
        let e = symmetric_eigen(a.view());
        let back = e
            .vectors
            .dot(&Array2::from_diag(&e.values))
            .dot(&e.vectors.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
