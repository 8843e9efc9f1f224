//! Contrast normalization and PCA projection.
//!
//! The PCA stage optionally whitens, dividing every retained component by the
//! square root of its eigenvalue. With `whiten = false` it is a plain
//! projection onto the principal subspace (the "NW" preprocessing).

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::DataMatrix;

/// Rows whose mean-removed norm falls below this map to the zero vector.
pub const CONTRAST_NORM_FLOOR: f64 = 1e-8;

/// Variance floor added under the square root when whitening.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Subtract each row's mean and scale the row to unit Euclidean norm.
pub fn contrast_normalize(x: &DataMatrix) -> Result<DataMatrix> {
    if x.nrows() == 0 {
        return Err(Error::dim("contrast_normalize on an empty matrix"));
    }
    if x.ncols() < 2 {
        return Err(Error::dim(format!(
            "contrast_normalize needs at least 2 dimensions per row, got {}",
            x.ncols()
        )));
    }
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
        let norm = row.dot(&row).sqrt();
        if norm < CONTRAST_NORM_FLOOR {
            row.fill(0.0);
        } else {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(out)
}

/// A fitted PCA projection, optionally whitening.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    /// `D × R`, orthonormal columns ordered by decreasing eigenvalue.
    pub basis: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub whiten: bool,
    pub epsilon: f64,
}

impl WhiteningTransform {
    /// Fit on the sample covariance (denominator `N - 1`) of `x`.
    ///
    /// The retained count `R` is the smallest count whose cumulative eigenvalue
    /// mass reaches `variance_retained` of the total.
    pub fn fit(x: &DataMatrix, variance_retained: f64, whiten: bool) -> Result<Self> {
        Self::fit_with_epsilon(x, variance_retained, whiten, DEFAULT_EPSILON)
    }

    pub fn fit_with_epsilon(
        x: &DataMatrix,
        variance_retained: f64,
        whiten: bool,
        epsilon: f64,
    ) -> Result<Self> {
        let (n, d) = x.dim();
        if n < 2 {
            return Err(Error::invalid(format!(
                "PCA needs at least 2 samples, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::dim("PCA on zero-dimensional data"));
        }
        if !(variance_retained > 0.0 && variance_retained <= 1.0) {
            return Err(Error::invalid(format!(
                "variance_retained must lie in (0, 1], got {variance_retained}"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive and finite"));
        }

        let mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = x - &mean;
        let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
        let eig = symmetric_eigen(cov.view());

        let mass: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = mass.iter().sum();
        let r = if total <= 0.0 {
            1
        } else {
            let target = variance_retained * total * (1.0 - 1e-12);
            let mut acc = 0.0;
            let mut r = d;
            for (i, m) in mass.iter().enumerate() {
                acc += m;
                if acc >= target {
                    r = i + 1;
                    break;
                }
            }
            r
        };

        let eigenvalues = Array1::from_iter(eig.values.iter().take(r).map(|&v| v.max(epsilon)));
        let basis = eig.vectors.slice(ndarray::s![.., ..r]).to_owned();
        Ok(Self {
            mean,
            basis,
            eigenvalues,
            whiten,
            epsilon,
        })
    }

    /// Identity projection on `d` dimensions: zero mean, unit basis, no whitening.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: Array1::zeros(d),
            basis: Array2::eye(d),
            eigenvalues: Array1::ones(d),
            whiten: false,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn scales(&self) -> Array1<f64> {
        self.eigenvalues.mapv(|l| (l + self.epsilon).sqrt())
    }

    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "transform expects {} columns, data has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut y = (x - &self.mean).dot(&self.basis);
        if self.whiten {
            y /= &self.scales();
        }
        Ok(y)
    }

    /// Right inverse of [`apply`](Self::apply) on the retained subspace.
    pub fn invert(&self, y: &DataMatrix) -> Result<DataMatrix> {
        if y.ncols() != self.output_dim() {
            return Err(Error::dim(format!(
                "inverse transform expects {} columns, codes have {}",
                self.output_dim(),
                y.ncols()
            )));
        }
        let codes = if self.whiten {
            y * &self.scales()
        } else {
            y.to_owned()
        };
        Ok(codes.dot(&self.basis.t()) + &self.mean)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        let r = self.eigenvalues.len();
        if self.basis.dim() != (d, r) {
            return Err(Error::dim(format!(
                "basis is {:?}, expected ({d}, {r})",
                self.basis.dim()
            )));
        }
        if r > d {
            return Err(Error::dim("more retained components than input dimensions"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive and finite"));
        }
        if self
            .eigenvalues
            .iter()
            .any(|&l| !(l > 0.0 && l.is_finite()))
        {
            return Err(Error::invalid("eigenvalues must be positive and finite"));
        }
        if self
            .mean
            .iter()
            .chain(self.basis.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite entry in transform"));
        }
        Ok(())
    }
}

/// Multiply every entry by `s` so the mean squared row norm equals the column
/// count. Returns `s`; apply the same factor to held-out data.
pub fn normalize_global_scale(x: &mut DataMatrix) -> f64 {
    let n = x.nrows().max(1) as f64;
    let energy = x.iter().map(|v| v * v).sum::<f64>() / n;
    let s = if energy > 0.0 {
        (x.ncols() as f64 / energy).sqrt()
    } else {
        1.0
    };
    x.mapv_inplace(|v| v * s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    fn sample_cov(y: &DataMatrix) -> DataMatrix {
        let m = y.mean_axis(Axis(0)).unwrap();
        let c = y - &m;
        c.t().dot(&c) / (y.nrows() as f64 - 1.0)
    }

    #[test]
    fn contrast_normalize_two_dims() {
        let out = contrast_normalize(&array![[1.0, 3.0]]).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((out[[0, 0]] + h).abs() < 1e-15);
        assert!((out[[0, 1]] - h).abs() < 1e-15);
    }

    #[test]
    fn contrast_normalize_constant_row_is_zero() {
        let out = contrast_normalize(&array![[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(out, array![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn contrast_normalize_rejects_empty_and_narrow() {
        assert!(matches!(
            contrast_normalize(&Array2::zeros((0, 4))),
            Err(Error::Dimension(_))
        ));
        assert!(contrast_normalize(&Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn contrast_normalize_unit_rows() {
        let mut x = random_matrix(100, 32, 3);
        x.row_mut(5).fill(2.5);
        let out = contrast_normalize(&x).unwrap();
        for (i, row) in out.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if i == 5 {
                assert_eq!(norm, 0.0);
            } else {
                assert!((norm - 1.0).abs() < 1e-10);
                assert!(row.sum().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pca_diagonal_covariance() {
        // Four points (±a, 0), (0, ±b) have sample covariance diag(2a²/3, 2b²/3).
        let a = 3f64.sqrt();
        let b = (0.75f64).sqrt();
        let x = array![[a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]];
        let t = WhiteningTransform::fit(&x, 1.0, true).unwrap();
        assert_eq!(t.output_dim(), 2);
        assert!((t.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((t.eigenvalues[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pca_cumulative_mass_rule() {
        // Eigenvalue mass 0.9 / 0.1.
        let a = (0.9f64 * 1.5).sqrt();
        let b = (0.1f64 * 1.5).sqrt();
        let x = array![[a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]];
        let t = WhiteningTransform::fit(&x, 0.8, false).unwrap();
        assert_eq!(t.output_dim(), 1);
        let t = WhiteningTransform::fit(&x, 0.9, false).unwrap();
        assert_eq!(t.output_dim(), 1, "exact tie resolves to the smaller count");
        let t = WhiteningTransform::fit(&x, 0.95, false).unwrap();
        assert_eq!(t.output_dim(), 2);
    }

    #[test]
    fn pca_errors() {
        assert!(WhiteningTransform::fit(&array![[1.0, 2.0]], 1.0, true).is_err());
        let x = random_matrix(10, 3, 1);
        assert!(WhiteningTransform::fit(&x, 0.0, true).is_err());
        assert!(WhiteningTransform::fit(&x, 1.5, true).is_err());
        let t = WhiteningTransform::fit(&x, 1.0, true).unwrap();
        assert!(matches!(
            t.apply(&Array2::zeros((2, 4))),
            Err(Error::Dimension(_))
        ));
        assert!(t.invert(&Array2::zeros((2, 4))).is_err());
    }

    #[test]
    fn rank_deficient_data_is_floored() {
        // Third column duplicates the first: one zero eigenvalue.
        let mut x = random_matrix(50, 3, 9);
        let c0 = x.column(0).to_owned();
        x.column_mut(2).assign(&c0);
        let t = WhiteningTransform::fit(&x, 1.0, true).unwrap();
        assert_eq!(t.output_dim(), 2);
        assert!(t.eigenvalues.iter().all(|&l| l > 0.0));
        let y = t.apply(&x).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recovers_known_gaussian_covariance() {
        // Samples from N(0, A Aᵀ) with a fixed A; compare against the eigenvalues
        // of A Aᵀ computed independently.
        let a = array![[2.0, 0.0, 0.0], [0.6, 1.0, 0.0], [-0.4, 0.3, 0.5]];
        let cov = a.dot(&a.t());
        let truth = symmetric_eigen(cov.view()).values;
        let z = random_matrix(1000, 3, 42);
        let x = z.dot(&a.t());
        let t = WhiteningTransform::fit(&x, 1.0, false).unwrap();
        for (est, tru) in t.eigenvalues.iter().zip(truth.iter()) {
            assert!((est - tru).abs() / tru < 0.15, "{est} vs {tru}");
        }
    }

    #[test]
    fn whitened_covariance_is_identity() {
        let a = array![
            [1.5, 0.0, 0.0, 0.0],
            [0.5, 1.0, 0.0, 0.0],
            [0.2, -0.3, 0.7, 0.0],
            [0.0, 0.1, 0.4, 0.3]
        ];
        let x = random_matrix(400, 4, 5).dot(&a.t());
        let t = WhiteningTransform::fit(&x, 1.0, true).unwrap();
        let c = sample_cov(&t.apply(&x).unwrap());
        let eye = Array2::<f64>::eye(4);
        for (u, v) in c.iter().zip(eye.iter()) {
            assert!((u - v).abs() < 1e-6);
        }

        let t = WhiteningTransform::fit(&x, 1.0, false).unwrap();
        let c = sample_cov(&t.apply(&x).unwrap());
        let diag = Array2::from_diag(&t.eigenvalues);
        for (u, v) in c.iter().zip(diag.iter()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let x = random_matrix(200, 12, 11);
        let t = WhiteningTransform::fit(&x, 0.9, true).unwrap();
        let g = t.basis.t().dot(&t.basis);
        let eye = Array2::<f64>::eye(t.output_dim());
        for (u, v) in g.iter().zip(eye.iter()) {
            assert!((u - v).abs() < 1e-8);
        }
        for w in t.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn invert_zero_codes_gives_mean() {
        let x = random_matrix(30, 5, 2) + 3.0;
        let t = WhiteningTransform::fit(&x, 0.95, true).unwrap();
        let back = t.invert(&Array2::zeros((1, t.output_dim()))).unwrap();
        for (u, v) in back.row(0).iter().zip(t.mean.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        // Zero input maps to the deterministic image of -mean.
        let z = t.apply(&Array2::zeros((1, 5))).unwrap();
        let z2 = t.apply(&Array2::zeros((1, 5))).unwrap();
        assert_eq!(z, z2);
    }

    #[test]
    fn global_scale_sets_mean_energy() {
        let mut x = random_matrix(40, 6, 8) * 0.1;
        let s = normalize_global_scale(&mut x);
        assert!(s > 1.0);
        let energy = x.iter().map(|v| v * v).sum::<f64>() / 40.0;
        assert!((energy - 6.0).abs() < 1e-9);
    }
}
