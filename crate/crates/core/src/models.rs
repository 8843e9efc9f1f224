//! Tied-weight autoencoders and the K-means baseline.
//!
//! Every autoencoder reconstructs as `r(x) = Σ_k f(w_kᵀx + b_k)·w_k + c`, with
//! `f` the activation. For the zero-bias kinds `b` and `c` stay at zero and the
//! expression becomes the selection-times-linear-code form
//! `Σ_k (w_kᵀx > θ)(w_kᵀx)·w_k`.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// Zero-mask corruption: each input dimension is dropped with probability `p`.
    Denoising {
        p: f64,
    },
    /// Contraction penalty `λ·Σ_k f'(a_k)²‖w_k‖²`, averaged over the batch.
    Contractive {
        lambda: f64,
    },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::Denoising { p } if (0.0..=1.0).contains(&p) => Ok(()),
            Regularizer::Denoising { p } => Err(Error::invalid(format!(
                "corruption probability must lie in [0, 1], got {p}"
            ))),
            Regularizer::Contractive { lambda } if lambda.is_finite() => Ok(()),
            Regularizer::Contractive { .. } => {
                Err(Error::invalid("contraction strength must be finite"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    /// The activation the model trains with.
    Train,
    /// Zero-bias rectified linear response `max(0, w_kᵀx)`.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    /// `D × K`, one weight vector per column.
    pub weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_bias: Array1<f64>,
    pub activation: Activation,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean squared reconstruction error plus the regularization penalty.
    pub objective: f64,
    /// Mean squared reconstruction error alone.
    pub reconstruction: f64,
}

impl Autoencoder {
    /// Zero biases, i.i.d. Gaussian weights with standard deviation `init_scale/√D`.
    pub fn random(
        dim: usize,
        hidden: usize,
        activation: Activation,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(Error::invalid("init_scale must be finite and non-negative"));
        }
        let std = init_scale / (dim as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = rng::stream(seed, Stream::Init);
        let weights = Array2::from_shape_simple_fn((dim, hidden), || normal.sample(&mut rng));
        Ok(Self {
            weights,
            hidden_bias: Array1::zeros(hidden),
            visible_bias: Array1::zeros(dim),
            activation,
        })
    }

    pub fn from_parts(
        weights: Array2<f64>,
        hidden_bias: Array1<f64>,
        visible_bias: Array1<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let m = Self {
            weights,
            hidden_bias,
            visible_bias,
            activation,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, k) = self.weights.dim();
        if self.hidden_bias.len() != k || self.visible_bias.len() != d {
            return Err(Error::dim(format!(
                "bias lengths ({}, {}) do not match weights {d}×{k}",
                self.hidden_bias.len(),
                self.visible_bias.len()
            )));
        }
        let all = self
            .weights
            .iter()
            .chain(self.hidden_bias.iter())
            .chain(self.visible_bias.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite model parameter".into()));
        }
        if self.activation.is_zero_bias()
            && (self.hidden_bias.iter().any(|&b| b != 0.0)
                || self.visible_bias.iter().any(|&c| c != 0.0))
        {
            return Err(Error::invalid(format!(
                "{} models carry no biases",
                self.activation.name()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.weights.ncols()
    }

    fn check_batch(&self, x: &DataMatrix) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dim(format!(
                "model expects {} inputs, data has {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn check_vector(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "model expects {} inputs, vector has {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Training-mode preactivations `Xᵀ·W + b` (bias omitted for zero-bias kinds).
    pub fn preactivations(&self, x: &DataMatrix) -> Result<Array2<f64>> {
        self.check_batch(x)?;
        let mut a = x.dot(&self.weights);
        if !self.activation.is_zero_bias() {
            a += &self.hidden_bias;
        }
        Ok(a)
    }

    pub fn encode_batch(&self, x: &DataMatrix, mode: EncodeMode) -> Result<Array2<f64>> {
        match mode {
            EncodeMode::Train => {
                let act = self.activation;
                Ok(self.preactivations(x)?.mapv_into(|a| act.forward(a)))
            }
            EncodeMode::Infer => {
                self.check_batch(x)?;
                Ok(x.dot(&self.weights).mapv_into(|a| a.max(0.0)))
            }
        }
    }

    pub fn encode(&self, x: ArrayView1<'_, f64>, mode: EncodeMode) -> Result<Array1<f64>> {
        self.check_vector(x)?;
        let row = x.to_owned().insert_axis(Axis(0));
        Ok(self.encode_batch(&row, mode)?.row(0).to_owned())
    }

    pub fn reconstruct_batch(&self, x: &DataMatrix) -> Result<DataMatrix> {
        let h = self.encode_batch(x, EncodeMode::Train)?;
        let mut r = h.dot(&self.weights.t());
        if !self.activation.is_zero_bias() {
            r += &self.visible_bias;
        }
        Ok(r)
    }

    pub fn reconstruct(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_vector(x)?;
        let row = x.to_owned().insert_axis(Axis(0));
        Ok(self.reconstruct_batch(&row)?.row(0).to_owned())
    }

    /// Mean over rows of `‖r(x) − x‖²`.
    pub fn reconstruction_error(&self, x: &DataMatrix) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::invalid("reconstruction error of an empty batch"));
        }
        let r = self.reconstruct_batch(x)?;
        Ok((&r - x).mapv(|v| v * v).sum() / x.nrows() as f64)
    }

    /// Batch objective and its exact gradient.
    ///
    /// The decoder and encoder contributions of the tied weights both land in
    /// `weights`. `seed` drives the denoising mask and is ignored otherwise.
    pub fn loss_and_grads(
        &self,
        batch: &DataMatrix,
        reg: Regularizer,
        seed: u64,
    ) -> Result<(LossBreakdown, Gradients)> {
        if batch.nrows() == 0 {
            return Err(Error::invalid("loss_and_grads on an empty batch"));
        }
        self.check_batch(batch)?;
        reg.validate()?;

        let act = self.activation;
        let zero_bias = act.is_zero_bias();
        let n = batch.nrows() as f64;

        let corrupted;
        let input = match reg {
            Regularizer::Denoising { p } => {
                corrupted = zero_mask(batch, p, seed);
                &corrupted
            }
            _ => batch,
        };

        let pre = self.preactivations(input)?;
        let h = pre.mapv(|a| act.forward(a));
        let slope = pre.mapv(|a| act.backward(a));

        let mut recon = h.dot(&self.weights.t());
        if !zero_bias {
            recon += &self.visible_bias;
        }
        let residual = &recon - batch;
        let reconstruction = residual.mapv(|v| v * v).sum() / n;

        // d(objective)/d(recon)
        let g_recon = residual * (2.0 / n);
        let mut g_weights = g_recon.t().dot(&h);
        let mut g_pre = g_recon.dot(&self.weights) * &slope;

        let mut objective = reconstruction;
        if let Regularizer::Contractive { lambda } = reg {
            let col_sq: Array1<f64> = self.weights.map_axis(Axis(0), |w| w.dot(&w));
            let slope_sq = slope.mapv(|s| s * s);
            objective += lambda * slope_sq.dot(&col_sq).sum() / n;

            // Through the activation slope.
            let curvature = pre.mapv(|a| act.second(a));
            let mut g_pen = &slope * &curvature * (2.0 * lambda / n);
            g_pen *= &col_sq;
            g_pre += &g_pen;

            // Through ‖w_k‖² directly.
            let per_unit = slope_sq.sum_axis(Axis(0)) * (2.0 * lambda / n);
            g_weights += &(&self.weights * &per_unit);
        }

        g_weights += &input.t().dot(&g_pre);

        let (g_hidden, g_visible) = if zero_bias {
            (
                Array1::zeros(self.hidden_units()),
                Array1::zeros(self.input_dim()),
            )
        } else {
            (g_pre.sum_axis(Axis(0)), g_recon.sum_axis(Axis(0)))
        };

        Ok((
            LossBreakdown {
                objective,
                reconstruction,
            },
            Gradients {
                weights: g_weights,
                hidden_bias: g_hidden,
                visible_bias: g_visible,
            },
        ))
    }
}

/// Zero each entry independently with probability `p`, deterministic in `seed`.
pub fn zero_mask(x: &DataMatrix, p: f64, seed: u64) -> DataMatrix {
    let mut rng = rng::stream(seed, Stream::Corruption);
    let mut out = x.to_owned();
    out.mapv_inplace(|v| if rng.random::<f64>() < p { 0.0 } else { v });
    out
}

/// K-means centroids, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// `D × K`.
    pub centroids: Array2<f64>,
}

impl KMeans {
    /// Lloyd's algorithm from `k` distinct random rows of `x`.
    ///
    /// Empty clusters are re-seeded to the row farthest from its assigned
    /// centroid. Ties in assignment go to the lower centroid index.
    pub fn train(x: &DataMatrix, k: usize, iters: usize, seed: u64) -> Result<Self> {
        let (n, d) = x.dim();
        if k == 0 {
            return Err(Error::invalid("K-means needs at least one centroid"));
        }
        if k > n {
            return Err(Error::invalid(format!(
                "K-means with {k} centroids on {n} samples"
            )));
        }
        let mut rng = rng::stream(seed, Stream::Init);
        let picks = sample_indices(&mut rng, n, k);
        let mut centroids = Array2::zeros((d, k));
        for (j, i) in picks.iter().enumerate() {
            centroids.column_mut(j).assign(&x.row(i));
        }

        for _ in 0..iters {
            let (assign, dist) = assign_nearest(x, &centroids);
            let mut sums = Array2::<f64>::zeros((d, k));
            let mut counts = vec![0usize; k];
            for (i, &c) in assign.iter().enumerate() {
                counts[c] += 1;
                let mut col = sums.column_mut(c);
                col += &x.row(i);
            }
            let mut taken = vec![false; n];
            for (c, &count) in counts.iter().enumerate() {
                if count > 0 {
                    let mean = sums.column(c).mapv(|v| v / count as f64);
                    centroids.column_mut(c).assign(&mean);
                } else {
                    let far = (0..n)
                        .filter(|&i| !taken[i])
                        .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                        .unwrap_or(0);
                    taken[far] = true;
                    centroids.column_mut(c).assign(&x.row(far));
                }
            }
        }
        Ok(Self { centroids })
    }

    pub fn clusters(&self) -> usize {
        self.centroids.ncols()
    }

    /// Mean squared distance from each row to its nearest centroid.
    pub fn distortion(&self, x: &DataMatrix) -> Result<f64> {
        if x.ncols() != self.centroids.nrows() {
            return Err(Error::dim("data and centroid dimensions differ"));
        }
        let (_, dist) = assign_nearest(x, &self.centroids);
        Ok(dist.iter().sum::<f64>() / x.nrows().max(1) as f64)
    }
}

fn assign_nearest(x: &DataMatrix, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let k = centroids.ncols();
    let mut assign = vec![0usize; x.nrows()];
    let mut dist = vec![0f64; x.nrows()];
    Zip::from(x.rows())
        .and(&mut assign)
        .and(&mut dist)
        .for_each(|row, a, best| {
            *best = f64::INFINITY;
            for c in 0..k {
                let d2: f64 = row
                    .iter()
                    .zip(centroids.column(c).iter())
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum();
                if d2 < *best {
                    *best = d2;
                    *a = c;
                }
            }
        });
    (assign, dist)
}
