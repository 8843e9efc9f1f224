//! Diagnostics on trained weights: active sets, fixed points, frames, bias
//! statistics and filter pictures.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::models::Autoencoder;
use crate::preprocessing::WhiteningTransform;
use crate::DataMatrix;

/// Eigenvalues closer than this to 1 count toward the null space of `W_S W_Sᵀ − I`.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-6;

/// Hidden units that respond to an input, in increasing order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }
}

fn check_input(model: &Autoencoder, x: ArrayView1<'_, f64>) -> Result<()> {
    if x.len() != model.input_dim() {
        return Err(Error::dim(format!(
            "model expects {} inputs, vector has {}",
            model.input_dim(),
            x.len()
        )));
    }
    Ok(())
}

/// Preactivation of every unit, bias included for the affine kinds.
fn responses(model: &Autoencoder, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut a = x.dot(&model.weights);
    if !model.activation.is_zero_bias() {
        a += &model.hidden_bias;
    }
    a
}

/// Units with `w_kᵀx + b_k > 0`, or with a nonzero thresholded response for
/// TRec and TLin.
pub fn active_set(model: &Autoencoder, x: ArrayView1<'_, f64>) -> Result<ActiveSet> {
    check_input(model, x)?;
    let act = model.activation;
    let indices = responses(model, x)
        .iter()
        .enumerate()
        .filter(|(_, &a)| act.is_active(a))
        .map(|(k, _)| k)
        .collect();
    Ok(ActiveSet { indices })
}

fn columns(w: &Array2<f64>, set: &ActiveSet) -> Array2<f64> {
    w.select(Axis(1), &set.indices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub active: ActiveSet,
    /// `‖W_S(W_Sᵀx + b_S) + c − x‖`.
    pub residual_norm: f64,
    /// Eigenvalues of `W_S W_Sᵀ`, non-increasing; empty for an empty active set.
    pub eigenvalues: Array1<f64>,
    /// Number of eigenvalues within [`UNIT_EIGENVALUE_TOL`] of 1.
    pub nullspace_dim: usize,
    /// `‖W_SᵀW_S − I‖_F`.
    pub orthonormality_error: f64,
}

/// Linearized fixed-point check at `x`.
///
/// On its active set a ReLU-type model is linear, so `x` is a fixed point iff
/// `W_S(W_Sᵀx + b_S) + c = x`.
pub fn fixed_point_report(model: &Autoencoder, x: ArrayView1<'_, f64>) -> Result<FixedPointReport> {
    if matches!(model.activation, Activation::Sigmoid) {
        return Err(Error::invalid(
            "fixed-point analysis needs a rectified model, not sigmoid",
        ));
    }
    let active = active_set(model, x)?;
    let ws = columns(&model.weights, &active);
    let mut code = x.dot(&ws);
    let mut recon = ws.dot(&code);
    if !model.activation.is_zero_bias() {
        code = model.hidden_bias.select(Axis(0), &active.indices);
        recon = ws.dot(&(x.dot(&ws) + &code)) + &model.visible_bias;
    }
    let residual_norm = (&recon - &x).mapv(|v| v * v).sum().sqrt();

    if active.is_empty() {
        return Ok(FixedPointReport {
            active,
            residual_norm,
            eigenvalues: Array1::zeros(0),
            nullspace_dim: 0,
            orthonormality_error: 0.0,
        });
    }
    let eigenvalues = symmetric_eigen(ws.dot(&ws.t()).view()).values;
    let nullspace_dim = eigenvalues
        .iter()
        .filter(|&&l| (l - 1.0).abs() <= UNIT_EIGENVALUE_TOL)
        .count();
    let gram = ws.t().dot(&ws) - Array2::<f64>::eye(active.len());
    let orthonormality_error = gram.mapv(|v| v * v).sum().sqrt();
    Ok(FixedPointReport {
        active,
        residual_norm,
        eigenvalues,
        nullspace_dim,
        orthonormality_error,
    })
}

/// Saturated-sigmoid approximation: the sum of weight vectors whose unit has a
/// non-negative preactivation.
pub fn sigmoid_binary_reconstruct(
    model: &Autoencoder,
    x: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if !matches!(model.activation, Activation::Sigmoid) {
        return Err(Error::invalid(format!(
            "binary reconstruction applies to sigmoid models, not {}",
            model.activation.name()
        )));
    }
    check_input(model, x)?;
    let a = responses(model, x);
    let mut out = Array1::zeros(model.input_dim());
    for (k, &ak) in a.iter().enumerate() {
        if ak >= 0.0 {
            out += &model.weights.column(k);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl RatioStats {
    /// Order statistics of a non-empty sample; the median of an even count is
    /// the mean of the two middle values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    /// `Σ_k w_k w_kᵀ`, `D × D`.
    pub frame_operator: Array2<f64>,
    /// Column `k` is `frame_operator⁻¹ · w_k`.
    pub dual_frame: Array2<f64>,
    /// Per-probe `Σ_{k∈S(x)} (w_kᵀx)² / ‖x‖²`, in probe order.
    pub parseval_ratios: Vec<f64>,
    pub parseval_ratio_stats: RatioStats,
}

/// Energy captured by the active units relative to `‖x‖²`.
pub fn parseval_ratio(model: &Autoencoder, x: ArrayView1<'_, f64>) -> Result<f64> {
    check_input(model, x)?;
    let norm2 = x.dot(&x);
    if norm2 == 0.0 {
        return Err(Error::invalid("Parseval ratio of a zero probe"));
    }
    let act = model.activation;
    let proj = x.dot(&model.weights);
    let mut energy = 0.0;
    for (p, a) in proj.iter().zip(responses(model, x).iter()) {
        if act.is_active(*a) {
            energy += p * p;
        }
    }
    Ok(energy / norm2)
}

pub fn frame_report(model: &Autoencoder, probe: &DataMatrix) -> Result<FrameReport> {
    if probe.ncols() != model.input_dim() {
        return Err(Error::dim(format!(
            "model expects {} inputs, probe has {}",
            model.input_dim(),
            probe.ncols()
        )));
    }
    if probe.nrows() == 0 {
        return Err(Error::invalid("empty probe set"));
    }
    let w = &model.weights;
    let s = w.dot(&w.t());
    let frame_operator = (&s + &s.t()) * 0.5;

    let eig = symmetric_eigen(frame_operator.view());
    let top = eig.values.first().copied().unwrap_or(0.0);
    let bottom = eig.values.last().copied().unwrap_or(0.0);
    let d = frame_operator.nrows();
    if top.is_nan() || top <= 0.0 || bottom <= top * d as f64 * f64::EPSILON * 16.0 {
        return Err(Error::Numerical("weights do not span data space".into()));
    }
    let inv = eig
        .vectors
        .dot(&Array2::from_diag(&eig.values.mapv(|l| 1.0 / l)))
        .dot(&eig.vectors.t());
    let dual_frame = inv.dot(w);

    let parseval_ratios = probe
        .rows()
        .into_iter()
        .map(|x| parseval_ratio(model, x))
        .collect::<Result<Vec<_>>>()?;
    let parseval_ratio_stats = RatioStats::of(&parseval_ratios).expect("non-empty probe");
    Ok(FrameReport {
        frame_operator,
        dual_frame,
        parseval_ratios,
        parseval_ratio_stats,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasHistogram {
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    pub fraction_negative: f64,
}

impl BiasHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_low,bin_high,count\n");
        for b in &self.bins {
            writeln!(s, "{},{},{}", b.low, b.high, b.count).unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "metric,value\nmean,{}\nfraction_negative,{}\n",
            self.mean, self.fraction_negative
        )
    }
}

/// Equal-width histogram of the hidden biases over their observed range. The
/// last bin is closed. A degenerate range collapses to one bin.
pub fn bias_histogram(model: &Autoencoder, bins: usize) -> Result<BiasHistogram> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let b = &model.hidden_bias;
    let k = b.len();
    let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = b.mean().unwrap_or(0.0);
    let fraction_negative = b.iter().filter(|&&v| v < 0.0).count() as f64 / k.max(1) as f64;
    let bins = if hi > lo {
        let width = (hi - lo) / bins as f64;
        let mut out: Vec<HistogramBin> = (0..bins)
            .map(|i| HistogramBin {
                low: lo + i as f64 * width,
                high: if i + 1 == bins {
                    hi
                } else {
                    lo + (i + 1) as f64 * width
                },
                count: 0,
            })
            .collect();
        for &v in b {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            out[i].count += 1;
        }
        out
    } else {
        let v = if k == 0 { 0.0 } else { lo };
        vec![HistogramBin {
            low: v,
            high: v,
            count: k,
        }]
    };
    Ok(BiasHistogram {
        bins,
        mean,
        fraction_negative,
    })
}

/// How a back-projected weight vector maps onto pixels.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterLayout {
    /// Channel-major images; 3 channels render as RGB, 1 as grey.
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Frame-major grey videos; one grid per selected frame (0-based).
    Video {
        frames: usize,
        size: usize,
        selected: Vec<usize>,
    },
}

impl FilterLayout {
    fn pixels(&self) -> usize {
        match self {
            FilterLayout::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            FilterLayout::Video { frames, size, .. } => frames * size * size,
        }
    }
}

/// One tiled RGB picture of all filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGrid {
    /// `Some(t)` for the grid of video frame `t`.
    pub frame: Option<usize>,
    /// Cells per side, `ceil(√K)`.
    pub cells: usize,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl FilterGrid {
    pub fn to_ppm(&self) -> Vec<u8> {
        crate::formats::encode_ppm(self.width, self.height, &self.rgb).expect("sized grid")
    }
}

/// Filters in input space: `invert(w_k) − invert(0)`, one row per unit.
pub fn back_project(model: &Autoencoder, transform: &WhiteningTransform) -> Result<DataMatrix> {
    if transform.output_dim() != model.input_dim() {
        return Err(Error::dim(format!(
            "transform yields {} dimensions, model expects {}",
            transform.output_dim(),
            model.input_dim()
        )));
    }
    let filters = transform.invert(&model.weights.t().to_owned())?;
    let origin = transform.invert(&Array2::zeros((1, model.input_dim())))?;
    Ok(filters - origin.row(0))
}

fn unit_range(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.mapv(|x| (x - lo) / (hi - lo))
    } else {
        Array1::zeros(v.len())
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Back-project, normalize each filter to `[0, 1]` and tile into a square grid
/// with one-pixel black separators.
pub fn export_filters(
    model: &Autoencoder,
    transform: &WhiteningTransform,
    layout: &FilterLayout,
) -> Result<Vec<FilterGrid>> {
    if layout.pixels() != transform.input_dim() {
        return Err(Error::dim(format!(
            "layout covers {} values, transform input has {}",
            layout.pixels(),
            transform.input_dim()
        )));
    }
    let filters = back_project(model, transform)?;
    let normalized: Vec<Array1<f64>> = filters.rows().into_iter().map(unit_range).collect();
    let k = normalized.len();
    let cells = (k as f64).sqrt().ceil() as usize;
    let cells = if cells * cells < k { cells + 1 } else { cells };

    // (frame label, channel count, height, width, offset into filter)
    let views: Vec<(Option<usize>, usize, usize, usize, usize)> = match layout {
        FilterLayout::Image {
            channels,
            height,
            width,
        } => {
            if *channels != 1 && *channels != 3 {
                return Err(Error::invalid(format!(
                    "cannot render {channels}-channel filters"
                )));
            }
            vec![(None, *channels, *height, *width, 0)]
        }
        FilterLayout::Video {
            frames,
            size,
            selected,
        } => selected
            .iter()
            .map(|&t| {
                if t >= *frames {
                    Err(Error::invalid(format!("frame {t} outside 0..{frames}")))
                } else {
                    Ok((Some(t), 1, *size, *size, t * size * size))
                }
            })
            .collect::<Result<_>>()?,
    };

    let mut grids = Vec::with_capacity(views.len());
    for (frame, channels, h, w, offset) in views {
        let width = cells * (w + 1) + 1;
        let height = cells * (h + 1) + 1;
        let mut rgb = vec![0u8; 3 * width * height];
        for (i, f) in normalized.iter().enumerate() {
            let top = (i / cells) * (h + 1) + 1;
            let left = (i % cells) * (w + 1) + 1;
            for r in 0..h {
                for c in 0..w {
                    let px = 3 * ((top + r) * width + left + c);
                    for ch in 0..3 {
                        let src = if channels == 3 { ch } else { 0 };
                        rgb[px + ch] = to_byte(f[offset + src * h * w + r * w + c]);
                    }
                }
            }
        }
        grids.push(FilterGrid {
            frame,
            cells,
            width,
            height,
            rgb,
        });
    }
    Ok(grids)
}
