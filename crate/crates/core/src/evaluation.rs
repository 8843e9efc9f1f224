//! Feature extraction, softmax regression and the experiment drivers.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::activations::Activation;
use crate::datasets::{crop_center_patches, LabeledImageSet};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, KMeans, Regularizer};
use crate::preprocessing::{contrast_normalize, WhiteningTransform};
use crate::rng::{self, Stream};
use crate::training::{sgd_train, TrainConfig};
use crate::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InferenceScheme {
    /// `max(0, Wᵀx + b)`
    ReluWithBias,
    /// `max(0, Wᵀx)`
    ReluNoBias,
    /// The training activation applied to `Wᵀx + b`.
    Natural,
}

impl InferenceScheme {
    pub const ALL: [InferenceScheme; 3] = [
        InferenceScheme::ReluWithBias,
        InferenceScheme::ReluNoBias,
        InferenceScheme::Natural,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InferenceScheme::ReluWithBias => "relu-bias",
            InferenceScheme::ReluNoBias => "relu-nobias",
            InferenceScheme::Natural => "natural",
        }
    }
}

impl fmt::Display for InferenceScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InferenceScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown inference scheme {s:?}")))
    }
}

/// Anything features can be extracted from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    Autoencoder(Autoencoder),
    /// Encoded with the zero-bias ReLU `max(0, cᵀx)` under every scheme; the
    /// triangle activation is nearly identical because the mean preactivation
    /// is close to zero.
    KMeans(KMeans),
}

impl FeatureModel {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureModel::Autoencoder(m) => m.input_dim(),
            FeatureModel::KMeans(k) => k.centroids.nrows(),
        }
    }

    pub fn features(&self) -> usize {
        match self {
            FeatureModel::Autoencoder(m) => m.hidden_units(),
            FeatureModel::KMeans(k) => k.clusters(),
        }
    }

    /// The model as an autoencoder; K-means centroids become zero-bias ReLU weights.
    pub fn into_autoencoder(self) -> Autoencoder {
        match self {
            FeatureModel::Autoencoder(m) => m,
            FeatureModel::KMeans(k) => {
                let (d, c) = k.centroids.dim();
                Autoencoder {
                    weights: k.centroids,
                    hidden_bias: Array1::zeros(c),
                    visible_bias: Array1::zeros(d),
                    activation: Activation::ZeroBiasRelu,
                }
            }
        }
    }
}

pub fn extract_features(
    model: &FeatureModel,
    x: &DataMatrix,
    scheme: InferenceScheme,
) -> Result<DataMatrix> {
    if x.ncols() != model.input_dim() {
        return Err(Error::dim(format!(
            "model expects {} inputs, data has {}",
            model.input_dim(),
            x.ncols()
        )));
    }
    match model {
        FeatureModel::KMeans(k) => Ok(x.dot(&k.centroids).mapv_into(|a| a.max(0.0))),
        FeatureModel::Autoencoder(m) => {
            let linear = x.dot(&m.weights);
            Ok(match scheme {
                InferenceScheme::ReluNoBias => linear.mapv_into(|a| a.max(0.0)),
                InferenceScheme::ReluWithBias => {
                    (linear + &m.hidden_bias).mapv_into(|a| a.max(0.0))
                }
                InferenceScheme::Natural => {
                    let act = m.activation;
                    (linear + &m.hidden_bias).mapv_into(|a| act.forward(a))
                }
            })
        }
    }
}

/// Multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// `K × C`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegConfig {
    pub iters: usize,
    /// Step size; `None` picks `1/L` from a power-iteration estimate of the
    /// objective's smoothness constant.
    pub lr: Option<f64>,
    pub momentum: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            lr: None,
            momentum: 0.9,
        }
    }
}

impl Classifier {
    pub fn classes(&self) -> usize {
        self.biases.len()
    }

    /// Row-wise softmax of `Fᵀ·W + b`.
    pub fn predict_proba(&self, f: &DataMatrix) -> Result<DataMatrix> {
        if f.ncols() != self.weights.nrows() {
            return Err(Error::dim(format!(
                "classifier expects {} features, got {}",
                self.weights.nrows(),
                f.ncols()
            )));
        }
        let mut logits = f.dot(&self.weights) + &self.biases;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    pub fn predict(&self, f: &DataMatrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(f)?;
        Ok(p.rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    pub fn accuracy(&self, f: &DataMatrix, labels: &[usize]) -> Result<f64> {
        Ok(correct(&self.predict(f)?, labels) as f64 / labels.len().max(1) as f64)
    }
}

fn correct(pred: &[usize], labels: &[usize]) -> usize {
    pred.iter().zip(labels).filter(|(p, l)| p == l).count()
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn check_labels(f: &DataMatrix, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != f.nrows() {
        return Err(Error::dim(format!(
            "{} labels for {} feature rows",
            labels.len(),
            f.nrows()
        )));
    }
    if f.nrows() == 0 {
        return Err(Error::invalid("no training samples"));
    }
    if classes == 0 {
        return Err(Error::invalid("need at least one class"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} outside [0, {classes})"
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite feature value".into()));
    }
    Ok(())
}

/// Mean cross-entropy plus `decay·‖W‖²`, and its gradient `(dW, db)`.
pub fn logreg_loss_and_grads(
    clf: &Classifier,
    f: &DataMatrix,
    labels: &[usize],
) -> Result<(f64, Array2<f64>, Array1<f64>)> {
    let n = f.nrows() as f64;
    let mut g = clf.predict_proba(f)?;
    let mut loss = 0.0;
    for (mut row, &l) in g.rows_mut().into_iter().zip(labels) {
        loss -= row[l].max(f64::MIN_POSITIVE).ln();
        row[l] -= 1.0;
    }
    loss /= n;
    loss += clf.weight_decay * clf.weights.mapv(|w| w * w).sum();
    g /= n;
    let g_w = f.t().dot(&g) + &clf.weights * (2.0 * clf.weight_decay);
    let g_b = g.sum_axis(Axis(0));
    Ok((loss, g_w, g_b))
}

/// Largest eigenvalue of `[F 1]ᵀ[F 1]/N` by power iteration.
fn gram_spectral_norm(f: &DataMatrix) -> f64 {
    let (n, k) = f.dim();
    let mut v = Array1::from_elem(k + 1, 1.0 / ((k + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..50 {
        let u = f.dot(&v.slice(ndarray::s![..k])) + v[k];
        let mut w = Array1::zeros(k + 1);
        w.slice_mut(ndarray::s![..k]).assign(&f.t().dot(&u));
        w[k] = u.sum();
        w /= n as f64;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda
}

pub fn logreg_train(
    f: &DataMatrix,
    labels: &[usize],
    classes: usize,
    weight_decay: f64,
    cfg: &LogRegConfig,
) -> Result<Classifier> {
    check_labels(f, labels, classes)?;
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::invalid(
            "weight decay must be finite and non-negative",
        ));
    }
    let k = f.ncols();
    let mut clf = Classifier {
        weights: Array2::zeros((k, classes)),
        biases: Array1::zeros(classes),
        weight_decay,
    };
    // Softmax cross-entropy has logit curvature at most 1/2. The biases are not
    // decayed, so they get the step of the data term alone.
    let (lr_w, lr_b) = match cfg.lr {
        Some(lr) => (lr, lr),
        None => {
            let data = 0.55 * gram_spectral_norm(f);
            (
                1.0 / (data + 2.0 * weight_decay).max(1e-12),
                1.0 / data.max(1e-12),
            )
        }
    };
    let mut v_w = Array2::<f64>::zeros((k, classes));
    let mut v_b = Array1::<f64>::zeros(classes);
    for it in 0..cfg.iters {
        let (loss, g_w, g_b) = logreg_loss_and_grads(&clf, f, labels)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite classifier loss at iteration {it}"
            )));
        }
        v_w *= cfg.momentum;
        v_w.scaled_add(-lr_w, &g_w);
        clf.weights += &v_w;
        v_b *= cfg.momentum;
        v_b.scaled_add(-lr_b, &g_b);
        clf.biases += &v_b;
    }
    Ok(clf)
}

/// Pick the decay with the best accuracy on a seeded holdout split; ties go to
/// the smaller decay.
pub fn cross_validate_decay(
    f: &DataMatrix,
    labels: &[usize],
    classes: usize,
    grid: &[f64],
    holdout_size: usize,
    cfg: &LogRegConfig,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("empty weight-decay grid"));
    }
    check_labels(f, labels, classes)?;
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let n = f.nrows();
    if holdout_size == 0 || holdout_size >= n {
        return Err(Error::invalid(format!(
            "holdout size {holdout_size} must lie in [1, {n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Stream::CvSplit));
    let (held, rest) = order.split_at(holdout_size);
    let f_train = f.select(Axis(0), rest);
    let l_train: Vec<usize> = rest.iter().map(|&i| labels[i]).collect();
    let f_held = f.select(Axis(0), held);
    let l_held: Vec<usize> = held.iter().map(|&i| labels[i]).collect();

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let scores: Vec<Result<usize>> = sorted
        .par_iter()
        .map(|&decay| {
            let clf = logreg_train(&f_train, &l_train, classes, decay, cfg)?;
            Ok(correct(&clf.predict(&f_held)?, &l_held))
        })
        .collect();
    let mut best = (sorted[0], None::<usize>);
    for (decay, score) in sorted.iter().zip(scores) {
        let score = score?;
        if best.1.is_none_or(|b| score > b) {
            best = (*decay, Some(score));
        }
    }
    Ok(best.0)
}

/// Per-column standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(f: &DataMatrix) -> Self {
        let mean = f
            .mean_axis(Axis(0))
            .unwrap_or_else(|| Array1::zeros(f.ncols()));
        let var = f.var_axis(Axis(0), 0.0);
        let scale = var.mapv(|v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, f: &DataMatrix) -> DataMatrix {
        (f - &self.mean) * &self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Trec {
        theta: f64,
    },
    Tlin {
        theta: f64,
    },
    /// ReLU denoising autoencoder.
    Dae {
        p: f64,
    },
    /// Sigmoid contractive autoencoder.
    Cae {
        lambda: f64,
    },
    KMeans {
        iters: usize,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Trec { .. } => "trec",
            ModelKind::Tlin { .. } => "tlin",
            ModelKind::Dae { .. } => "dae",
            ModelKind::Cae { .. } => "cae",
            ModelKind::KMeans { .. } => "kmeans",
        }
    }

    /// Training activation and regularizer; `None` for K-means.
    pub fn autoencoder_setup(&self) -> Result<Option<(Activation, Regularizer)>> {
        Ok(Some(match *self {
            ModelKind::Trec { theta } => (Activation::trec(theta)?, Regularizer::None),
            ModelKind::Tlin { theta } => (Activation::tlin(theta)?, Regularizer::None),
            ModelKind::Dae { p } => (Activation::Relu, Regularizer::Denoising { p }),
            ModelKind::Cae { lambda } => (Activation::Sigmoid, Regularizer::Contractive { lambda }),
            ModelKind::KMeans { .. } => return Ok(None),
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub train: TrainConfig,
    /// Weight init standard deviation is `init_scale/√D`.
    pub init_scale: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, train: TrainConfig) -> Self {
        Self {
            kind,
            train,
            init_scale: 1.0,
        }
    }

    pub fn fit(&self, x: &DataMatrix, hidden: usize) -> Result<FeatureModel> {
        match self.kind.autoencoder_setup()? {
            None => {
                let ModelKind::KMeans { iters } = self.kind else {
                    unreachable!()
                };
                Ok(FeatureModel::KMeans(KMeans::train(
                    x,
                    hidden,
                    iters,
                    self.train.seed,
                )?))
            }
            Some((act, reg)) => {
                let init =
                    Autoencoder::random(x.ncols(), hidden, act, self.init_scale, self.train.seed)?;
                let mut train = self.train.clone();
                train.batch_size = train.batch_size.min(x.nrows());
                Ok(FeatureModel::Autoencoder(sgd_train(
                    &init,
                    x,
                    &train,
                    reg,
                    |_| {},
                )?))
            }
        }
    }
}

/// Preprocessing and classification settings shared by every driver.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub variance_retained: f64,
    pub whiten: bool,
    pub scheme: InferenceScheme,
    pub classifier: LogRegConfig,
    pub decay_grid: Vec<f64>,
    /// Capped at a fifth of the training set.
    pub holdout: usize,
    pub seed: u64,
    /// Worker threads for independent sweep entries.
    pub jobs: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            variance_retained: 0.99,
            whiten: true,
            scheme: InferenceScheme::ReluNoBias,
            classifier: LogRegConfig::default(),
            decay_grid: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            holdout: 10_000,
            seed: 0,
            jobs: 1,
        }
    }
}

/// Contrast-normalized, PCA-projected train and test matrices.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: DataMatrix,
    pub train_labels: Vec<usize>,
    pub test: DataMatrix,
    pub test_labels: Vec<usize>,
    pub transform: WhiteningTransform,
}

impl Protocol {
    pub fn prepare(&self, train: &LabeledImageSet, test: &LabeledImageSet) -> Result<PreparedData> {
        let train_x = contrast_normalize(&train.images)?;
        let test_x = contrast_normalize(&test.images)?;
        let transform = WhiteningTransform::fit(&train_x, self.variance_retained, self.whiten)?;
        Ok(PreparedData {
            train: transform.apply(&train_x)?,
            train_labels: train.labels.iter().map(|&l| l as usize).collect(),
            test: transform.apply(&test_x)?,
            test_labels: test.labels.iter().map(|&l| l as usize).collect(),
            transform,
        })
    }

    /// Standardize, cross-validate the decay, train, and score on the test split.
    pub fn classify(
        &self,
        train_f: &DataMatrix,
        train_labels: &[usize],
        test_f: &DataMatrix,
        test_labels: &[usize],
    ) -> Result<ClassificationResult> {
        let classes = train_labels
            .iter()
            .chain(test_labels)
            .max()
            .map_or(1, |m| m + 1);
        let std = Standardizer::fit(train_f);
        let train_s = std.apply(train_f);
        let test_s = std.apply(test_f);
        let holdout = self.holdout.min(train_f.nrows() / 5).max(1);
        let decay = cross_validate_decay(
            &train_s,
            train_labels,
            classes,
            &self.decay_grid,
            holdout,
            &self.classifier,
            self.seed,
        )?;
        let clf = logreg_train(&train_s, train_labels, classes, decay, &self.classifier)?;
        Ok(ClassificationResult {
            weight_decay: decay,
            train_accuracy: clf.accuracy(&train_s, train_labels)?,
            test_accuracy: clf.accuracy(&test_s, test_labels)?,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationResult {
    pub weight_decay: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSweepRow {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSweepRow {
    pub p: usize,
    pub model: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeRow {
    pub scheme: InferenceScheme,
    pub accuracy: f64,
}

/// Train one model per feature count and report test accuracy.
pub fn run_feature_sweep(
    data: &PreparedData,
    spec: &ModelSpec,
    counts: &[usize],
    protocol: &Protocol,
) -> Result<Vec<FeatureSweepRow>> {
    let rows: Vec<Result<FeatureSweepRow>> = protocol.pool()?.install(|| {
        counts
            .par_iter()
            .map(|&k| {
                let model = spec.fit(&data.train, k)?;
                let acc = evaluate_model(&model, data, protocol.scheme, protocol)?;
                Ok(FeatureSweepRow { k, accuracy: acc })
            })
            .collect()
    });
    rows.into_iter().collect()
}

/// Accuracy of a linear classifier on the preprocessed inputs themselves.
pub fn raw_input_accuracy(data: &PreparedData, protocol: &Protocol) -> Result<f64> {
    Ok(protocol
        .classify(
            &data.train,
            &data.train_labels,
            &data.test,
            &data.test_labels,
        )?
        .test_accuracy)
}

fn evaluate_model(
    model: &FeatureModel,
    data: &PreparedData,
    scheme: InferenceScheme,
    protocol: &Protocol,
) -> Result<f64> {
    let train_f = extract_features(model, &data.train, scheme)?;
    let test_f = extract_features(model, &data.test, scheme)?;
    Ok(protocol
        .classify(&train_f, &data.train_labels, &test_f, &data.test_labels)?
        .test_accuracy)
}

/// For each patch size, center-crop, preprocess, and evaluate every model.
pub fn run_patchsize_sweep(
    train: &LabeledImageSet,
    test: &LabeledImageSet,
    specs: &[ModelSpec],
    patch_sizes: &[usize],
    hidden: usize,
    protocol: &Protocol,
) -> Result<Vec<PatchSweepRow>> {
    let mut prepared = Vec::with_capacity(patch_sizes.len());
    for &p in patch_sizes {
        let tr = crop_center_patches(train, p)?;
        let te = crop_center_patches(test, p)?;
        prepared.push(protocol.prepare(&tr, &te)?);
    }
    let jobs: Vec<(usize, usize)> = (0..patch_sizes.len())
        .flat_map(|i| (0..specs.len()).map(move |j| (i, j)))
        .collect();
    let rows: Vec<Result<PatchSweepRow>> = protocol.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(i, j)| {
                let model = specs[j].fit(&prepared[i].train, hidden)?;
                let acc = evaluate_model(&model, &prepared[i], protocol.scheme, protocol)?;
                Ok(PatchSweepRow {
                    p: patch_sizes[i],
                    model: specs[j].kind.name().to_string(),
                    accuracy: acc,
                })
            })
            .collect()
    });
    rows.into_iter().collect()
}

/// One trained model, all three inference schemes, the same classifier protocol.
pub fn run_inference_comparison(
    model: &FeatureModel,
    data: &PreparedData,
    protocol: &Protocol,
) -> Result<Vec<SchemeRow>> {
    let rows: Vec<Result<SchemeRow>> = protocol.pool()?.install(|| {
        InferenceScheme::ALL
            .par_iter()
            .map(|&scheme| {
                Ok(SchemeRow {
                    scheme,
                    accuracy: evaluate_model(model, data, scheme, protocol)?,
                })
            })
            .collect()
    });
    rows.into_iter().collect()
}

pub fn feature_sweep_csv(rows: &[FeatureSweepRow]) -> String {
    let mut s = String::from("k,accuracy\n");
    for r in rows {
        s.push_str(&format!("{},{:?}\n", r.k, r.accuracy));
    }
    s
}

pub fn patch_sweep_csv(rows: &[PatchSweepRow]) -> String {
    let mut s = String::from("p,model,accuracy\n");
    for r in rows {
        s.push_str(&format!("{},{},{:?}\n", r.p, r.model, r.accuracy));
    }
    s
}

pub fn scheme_csv(rows: &[SchemeRow]) -> String {
    let mut s = String::from("scheme,accuracy\n");
    for r in rows {
        s.push_str(&format!("{},{:?}\n", r.scheme, r.accuracy));
    }
    s
}
