//! Minibatch SGD with classical momentum.
//!
//! The learning rate runs at `lr_warmup` for the first `warmup_epochs` epochs
//! and at `lr_main` afterwards. Updates follow `v ← μv − η∇`, `θ ← θ + v`.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{parse_bool, parse_value};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Regularizer};
use crate::rng::{self, Stream};
use crate::DataMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_warmup: f64,
    pub lr_main: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 100,
            lr_warmup: 1e-4,
            lr_main: 1e-3,
            warmup_epochs: 3,
            momentum: 0.9,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Keys this config understands, in the order [`to_key_values`](Self::to_key_values) emits them.
    pub const KEYS: [&'static str; 8] = [
        "epochs",
        "batch_size",
        "lr_warmup",
        "lr_main",
        "warmup_epochs",
        "momentum",
        "seed",
        "shuffle",
    ];

    /// Set one field by name. Returns `Ok(false)` for keys that belong elsewhere.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" | "batch" => self.batch_size = parse_value(key, value)?,
            "lr_warmup" => self.lr_warmup = parse_value(key, value)?,
            "lr_main" => self.lr_main = parse_value(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_value(key, value)?,
            "momentum" => self.momentum = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "shuffle" => self.shuffle = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let values = [
            self.epochs.to_string(),
            self.batch_size.to_string(),
            format!("{:?}", self.lr_warmup),
            format!("{:?}", self.lr_main),
            self.warmup_epochs.to_string(),
            format!("{:?}", self.momentum),
            self.seed.to_string(),
            self.shuffle.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.lr_warmup > 0.0 && self.lr_main > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            self.lr_warmup
        } else {
            self.lr_main
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean of the batch objectives over the epoch.
    pub loss: f64,
}

/// Train `model` in place of a copy and return the result.
///
/// `on_epoch` sees the metrics of every completed epoch.
pub fn sgd_train(
    model: &Autoencoder,
    x: &DataMatrix,
    cfg: &TrainConfig,
    reg: Regularizer,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Autoencoder> {
    cfg.validate()?;
    reg.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::invalid("training on an empty data matrix"));
    }
    if cfg.batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds the {n} training samples",
            cfg.batch_size
        )));
    }
    if x.ncols() != model.input_dim() {
        return Err(Error::dim(format!(
            "model expects {} inputs, data has {}",
            model.input_dim(),
            x.ncols()
        )));
    }

    let mut model = model.clone();
    let zero_bias = model.activation.is_zero_bias();
    let mut v_w = Array2::<f64>::zeros(model.weights.dim());
    let mut v_b = Array1::<f64>::zeros(model.hidden_units());
    let mut v_c = Array1::<f64>::zeros(model.input_dim());

    let mut shuffle_rng = rng::stream(cfg.seed, Stream::Shuffle);
    let mut corruption_rng = rng::stream(cfg.seed, Stream::Corruption);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let lr = cfg.learning_rate(epoch);
        let mut total = 0.0;
        for (batch_index, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = x.select(Axis(0), idx);
            let mask_seed: u64 = corruption_rng.random();
            let (loss, grads) = model.loss_and_grads(&batch, reg, mask_seed)?;
            if !loss.objective.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {}, batch {batch_index}",
                    epoch + 1
                )));
            }
            total += loss.objective * idx.len() as f64;

            v_w *= cfg.momentum;
            v_w.scaled_add(-lr, &grads.weights);
            model.weights += &v_w;
            if !zero_bias {
                v_b *= cfg.momentum;
                v_b.scaled_add(-lr, &grads.hidden_bias);
                model.hidden_bias += &v_b;
                v_c *= cfg.momentum;
                v_c.scaled_add(-lr, &grads.visible_bias);
                model.visible_bias += &v_c;
            }
        }
        on_epoch(&EpochMetrics {
            epoch: epoch + 1,
            loss: total / n as f64,
        });
    }
    Ok(model)
}

/// Accumulates per-epoch metrics into an `epoch,loss` table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainCurve {
    pub rows: Vec<EpochMetrics>,
}

impl TrainCurve {
    pub fn record(&mut self, m: &EpochMetrics) {
        self.rows.push(*m);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:?}", r.epoch, r.loss);
        }
        s
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
