//! Shared oracles for integration and acceptance tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use zae_core::activations::Activation;
use zae_core::models::{zero_mask, Autoencoder, Regularizer};
use zae_core::DataMatrix;

pub const FD_STEP: f64 = 1e-5;

pub fn activations() -> Vec<Activation> {
    vec![
        Activation::trec(0.5).unwrap(),
        Activation::tlin(0.5).unwrap(),
        Activation::Relu,
        Activation::Sigmoid,
        Activation::ZeroBiasRelu,
    ]
}

pub fn regularizers() -> Vec<Regularizer> {
    vec![
        Regularizer::None,
        Regularizer::Denoising { p: 0.3 },
        Regularizer::Contractive { lambda: 0.7 },
    ]
}

/// Distance from the nearest point where the activation's slope jumps.
fn kink_distance(act: Activation, a: f64) -> f64 {
    match act {
        Activation::TRec { theta } => (a - theta).abs(),
        Activation::TLin { theta } => (a.abs() - theta).abs(),
        Activation::Relu | Activation::ZeroBiasRelu => a.abs(),
        Activation::Sigmoid => f64::INFINITY,
    }
}

/// A random model and batch whose (possibly corrupted) preactivations all sit
/// at least `margin` from a kink, or `None` if this draw violates the guard.
pub fn instance(
    act: Activation,
    reg: Regularizer,
    dim: usize,
    hidden: usize,
    batch: usize,
    seed: u64,
    margin: f64,
) -> Option<(Autoencoder, DataMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |n: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let weights = Array2::from_shape_vec(
        (dim, hidden),
        normal(dim * hidden, 1.0 / (dim as f64).sqrt()),
    )
    .unwrap();
    let (b, c) = if act.is_zero_bias() {
        (Array1::zeros(hidden), Array1::zeros(dim))
    } else {
        (
            Array1::from(normal(hidden, 0.3)),
            Array1::from(normal(dim, 0.3)),
        )
    };
    let x = Array2::from_shape_vec((batch, dim), normal(batch * dim, 1.0)).unwrap();
    let model = Autoencoder::from_parts(weights, b, c, act).unwrap();
    let input = match reg {
        Regularizer::Denoising { p } => zero_mask(&x, p, seed),
        _ => x.clone(),
    };
    let pre = model.preactivations(&input).unwrap();
    if pre.iter().all(|&a| kink_distance(act, a) >= margin) {
        Some((model, x))
    } else {
        None
    }
}

fn objective(m: &Autoencoder, x: &DataMatrix, reg: Regularizer, seed: u64) -> f64 {
    m.loss_and_grads(x, reg, seed).unwrap().0.objective
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Largest entrywise relative error between the analytic gradient and central
/// differences, over every trainable parameter.
pub fn gradient_error(m: &Autoencoder, x: &DataMatrix, reg: Regularizer, seed: u64) -> f64 {
    let (_, g) = m.loss_and_grads(x, reg, seed).unwrap();
    let h = FD_STEP;
    let mut worst: f64 = 0.0;
    let (d, k) = m.weights.dim();
    for i in 0..d {
        for j in 0..k {
            let mut p = m.clone();
            p.weights[[i, j]] += h;
            let mut q = m.clone();
            q.weights[[i, j]] -= h;
            let n = (objective(&p, x, reg, seed) - objective(&q, x, reg, seed)) / (2.0 * h);
            worst = worst.max(rel_err(g.weights[[i, j]], n));
        }
    }
    if !m.activation.is_zero_bias() {
        for j in 0..k {
            let mut p = m.clone();
            p.hidden_bias[j] += h;
            let mut q = m.clone();
            q.hidden_bias[j] -= h;
            let n = (objective(&p, x, reg, seed) - objective(&q, x, reg, seed)) / (2.0 * h);
            worst = worst.max(rel_err(g.hidden_bias[j], n));
        }
        for i in 0..d {
            let mut p = m.clone();
            p.visible_bias[i] += h;
            let mut q = m.clone();
            q.visible_bias[i] -= h;
            let n = (objective(&p, x, reg, seed) - objective(&q, x, reg, seed)) / (2.0 * h);
            worst = worst.max(rel_err(g.visible_bias[i], n));
        }
    }
    worst
}

/// Draw `count` guarded instances for one combination and return the worst
/// gradient error among them.
pub fn worst_gradient_error(act: Activation, reg: Regularizer, count: usize, margin: f64) -> f64 {
    let mut found = 0;
    let mut seed = 0u64;
    let mut worst: f64 = 0.0;
    while found < count {
        if let Some((m, x)) = instance(act, reg, 6, 4, 10, seed, margin) {
            worst = worst.max(gradient_error(&m, &x, reg, seed));
            found += 1;
        }
        seed += 1;
        assert!(seed < 100_000, "margin guard rejects nearly every draw");
    }
    worst
}

/// `count` CIFAR-10 records with pixels from `pixel(record, index)`.
pub fn cifar_bytes(
    count: usize,
    label: impl Fn(usize) -> u8,
    pixel: impl Fn(usize, usize) -> u8,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(count * 3073);
    for r in 0..count {
        out.push(label(r));
        out.extend((0..3072).map(|i| pixel(r, i)));
    }
    out
}
