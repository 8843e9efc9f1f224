use clap::Args;
use zae_core::evaluation::{FeatureModel, ModelKind, ModelSpec};
use zae_core::formats::{load_matrix, save_model};
use zae_core::models::{Autoencoder, KMeans};
use zae_core::training::{sgd_train, EpochMetrics, TrainConfig, TrainCurve};

use crate::error::{write_file, CliError, CliResult};
use crate::manifest::Run;
use crate::settings::Settings;
use crate::Ctx;

/// Model hyperparameters shared by `train` and the sweep drivers.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// Threshold for trec/tlin [default: 1.0].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Zero-mask probability for dae [default: 0.5].
    #[arg(long)]
    pub reg_p: Option<f64>,
    /// Contraction strength for cae [default: 1.0].
    #[arg(long)]
    pub reg_lambda: Option<f64>,
    /// Lloyd iterations for kmeans [default: 20].
    #[arg(long)]
    pub kmeans_iters: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size [default: 100].
    #[arg(long)]
    pub batch: Option<usize>,
    /// [default: 1e-4]
    #[arg(long)]
    pub lr_warmup: Option<f64>,
    /// [default: 1e-3]
    #[arg(long)]
    pub lr_main: Option<f64>,
    /// [default: 3]
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    /// [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Reshuffle every epoch [default: true].
    #[arg(long)]
    pub shuffle: Option<bool>,
    /// Initial weight std is init_scale/√D [default: 1.0].
    #[arg(long)]
    pub init_scale: Option<f64>,
}

pub const MODEL_NAMES: [&str; 5] = ["trec", "tlin", "dae", "cae", "kmeans"];

fn check_name(name: &str) -> CliResult<()> {
    if MODEL_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "unknown model {name:?}; expected one of {}",
            MODEL_NAMES.join(", ")
        )))
    }
}

/// Resolve hyperparameters for the named model kinds. With `strict`, flags
/// that none of the kinds use are rejected.
pub fn model_specs(
    s: &Settings,
    names: &[String],
    f: ModelFlags,
    seed: u64,
    strict: bool,
) -> CliResult<Vec<ModelSpec>> {
    for n in names {
        check_name(n)?;
    }
    let uses = |kinds: &[&str]| names.iter().any(|n| kinds.contains(&n.as_str()));
    let theta = s.optional("theta", f.theta)?;
    let reg_p = s.optional("reg_p", f.reg_p)?;
    let reg_lambda = s.optional("reg_lambda", f.reg_lambda)?;
    let kmeans_iters = s.optional("kmeans_iters", f.kmeans_iters)?;
    if strict {
        let unused = [
            ("theta", theta.is_some() && !uses(&["trec", "tlin"])),
            ("reg-p", reg_p.is_some() && !uses(&["dae"])),
            ("reg-lambda", reg_lambda.is_some() && !uses(&["cae"])),
            ("kmeans-iters", kmeans_iters.is_some() && !uses(&["kmeans"])),
        ];
        if let Some((flag, _)) = unused.iter().find(|(_, bad)| *bad) {
            return Err(CliError::usage(format!(
                "--{flag} does not apply to model {}",
                names.join(",")
            )));
        }
    }
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        epochs: s.value("epochs", f.epochs, defaults.epochs)?,
        batch_size: s.value("batch", f.batch, defaults.batch_size)?,
        lr_warmup: s.value("lr_warmup", f.lr_warmup, defaults.lr_warmup)?,
        lr_main: s.value("lr_main", f.lr_main, defaults.lr_main)?,
        warmup_epochs: s.value("warmup_epochs", f.warmup_epochs, defaults.warmup_epochs)?,
        momentum: s.value("momentum", f.momentum, defaults.momentum)?,
        seed,
        shuffle: s.value("shuffle", f.shuffle, defaults.shuffle)?,
    };
    train.validate()?;
    let init_scale = s.value("init_scale", f.init_scale, 1.0)?;
    names
        .iter()
        .map(|n| {
            let kind = match n.as_str() {
                "trec" => ModelKind::Trec {
                    theta: theta.unwrap_or(1.0),
                },
                "tlin" => ModelKind::Tlin {
                    theta: theta.unwrap_or(1.0),
                },
                "dae" => ModelKind::Dae {
                    p: reg_p.unwrap_or(0.5),
                },
                "cae" => ModelKind::Cae {
                    lambda: reg_lambda.unwrap_or(1.0),
                },
                _ => ModelKind::KMeans {
                    iters: kmeans_iters.unwrap_or(20),
                },
            };
            // Surface bad thresholds or probabilities as usage errors now.
            if let Some((_, reg)) = kind.autoencoder_setup()? {
                reg.validate()?;
            }
            Ok(ModelSpec {
                kind,
                train: train.clone(),
                init_scale,
            })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training matrix (ZMAT), one sample per row.
    #[arg(long)]
    pub data: Option<String>,
    /// trec | tlin | dae | cae | kmeans [default: trec].
    #[arg(long)]
    pub model: Option<String>,
    /// Hidden units or clusters.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    pub flags: ModelFlags,
    #[arg(long)]
    pub out_dir: Option<String>,
}

pub fn run(ctx: &Ctx, a: TrainArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let seed = ctx.seed()?;
    let data: String = s.required("data", a.data)?;
    let model: String = s.value("model", a.model, "trec".to_string())?;
    let hidden: usize = s.required("hidden", a.hidden)?;
    let out_dir: String = s.required("out_dir", a.out_dir)?;
    let spec = model_specs(s, std::slice::from_ref(&model), a.flags, seed, true)?
        .pop()
        .expect("one model");

    let mut run = Run::new("train", &out_dir, ctx.force, &ctx.argv);
    let data = run.input(&data);
    let model_out = run.output("model.zae");
    let curve_out = run.output("curve.csv");
    let x = load_matrix(&data)?;
    run.begin(s, seed)?;

    let mut curve = TrainCurve::default();
    let fitted = match spec.kind.autoencoder_setup()? {
        Some((act, reg)) => {
            let init = Autoencoder::random(x.ncols(), hidden, act, spec.init_scale, seed)?;
            sgd_train(&init, &x, &spec.train, reg, |m: &EpochMetrics| {
                curve.record(m)
            })?
        }
        None => {
            let ModelKind::KMeans { iters } = spec.kind else {
                unreachable!("only K-means lacks an autoencoder setup")
            };
            let km = KMeans::train(&x, hidden, iters, seed)?;
            curve.record(&EpochMetrics {
                epoch: iters,
                loss: km.distortion(&x)?,
            });
            FeatureModel::KMeans(km).into_autoencoder()
        }
    };
    save_model(&model_out, &fitted)?;
    write_file(&curve_out, curve.to_csv())?;
    match curve.rows.last() {
        Some(last) => println!("train: {model} K={hidden}, final loss {:.6}", last.loss),
        None => println!("train: {model} K={hidden}, no epochs run"),
    }
    Ok(())
}
