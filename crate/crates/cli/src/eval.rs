use std::path::Path;

use clap::{Args, Subcommand};
use zae_core::evaluation::{
    extract_features, feature_sweep_csv, patch_sweep_csv, run_feature_sweep,
    run_inference_comparison, run_patchsize_sweep, scheme_csv, FeatureModel, InferenceScheme,
    LogRegConfig, PreparedData, Protocol,
};
use zae_core::formats::{load_matrix, load_model, load_transform, save_matrix};

use crate::error::{write_file, CliError, CliResult};
use crate::manifest::Run;
use crate::prep::{load_cifar_subset, read_labels};
use crate::settings::Settings;
use crate::train::{model_specs, ModelFlags};
use crate::Ctx;

#[derive(Debug, Clone, Default, Args)]
pub struct ClassifierFlags {
    /// relu-nobias | relu-bias | natural [default: relu-nobias].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Candidate weight decays [default: 0,1e-4,1e-3,1e-2,1e-1].
    #[arg(long, value_delimiter = ',')]
    pub decay_grid: Vec<f64>,
    /// Cross-validation holdout size, capped at a fifth of the training set
    /// [default: 10000].
    #[arg(long)]
    pub holdout: Option<usize>,
    /// Gradient steps for the classifier [default: 500].
    #[arg(long)]
    pub classifier_iters: Option<usize>,
    #[arg(long)]
    pub train_subset: Option<usize>,
    #[arg(long)]
    pub test_subset: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Encode a matrix with a trained model.
    Features {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: Option<String>,
        /// [default: relu-nobias]
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Softmax regression on model features, or on the inputs without --model.
    Classify {
        /// Output directory of `prep` (train/test matrices and labels).
        #[arg(long)]
        data_dir: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Accuracy as a function of the number of features.
    SweepK {
        #[arg(long)]
        data_dir: Option<String>,
        /// [default: trec]
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        #[command(flatten)]
        flags: ModelFlags,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Accuracy as a function of the center-crop size, per model.
    SweepP {
        #[arg(long, value_delimiter = ',')]
        train_files: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        test_files: Vec<String>,
        /// [default: tlin,cae]
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// [default: 10,20,32]
        #[arg(long, value_delimiter = ',')]
        patch_sizes: Vec<usize>,
        /// [default: 500]
        #[arg(long)]
        hidden: Option<usize>,
        /// [default: 0.99]
        #[arg(long)]
        variance: Option<f64>,
        /// [default: true]
        #[arg(long)]
        whiten: Option<bool>,
        #[command(flatten)]
        flags: ModelFlags,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// One model under all three inference schemes.
    InferCompare {
        #[arg(long)]
        data_dir: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        classifier: ClassifierFlags,
        #[arg(long)]
        out_dir: Option<String>,
    },
}

fn scheme(s: &Settings, flag: Option<String>) -> CliResult<InferenceScheme> {
    let name = s.value(
        "scheme",
        flag,
        InferenceScheme::ReluNoBias.name().to_string(),
    )?;
    Ok(name.parse()?)
}

struct ClassifierSetup {
    protocol: Protocol,
    train_subset: Option<usize>,
    test_subset: Option<usize>,
}

fn classifier_setup(ctx: &Ctx, f: ClassifierFlags) -> CliResult<ClassifierSetup> {
    let s = &ctx.settings;
    let defaults = Protocol::default();
    let protocol = Protocol {
        scheme: scheme(s, f.scheme)?,
        decay_grid: s.list_or("decay_grid", f.decay_grid, &defaults.decay_grid)?,
        holdout: s.value("holdout", f.holdout, defaults.holdout)?,
        classifier: LogRegConfig {
            iters: s.value(
                "classifier_iters",
                f.classifier_iters,
                defaults.classifier.iters,
            )?,
            ..LogRegConfig::default()
        },
        seed: ctx.seed()?,
        jobs: ctx.jobs()?,
        ..defaults
    };
    if protocol
        .decay_grid
        .iter()
        .any(|d| !(*d >= 0.0 && d.is_finite()))
    {
        return Err(CliError::usage(
            "weight decays must be finite and non-negative",
        ));
    }
    Ok(ClassifierSetup {
        protocol,
        train_subset: s.optional("train_subset", f.train_subset)?,
        test_subset: s.optional("test_subset", f.test_subset)?,
    })
}

/// Declare the files of a `prep` output directory as run inputs.
fn prepared_inputs(run: &mut Run, dir: &str) -> [std::path::PathBuf; 5] {
    let dir = Path::new(dir);
    [
        "train.zmat",
        "train.labels",
        "test.zmat",
        "test.labels",
        "pca.zpca",
    ]
    .map(|f| run.input(dir.join(f)))
}

fn load_prepared(
    paths: &[std::path::PathBuf; 5],
    train_subset: Option<usize>,
    test_subset: Option<usize>,
) -> CliResult<PreparedData> {
    let head = |x: zae_core::DataMatrix, mut l: Vec<usize>, n: Option<usize>, what: &str| {
        if x.nrows() != l.len() {
            return Err(CliError::data(format!(
                "{what}: {} rows but {} labels",
                x.nrows(),
                l.len()
            )));
        }
        let n = n.unwrap_or(l.len()).min(l.len());
        l.truncate(n);
        Ok((x.slice(ndarray::s![..n, ..]).to_owned(), l))
    };
    let (train, train_labels) = head(
        load_matrix(&paths[0])?,
        read_labels(&paths[1])?,
        train_subset,
        "training split",
    )?;
    let (test, test_labels) = head(
        load_matrix(&paths[2])?,
        read_labels(&paths[3])?,
        test_subset,
        "test split",
    )?;
    Ok(PreparedData {
        train,
        train_labels,
        test,
        test_labels,
        transform: load_transform(&paths[4])?,
    })
}

pub fn run(ctx: &Ctx, cmd: EvalCommand) -> CliResult<()> {
    let s = &ctx.settings;
    match cmd {
        EvalCommand::Features {
            model,
            data,
            scheme: scheme_flag,
            out_dir,
        } => {
            let model_path: String = s.required("model", model)?;
            let data_path: String = s.required("data", data)?;
            let scheme = scheme(s, scheme_flag)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let seed = ctx.seed()?;
            let mut run = Run::new("eval-features", &out_dir, ctx.force, &ctx.argv);
            let model_path = run.input(&model_path);
            let data_path = run.input(&data_path);
            let out = run.output("features.zmat");
            let model = FeatureModel::Autoencoder(load_model(&model_path)?);
            let x = load_matrix(&data_path)?;
            run.begin(s, seed)?;
            let f = extract_features(&model, &x, scheme)?;
            save_matrix(&out, &f)?;
            println!("features: {} rows × {} features", f.nrows(), f.ncols());
        }
        EvalCommand::Classify {
            data_dir,
            model,
            classifier,
            out_dir,
        } => {
            let data_dir: String = s.required("data_dir", data_dir)?;
            let model_path: Option<String> = s.optional("model", model)?;
            let setup = classifier_setup(ctx, classifier)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("eval-classify", &out_dir, ctx.force, &ctx.argv);
            let paths = prepared_inputs(&mut run, &data_dir);
            let model_path = model_path.map(|m| run.input(m));
            let out = run.output("classify.csv");
            let data = load_prepared(&paths, setup.train_subset, setup.test_subset)?;
            let model = model_path
                .map(|p| load_model(&p).map(FeatureModel::Autoencoder))
                .transpose()?;
            run.begin(s, setup.protocol.seed)?;
            let p = &setup.protocol;
            let (train_f, test_f) = match &model {
                Some(m) => (
                    extract_features(m, &data.train, p.scheme)?,
                    extract_features(m, &data.test, p.scheme)?,
                ),
                None => (data.train.clone(), data.test.clone()),
            };
            let r = p.classify(&train_f, &data.train_labels, &test_f, &data.test_labels)?;
            write_file(
                &out,
                format!(
                    "metric,value\nweight_decay,{:?}\ntrain_accuracy,{:?}\ntest_accuracy,{:?}\n",
                    r.weight_decay, r.train_accuracy, r.test_accuracy
                ),
            )?;
            println!(
                "classify: test accuracy {:.4} (decay {})",
                r.test_accuracy, r.weight_decay
            );
        }
        EvalCommand::SweepK {
            data_dir,
            model,
            counts,
            flags,
            classifier,
            out_dir,
        } => {
            let data_dir: String = s.required("data_dir", data_dir)?;
            let name: String = s.value("model", model, "trec".to_string())?;
            let counts = s
                .list("counts", counts)?
                .ok_or_else(|| CliError::usage("missing --counts"))?;
            let setup = classifier_setup(ctx, classifier)?;
            let spec = model_specs(s, &[name], flags, setup.protocol.seed, true)?
                .pop()
                .expect("one model");
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("eval-sweep-k", &out_dir, ctx.force, &ctx.argv);
            let paths = prepared_inputs(&mut run, &data_dir);
            let out = run.output("sweep-k.csv");
            let data = load_prepared(&paths, setup.train_subset, setup.test_subset)?;
            run.begin(s, setup.protocol.seed)?;
            let rows = run_feature_sweep(&data, &spec, &counts, &setup.protocol)?;
            write_file(&out, feature_sweep_csv(&rows))?;
            println!("sweep-k: {} rows", rows.len());
        }
        EvalCommand::SweepP {
            train_files,
            test_files,
            models,
            patch_sizes,
            hidden,
            variance,
            whiten,
            flags,
            classifier,
            out_dir,
        } => {
            let train_files = s
                .list("train_files", train_files)?
                .ok_or_else(|| CliError::usage("missing --train-files"))?;
            let test_files = s
                .list("test_files", test_files)?
                .ok_or_else(|| CliError::usage("missing --test-files"))?;
            let models = s.list_or("models", models, &["tlin".to_string(), "cae".to_string()])?;
            let patch_sizes = s.list_or("patch_sizes", patch_sizes, &[10, 20, 32])?;
            let hidden = s.value("hidden", hidden, 500)?;
            let mut setup = classifier_setup(ctx, classifier)?;
            setup.protocol.variance_retained = s.value("variance", variance, 0.99)?;
            setup.protocol.whiten = s.value("whiten", whiten, true)?;
            let specs = model_specs(s, &models, flags, setup.protocol.seed, false)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("eval-sweep-p", &out_dir, ctx.force, &ctx.argv);
            for f in train_files.iter().chain(&test_files) {
                run.input(f);
            }
            let out = run.output("sweep-p.csv");
            let train = load_cifar_subset(&train_files, setup.train_subset)?;
            let test = load_cifar_subset(&test_files, setup.test_subset)?;
            run.begin(s, setup.protocol.seed)?;
            let rows =
                run_patchsize_sweep(&train, &test, &specs, &patch_sizes, hidden, &setup.protocol)?;
            write_file(&out, patch_sweep_csv(&rows))?;
            println!("sweep-p: {} rows", rows.len());
        }
        EvalCommand::InferCompare {
            data_dir,
            model,
            classifier,
            out_dir,
        } => {
            let data_dir: String = s.required("data_dir", data_dir)?;
            let model_path: String = s.required("model", model)?;
            let setup = classifier_setup(ctx, classifier)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("eval-infer-compare", &out_dir, ctx.force, &ctx.argv);
            let paths = prepared_inputs(&mut run, &data_dir);
            let model_path = run.input(&model_path);
            let out = run.output("infer-compare.csv");
            let data = load_prepared(&paths, setup.train_subset, setup.test_subset)?;
            let model = FeatureModel::Autoencoder(load_model(&model_path)?);
            run.begin(s, setup.protocol.seed)?;
            let rows = run_inference_comparison(&model, &data, &setup.protocol)?;
            write_file(&out, scheme_csv(&rows))?;
            for r in &rows {
                println!("{}: {:.4}", r.scheme, r.accuracy);
            }
        }
    }
    Ok(())
}
