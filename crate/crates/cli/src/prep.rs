use std::path::Path;

use clap::Args;
use zae_core::datasets::{
    crop_center_patches, load_cifar10, sample_random_patches, LabeledImageSet,
};
use zae_core::formats::{load_videos, save_matrix, save_transform};
use zae_core::preprocessing::{contrast_normalize, WhiteningTransform};

use crate::error::{read_file, write_file, CliError, CliResult};
use crate::manifest::Run;
use crate::Ctx;

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// CIFAR-10 training batch files.
    #[arg(long, value_delimiter = ',')]
    pub train_files: Vec<String>,
    /// CIFAR-10 test batch files.
    #[arg(long, value_delimiter = ',')]
    pub test_files: Vec<String>,
    /// Video set (ZMAT plus .hdr) instead of CIFAR input.
    #[arg(long, conflicts_with_all = ["train_files", "test_files"])]
    pub videos: Option<String>,
    /// Retained variance fraction [default: 0.99].
    #[arg(long)]
    pub variance: Option<f64>,
    /// Whiten the retained components [default: true].
    #[arg(long)]
    pub whiten: Option<bool>,
    /// Center-crop to P×P, or the window size with --random-patches.
    #[arg(long)]
    pub patch: Option<usize>,
    /// Sample this many random P×P windows from the training set instead.
    #[arg(long)]
    pub random_patches: Option<usize>,
    #[arg(long)]
    pub train_subset: Option<usize>,
    #[arg(long)]
    pub test_subset: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

pub fn write_labels(path: &Path, labels: &[u8]) -> CliResult<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    write_file(path, s)
}

/// One integer label per line.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8_lossy(&bytes);
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                CliError::data(format!(
                    "{}: bad label {l:?} on line {}",
                    path.display(),
                    i + 1
                ))
            })
        })
        .collect()
}

pub fn load_cifar_subset(files: &[String], subset: Option<usize>) -> CliResult<LabeledImageSet> {
    let set = load_cifar10(files)?;
    Ok(match subset {
        Some(n) => set.head(n),
        None => set,
    })
}

pub fn run(ctx: &Ctx, a: PrepArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let seed = ctx.seed()?;
    let out_dir: String = s.required("out_dir", a.out_dir)?;
    let videos: Option<String> = s.optional("videos", a.videos)?;
    let train_files = s.list("train_files", a.train_files)?;
    let test_files = s.list("test_files", a.test_files)?;
    let variance = s.value("variance", a.variance, 0.99)?;
    let whiten = s.value("whiten", a.whiten, true)?;
    let patch = s.optional("patch", a.patch)?;
    let random_patches = s.optional("random_patches", a.random_patches)?;
    let train_subset = s.optional("train_subset", a.train_subset)?;
    let test_subset = s.optional("test_subset", a.test_subset)?;

    if random_patches.is_some() && patch.is_none() {
        return Err(CliError::usage("--random-patches needs --patch"));
    }
    if random_patches.is_some() && test_files.is_some() {
        return Err(CliError::usage(
            "--random-patches samples training data only; drop --test-files",
        ));
    }
    if videos.is_some() && random_patches.is_none() && patch.is_some() {
        return Err(CliError::usage(
            "videos are cropped with --random-patches only",
        ));
    }

    let mut run = Run::new("prep", &out_dir, ctx.force, &ctx.argv);
    let train_out = run.output("train.zmat");
    let pca_out = run.output("pca.zpca");

    // (train matrix, train labels, test matrix and labels)
    type Split = (zae_core::DataMatrix, Vec<u8>);
    let (train, train_labels, test): (zae_core::DataMatrix, Option<Vec<u8>>, Option<Split>) =
        if let Some(v) = &videos {
            let path = run.input(v);
            run.input(zae_core::formats::header_path(&path));
            let set = load_videos(&path)?;
            let x = match (patch, random_patches) {
                (Some(p), Some(n)) => set.sample_patches(p, n, seed)?,
                _ => set.videos,
            };
            (x, None, None)
        } else {
            let Some(files) = &train_files else {
                return Err(CliError::usage("need --train-files or --videos"));
            };
            for f in files {
                run.input(f);
            }
            let train_set = load_cifar_subset(files, train_subset)?;
            if let Some(n) = random_patches {
                let p = patch.expect("checked above");
                (sample_random_patches(&train_set, p, n, seed)?, None, None)
            } else {
                let crop = |set: LabeledImageSet| -> CliResult<LabeledImageSet> {
                    Ok(match patch {
                        Some(p) => crop_center_patches(&set, p)?,
                        None => set,
                    })
                };
                let train_set = crop(train_set)?;
                let test = match &test_files {
                    Some(files) => {
                        for f in files {
                            run.input(f);
                        }
                        let t = crop(load_cifar_subset(files, test_subset)?)?;
                        Some((t.images, t.labels))
                    }
                    None => None,
                };
                (train_set.images, Some(train_set.labels), test)
            }
        };
    let train_labels_out = train_labels.as_ref().map(|_| run.output("train.labels"));
    let test_outs = test
        .as_ref()
        .map(|_| (run.output("test.zmat"), run.output("test.labels")));

    run.begin(s, seed)?;

    let train_x = contrast_normalize(&train)?;
    let transform = WhiteningTransform::fit(&train_x, variance, whiten)?;
    save_matrix(&train_out, &transform.apply(&train_x)?)?;
    save_transform(&pca_out, &transform)?;
    if let (Some(path), Some(labels)) = (&train_labels_out, &train_labels) {
        write_labels(path, labels)?;
    }
    if let (Some((x_path, l_path)), Some((x, labels))) = (&test_outs, &test) {
        save_matrix(x_path, &transform.apply(&contrast_normalize(x)?)?)?;
        write_labels(l_path, labels)?;
    }
    println!(
        "prep: {} training rows, {} -> {} dimensions",
        train.nrows(),
        transform.input_dim(),
        transform.output_dim()
    );
    Ok(())
}
