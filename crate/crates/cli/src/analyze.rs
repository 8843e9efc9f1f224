use std::fmt::Write as _;

use clap::Subcommand;
use zae_core::analysis::{
    bias_histogram, export_filters, fixed_point_report, frame_report, FilterLayout,
};
use zae_core::datasets::{gen_rotating_dots, DotsConfig, RotationAngle};
use zae_core::formats::{header_path, load_matrix, load_model, load_transform, save_videos};
use zae_core::preprocessing::WhiteningTransform;

use crate::error::{write_file, CliError, CliResult};
use crate::manifest::Run;
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Histogram of the hidden biases.
    Biases {
        #[arg(long)]
        model: Option<String>,
        /// [default: 20]
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Fixed-point residual and null-space size for each data row.
    Fixedpoint {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: Option<String>,
        /// Only the first N rows.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Parseval ratio statistics over probe rows.
    Parseval {
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        data: Option<String>,
        /// Use the first N rows as probes [default: 1000].
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Back-projected filters tiled into PPM grids.
    Filters {
        #[arg(long)]
        model: Option<String>,
        /// PCA transform the model was trained behind; identity if omitted.
        #[arg(long)]
        pca: Option<String>,
        /// Image geometry as C,H,W; inferred for square 1- or 3-channel inputs.
        #[arg(long, value_delimiter = ',')]
        shape: Vec<usize>,
        /// Video geometry as FRAMES,SIZE; writes one grid per --frames entry.
        #[arg(long, value_delimiter = ',', conflicts_with = "shape")]
        video: Vec<usize>,
        /// 1-based frame numbers to render for video models [default: all].
        #[arg(long, value_delimiter = ',')]
        frames: Vec<usize>,
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Rotating random-dot videos.
    GenRotdots {
        /// [default: 5000]
        #[arg(long)]
        videos: Option<usize>,
        /// [default: 10]
        #[arg(long)]
        frames: Option<usize>,
        /// Frame side length [default: 13].
        #[arg(long)]
        size: Option<usize>,
        /// [default: 16]
        #[arg(long)]
        dots: Option<usize>,
        /// Fixed rotation per frame in radians; otherwise drawn per video.
        #[arg(long, allow_negative_numbers = true)]
        angle: Option<f64>,
        /// [default: π/16]
        #[arg(long)]
        angle_low: Option<f64>,
        /// [default: π/4]
        #[arg(long)]
        angle_high: Option<f64>,
        #[arg(long)]
        out_dir: Option<String>,
    },
}

fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n && s > 0).then_some(s)
}

pub fn run(ctx: &Ctx, cmd: AnalyzeCommand) -> CliResult<()> {
    let s = &ctx.settings;
    let seed = ctx.seed()?;
    match cmd {
        AnalyzeCommand::Biases {
            model,
            bins,
            out_dir,
        } => {
            let model: String = s.required("model", model)?;
            let bins = s.value("bins", bins, 20usize)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("analyze-biases", &out_dir, ctx.force, &ctx.argv);
            let model = run.input(&model);
            let hist_out = run.output("biases.csv");
            let summary_out = run.output("biases-summary.csv");
            let m = load_model(&model)?;
            run.begin(s, seed)?;
            let h = bias_histogram(&m, bins)?;
            write_file(&hist_out, h.to_csv())?;
            write_file(&summary_out, h.summary_csv())?;
            println!(
                "biases: mean {:.6}, fraction negative {:.4}",
                h.mean, h.fraction_negative
            );
        }
        AnalyzeCommand::Fixedpoint {
            model,
            data,
            limit,
            out_dir,
        } => {
            let model: String = s.required("model", model)?;
            let data: String = s.required("data", data)?;
            let limit: Option<usize> = s.optional("limit", limit)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("analyze-fixedpoint", &out_dir, ctx.force, &ctx.argv);
            let model = run.input(&model);
            let data = run.input(&data);
            let out = run.output("fixedpoint.csv");
            let m = load_model(&model)?;
            let x = load_matrix(&data)?;
            run.begin(s, seed)?;
            let n = limit.unwrap_or(x.nrows()).min(x.nrows());
            let mut csv =
                String::from("row,active,residual_norm,nullspace_dim,orthonormality_error\n");
            for (i, row) in x.rows().into_iter().take(n).enumerate() {
                let r = fixed_point_report(&m, row)?;
                writeln!(
                    csv,
                    "{i},{},{:?},{},{:?}",
                    r.active.len(),
                    r.residual_norm,
                    r.nullspace_dim,
                    r.orthonormality_error
                )
                .unwrap();
            }
            write_file(&out, csv)?;
            println!("fixedpoint: {n} rows");
        }
        AnalyzeCommand::Parseval {
            model,
            data,
            probes,
            out_dir,
        } => {
            let model: String = s.required("model", model)?;
            let data: String = s.required("data", data)?;
            let probes = s.value("probes", probes, 1000usize)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("analyze-parseval", &out_dir, ctx.force, &ctx.argv);
            let model = run.input(&model);
            let data = run.input(&data);
            let out = run.output("parseval.csv");
            let m = load_model(&model)?;
            let x = load_matrix(&data)?;
            run.begin(s, seed)?;
            let n = probes.min(x.nrows());
            let probe = x.slice(ndarray::s![..n, ..]).to_owned();
            let f = frame_report(&m, &probe)?;
            let st = f.parseval_ratio_stats;
            write_file(
                &out,
                format!(
                    "metric,value\nprobes,{n}\nmin,{:?}\nmedian,{:?}\nmax,{:?}\n",
                    st.min, st.median, st.max
                ),
            )?;
            println!("parseval: median ratio {:.6} over {n} probes", st.median);
        }
        AnalyzeCommand::Filters {
            model,
            pca,
            shape,
            video,
            frames,
            out_dir,
        } => {
            let model: String = s.required("model", model)?;
            let pca: Option<String> = s.optional("pca", pca)?;
            let shape = s.list("shape", shape)?;
            let video = s.list("video", video)?;
            let frames = s.list("frames", frames)?;
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("analyze-filters", &out_dir, ctx.force, &ctx.argv);
            let model = run.input(&model);
            let pca = pca.map(|p| run.input(p));
            let m = load_model(&model)?;
            let transform = match &pca {
                Some(p) => load_transform(p)?,
                None => WhiteningTransform::identity(m.input_dim()),
            };
            let d = transform.input_dim();
            let layout = match (shape, video) {
                (Some(_), Some(_)) => {
                    return Err(CliError::usage("--shape and --video are exclusive"))
                }
                (Some(sh), None) => {
                    let [c, h, w] = sh[..] else {
                        return Err(CliError::usage("--shape takes C,H,W"));
                    };
                    FilterLayout::Image {
                        channels: c,
                        height: h,
                        width: w,
                    }
                }
                (None, Some(v)) => {
                    let [f, size] = v[..] else {
                        return Err(CliError::usage("--video takes FRAMES,SIZE"));
                    };
                    let selected = match &frames {
                        Some(list) => list
                            .iter()
                            .map(|&t| {
                                if t == 0 || t > f {
                                    Err(CliError::usage(format!("frame {t} outside 1..={f}")))
                                } else {
                                    Ok(t - 1)
                                }
                            })
                            .collect::<CliResult<Vec<_>>>()?,
                        None => (0..f).collect(),
                    };
                    FilterLayout::Video {
                        frames: f,
                        size,
                        selected,
                    }
                }
                (None, None) => {
                    let (c, side) = if d % 3 == 0 && square_side(d / 3).is_some() {
                        (3, square_side(d / 3).unwrap())
                    } else if let Some(side) = square_side(d) {
                        (1, side)
                    } else {
                        return Err(CliError::usage(format!(
                            "cannot infer a square image from {d} inputs; pass --shape"
                        )));
                    };
                    FilterLayout::Image {
                        channels: c,
                        height: side,
                        width: side,
                    }
                }
            };
            if frames.is_some() && matches!(layout, FilterLayout::Image { .. }) {
                return Err(CliError::usage("--frames applies to --video layouts"));
            }
            let names: Vec<String> = match &layout {
                FilterLayout::Video { selected, .. } => selected
                    .iter()
                    .map(|t| format!("filters-frame{}.ppm", t + 1))
                    .collect(),
                FilterLayout::Image { .. } => vec!["filters.ppm".to_string()],
            };
            let outs: Vec<_> = names.iter().map(|n| run.output(n)).collect();
            run.begin(s, seed)?;
            let grids = export_filters(&m, &transform, &layout)?;
            for (g, path) in grids.iter().zip(&outs) {
                write_file(path, g.to_ppm())?;
            }
            println!(
                "filters: {} grid(s), {}×{} cells",
                grids.len(),
                grids[0].cells,
                grids[0].cells
            );
        }
        AnalyzeCommand::GenRotdots {
            videos,
            frames,
            size,
            dots,
            angle,
            angle_low,
            angle_high,
            out_dir,
        } => {
            let defaults = DotsConfig::default();
            let RotationAngle::Uniform { low, high } = RotationAngle::default() else {
                unreachable!("default angle is uniform")
            };
            let fixed: Option<f64> = s.optional("angle", angle)?;
            let angle_low: Option<f64> = s.optional("angle_low", angle_low)?;
            let angle_high: Option<f64> = s.optional("angle_high", angle_high)?;
            let angle = match fixed {
                Some(a) if angle_low.is_none() && angle_high.is_none() => RotationAngle::Fixed(a),
                Some(_) => {
                    return Err(CliError::usage("--angle excludes --angle-low/--angle-high"))
                }
                None => RotationAngle::Uniform {
                    low: angle_low.unwrap_or(low),
                    high: angle_high.unwrap_or(high),
                },
            };
            let cfg = DotsConfig {
                videos: s.value("videos", videos, defaults.videos)?,
                frames: s.value("frames", frames, defaults.frames)?,
                size: s.value("size", size, defaults.size)?,
                dots_per_frame: s.value("dots", dots, defaults.dots_per_frame)?,
                angle,
                seed,
            };
            let out_dir: String = s.required("out_dir", out_dir)?;
            let mut run = Run::new("analyze-gen-rotdots", &out_dir, ctx.force, &ctx.argv);
            let out = run.output("videos.zmat");
            run.output(
                header_path(&out)
                    .file_name()
                    .and_then(|n| n.to_str())
                    .expect("utf-8 file name"),
            );
            run.begin(s, seed)?;
            let set = gen_rotating_dots(&cfg)?;
            save_videos(&out, &set)?;
            println!(
                "gen-rotdots: {} videos of {}×{}×{}",
                cfg.videos, cfg.frames, cfg.size, cfg.size
            );
        }
    }
    Ok(())
}
