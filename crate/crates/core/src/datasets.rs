//! Dataset ingestion and synthesis.
//!
//! Images are stored flattened channel-major (all of channel 0, then channel
//! 1, ...), each channel row-major. Videos use the same layout with frames in
//! place of channels, which lets the patch samplers treat both alike.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::DataMatrix;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_PIXELS: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;
pub const CIFAR_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    /// `N × (C·H·W)`.
    pub images: DataMatrix,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl LabeledImageSet {
    pub fn new(
        images: DataMatrix,
        labels: Vec<u8>,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("image geometry must be positive"));
        }
        if images.ncols() != channels * height * width {
            return Err(Error::dim(format!(
                "rows hold {} values, geometry {channels}×{height}×{width} needs {}",
                images.ncols(),
                channels * height * width
            )));
        }
        if labels.len() != images.nrows() {
            return Err(Error::dim(format!(
                "{} labels for {} images",
                labels.len(),
                images.nrows()
            )));
        }
        Ok(Self {
            images,
            labels,
            height,
            width,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `n` samples (all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            ..*self
        }
    }
}

/// Decode CIFAR-10 binary records: one label byte, then 3072 pixel bytes.
pub fn parse_cifar10(bytes: &[u8]) -> Result<LabeledImageSet> {
    let n = bytes.len() / CIFAR_RECORD;
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::parse(n * CIFAR_RECORD, "truncated record"));
    }
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = record[0];
        if label as usize >= CIFAR_CLASSES {
            return Err(Error::parse(
                i * CIFAR_RECORD,
                format!("invalid label {label}"),
            ));
        }
        labels.push(label);
        pixels.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    let images = Array2::from_shape_vec((n, CIFAR_PIXELS), pixels).expect("sized above");
    LabeledImageSet::new(images, labels, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
}

/// Load and concatenate CIFAR-10 batch files in the given order.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledImageSet> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = crate::formats::read_path(path)?;
        let set = parse_cifar10(&bytes).map_err(|e| match e {
            Error::Parse { offset, message } => Error::Parse {
                offset,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?;
        images.extend(set.images);
        labels.extend(set.labels);
    }
    let n = labels.len();
    let images = Array2::from_shape_vec((n, CIFAR_PIXELS), images).expect("sized by records");
    LabeledImageSet::new(images, labels, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
}

#[allow(clippy::too_many_arguments)]
fn copy_window(
    src: ArrayView1<'_, f64>,
    channels: usize,
    height: usize,
    width: usize,
    top: usize,
    left: usize,
    p: usize,
    out: &mut [f64],
) {
    let mut k = 0;
    for c in 0..channels {
        for r in 0..p {
            let base = c * height * width + (top + r) * width + left;
            for col in 0..p {
                out[k] = src[base + col];
                k += 1;
            }
        }
    }
}

fn check_patch(p: usize, height: usize, width: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    if p > height || p > width {
        return Err(Error::invalid(format!(
            "patch size {p} exceeds image size {height}×{width}"
        )));
    }
    Ok(())
}

/// The centered `P×P` window of every image, labels kept.
pub fn crop_center_patches(set: &LabeledImageSet, p: usize) -> Result<LabeledImageSet> {
    check_patch(p, set.height, set.width)?;
    let top = (set.height - p) / 2;
    let left = (set.width - p) / 2;
    let cols = set.channels * p * p;
    let mut out = Array2::zeros((set.len(), cols));
    for (src, mut dst) in set.images.rows().into_iter().zip(out.rows_mut()) {
        copy_window(
            src,
            set.channels,
            set.height,
            set.width,
            top,
            left,
            p,
            dst.as_slice_mut().expect("standard layout"),
        );
    }
    LabeledImageSet::new(out, set.labels.clone(), set.channels, p, p)
}

/// `count` windows of size `P×P` (all channels), each from a uniformly chosen
/// image at a uniformly chosen origin.
pub fn sample_random_patches(
    set: &LabeledImageSet,
    p: usize,
    count: usize,
    seed: u64,
) -> Result<DataMatrix> {
    sample_windows(
        &set.images,
        set.channels,
        set.height,
        set.width,
        p,
        count,
        seed,
    )
}

pub(crate) fn sample_windows(
    images: &DataMatrix,
    channels: usize,
    height: usize,
    width: usize,
    p: usize,
    count: usize,
    seed: u64,
) -> Result<DataMatrix> {
    check_patch(p, height, width)?;
    let cols = channels * p * p;
    if count > 0 && images.nrows() == 0 {
        return Err(Error::invalid("cannot sample patches from an empty set"));
    }
    let mut rng = rng::stream(seed, Stream::Data);
    let mut out = Array2::zeros((count, cols));
    for mut dst in out.rows_mut() {
        let i = rng.random_range(0..images.nrows());
        let top = rng.random_range(0..=height - p);
        let left = rng.random_range(0..=width - p);
        copy_window(
            images.row(i),
            channels,
            height,
            width,
            top,
            left,
            p,
            dst.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(out)
}

/// How the per-frame rotation angle is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationAngle {
    Fixed(f64),
    /// Drawn once per video, uniformly from `[low, high]`.
    Uniform {
        low: f64,
        high: f64,
    },
}

impl Default for RotationAngle {
    fn default() -> Self {
        RotationAngle::Uniform {
            low: PI / 16.0,
            high: PI / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotsConfig {
    pub videos: usize,
    pub frames: usize,
    pub size: usize,
    pub dots_per_frame: usize,
    pub angle: RotationAngle,
    pub seed: u64,
}

impl Default for DotsConfig {
    fn default() -> Self {
        Self {
            videos: 5000,
            frames: 10,
            size: 13,
            dots_per_frame: 16,
            angle: RotationAngle::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSet {
    /// `N × (F·S·S)`, frame-major.
    pub videos: DataMatrix,
    pub frames: usize,
    pub frame_size: usize,
    pub angle: RotationAngle,
    /// The angle actually used for each video.
    pub angles: Vec<f64>,
}

impl VideoSet {
    /// Random spatial crops through all frames.
    pub fn sample_patches(&self, p: usize, count: usize, seed: u64) -> Result<DataMatrix> {
        sample_windows(
            &self.videos,
            self.frames,
            self.frame_size,
            self.frame_size,
            p,
            count,
            seed,
        )
    }
}

/// Random dot images rotating about the frame center.
///
/// Frame 1 splats `dots_per_frame` dots bilinearly at continuous uniform
/// positions and clips the sum to 1. Frame `t` is frame 1 rotated
/// counter-clockwise by `(t − 1)·angle`, sampled bilinearly with zero padding.
pub fn gen_rotating_dots(cfg: &DotsConfig) -> Result<VideoSet> {
    if cfg.videos == 0 || cfg.frames == 0 || cfg.size == 0 || cfg.dots_per_frame == 0 {
        return Err(Error::invalid("rotating-dots counts must be positive"));
    }
    match cfg.angle {
        RotationAngle::Fixed(a) if !a.is_finite() => {
            return Err(Error::invalid("rotation angle must be finite"))
        }
        RotationAngle::Uniform { low, high }
            if !(low.is_finite() && high.is_finite() && low <= high) =>
        {
            return Err(Error::invalid(
                "angle range must be finite with low <= high",
            ))
        }
        _ => {}
    }

    let s = cfg.size;
    let frame_len = s * s;
    let mut rng = rng::stream(cfg.seed, Stream::Data);
    let mut videos = Array2::zeros((cfg.videos, cfg.frames * frame_len));
    let mut angles = Vec::with_capacity(cfg.videos);
    let limit = (s - 1) as f64;

    for mut row in videos.rows_mut() {
        let data = row.as_slice_mut().expect("standard layout");
        let (first, rest) = data.split_at_mut(frame_len);
        for _ in 0..cfg.dots_per_frame {
            let y = rng.random::<f64>() * limit;
            let x = rng.random::<f64>() * limit;
            splat(first, s, y, x);
        }
        for v in first.iter_mut() {
            *v = v.min(1.0);
        }
        let angle = match cfg.angle {
            RotationAngle::Fixed(a) => a,
            RotationAngle::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        };
        angles.push(angle);
        for (t, frame) in rest.chunks_exact_mut(frame_len).enumerate() {
            rotate_into(first, frame, s, (t + 1) as f64 * angle);
        }
    }

    Ok(VideoSet {
        videos,
        frames: cfg.frames,
        frame_size: s,
        angle: cfg.angle,
        angles,
    })
}

fn splat(img: &mut [f64], s: usize, y: f64, x: f64) {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let yy = y0 as i64 + dy;
            let xx = x0 as i64 + dx;
            if (0..s as i64).contains(&yy) && (0..s as i64).contains(&xx) {
                img[yy as usize * s + xx as usize] += wy * wx;
            }
        }
    }
}

fn bilinear(img: &[f64], s: usize, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let mut v = 0.0;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let yy = y0 as i64 + dy;
            let xx = x0 as i64 + dx;
            if (0..s as i64).contains(&yy) && (0..s as i64).contains(&xx) {
                v += wy * wx * img[yy as usize * s + xx as usize];
            }
        }
    }
    v
}

/// Rotate counter-clockwise in (column, row) coordinates about the center,
/// so an offset `(dx, dy) = (r, 0)` moves to `(0, r)` under a quarter turn.
fn rotate_into(src: &[f64], dst: &mut [f64], s: usize, angle: f64) {
    let c = (s as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    for row in 0..s {
        for col in 0..s {
            let dx = col as f64 - c;
            let dy = row as f64 - c;
            // Inverse map: rotate the output coordinate back by -angle.
            let sx = cos * dx + sin * dy + c;
            let sy = -sin * dx + cos * dy + c;
            dst[row * s + col] = bilinear(src, s, sy, sx).clamp(0.0, 1.0);
        }
    }
}
