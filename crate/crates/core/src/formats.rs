//! Binary and text artifact formats.
//!
//! All binary formats are little-endian and start with a four-byte magic
//! followed by a `u32` version (currently 1):
//!
//! * `ZMAT`: `u64` rows, `u64` cols, row-major `f64` values.
//! * `ZPCA`: `u32` D, `u32` R, `u8` whiten, `f64` epsilon, mean (D), eigenvalues
//!   (R), basis row-major (D·R).
//! * `ZAE1`: `u32` D, `u32` K, `u8` activation tag, `f64` θ, W row-major
//!   (D·K), hidden bias (K), visible bias (D).
//!
//! Decoders never trust declared sizes: every length is checked against the
//! bytes actually present before anything is allocated.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::activations::Activation;
use crate::datasets::{RotationAngle, VideoSet};
use crate::error::{Error, Result};
use crate::models::Autoencoder;
use crate::preprocessing::WhiteningTransform;
use crate::DataMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"ZMAT";
pub const TRANSFORM_MAGIC: &[u8; 4] = b"ZPCA";
pub const MODEL_MAGIC: &[u8; 4] = b"ZAE1";
pub const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::parse(self.pos, format!("truncated {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(Error::parse(
                0,
                format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
            ));
        }
        let at = self.pos;
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(Error::parse(at, format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    /// `count` doubles, refusing counts the input cannot possibly hold.
    fn f64s(&mut self, count: u64, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .filter(|&b| b <= self.remaining() as u64)
            .ok_or_else(|| Error::parse(self.pos, format!("truncated {what}")))?;
        let raw = self.take(bytes as usize, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::parse(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

fn put_f64s<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::invalid(format!("{what} {n} does not fit in u32")))
}

pub fn encode_matrix(x: &DataMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * x.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(x.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(x.ncols() as u64).to_le_bytes());
    put_f64s(&mut out, x.iter());
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DataMatrix> {
    let mut r = Reader::new(bytes);
    r.header(MATRIX_MAGIC)?;
    let rows = r.u64("row count")?;
    let cols = r.u64("column count")?;
    let at = r.pos;
    let count = rows
        .checked_mul(cols)
        .filter(|_| rows.max(cols) <= isize::MAX as u64)
        .ok_or_else(|| Error::parse(at, "matrix size overflows"))?;
    let values = r.f64s(count, "matrix data")?;
    r.finish()?;
    Ok(Array2::from_shape_vec((rows as usize, cols as usize), values).expect("sized above"))
}

pub fn encode_transform(t: &WhiteningTransform) -> Result<Vec<u8>> {
    t.validate()?;
    let d = dim_u32(t.input_dim(), "input dimension")?;
    let r = dim_u32(t.output_dim(), "retained dimension")?;
    let mut out = Vec::new();
    out.extend_from_slice(TRANSFORM_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&r.to_le_bytes());
    out.push(t.whiten as u8);
    out.extend_from_slice(&t.epsilon.to_le_bytes());
    put_f64s(&mut out, t.mean.iter());
    put_f64s(&mut out, t.eigenvalues.iter());
    put_f64s(&mut out, t.basis.iter());
    Ok(out)
}

pub fn decode_transform(bytes: &[u8]) -> Result<WhiteningTransform> {
    let mut r = Reader::new(bytes);
    r.header(TRANSFORM_MAGIC)?;
    let d = r.u32("input dimension")? as u64;
    let k = r.u32("retained dimension")? as u64;
    let at = r.pos;
    let whiten = match r.u8("whiten flag")? {
        0 => false,
        1 => true,
        v => return Err(Error::parse(at, format!("invalid whiten flag {v}"))),
    };
    let epsilon = r.f64("epsilon")?;
    let mean = r.f64s(d, "mean")?;
    let eigenvalues = r.f64s(k, "eigenvalues")?;
    let basis = r.f64s(d * k, "basis")?;
    r.finish()?;
    let t = WhiteningTransform {
        mean: Array1::from(mean),
        basis: Array2::from_shape_vec((d as usize, k as usize), basis).expect("sized above"),
        eigenvalues: Array1::from(eigenvalues),
        whiten,
        epsilon,
    };
    t.validate()
        .map_err(|e| Error::parse(0, format!("inconsistent transform: {e}")))?;
    Ok(t)
}

pub fn encode_model(m: &Autoencoder) -> Result<Vec<u8>> {
    m.validate()?;
    let d = dim_u32(m.input_dim(), "input dimension")?;
    let k = dim_u32(m.hidden_units(), "hidden unit count")?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.push(m.activation.tag());
    out.extend_from_slice(&m.activation.theta().unwrap_or(0.0).to_le_bytes());
    put_f64s(&mut out, m.weights.iter());
    put_f64s(&mut out, m.hidden_bias.iter());
    put_f64s(&mut out, m.visible_bias.iter());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<Autoencoder> {
    let mut r = Reader::new(bytes);
    r.header(MODEL_MAGIC)?;
    let d = r.u32("input dimension")? as u64;
    let k = r.u32("hidden unit count")? as u64;
    let tag_at = r.pos;
    let tag = r.u8("activation tag")?;
    let theta = r.f64("theta")?;
    let activation =
        Activation::from_tag(tag, theta).map_err(|e| Error::parse(tag_at, e.to_string()))?;
    let weights = r.f64s(d * k, "weights")?;
    let b = r.f64s(k, "hidden bias")?;
    let c = r.f64s(d, "visible bias")?;
    r.finish()?;
    let weights = Array2::from_shape_vec((d as usize, k as usize), weights).expect("sized above");
    Autoencoder::from_parts(weights, Array1::from(b), Array1::from(c), activation)
        .map_err(|e| Error::parse(0, format!("inconsistent model: {e}")))
}

/// `std::fs::read`, with the path in the error message.
pub(crate) fn read_path(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn save_matrix(path: impl AsRef<Path>, x: &DataMatrix) -> Result<()> {
    std::fs::write(path, encode_matrix(x))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    with_path(path, decode_matrix(&read_path(path)?))
}

pub fn save_transform(path: impl AsRef<Path>, t: &WhiteningTransform) -> Result<()> {
    std::fs::write(path, encode_transform(t)?)?;
    Ok(())
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<WhiteningTransform> {
    let path = path.as_ref();
    with_path(path, decode_transform(&read_path(path)?))
}

pub fn save_model(path: impl AsRef<Path>, m: &Autoencoder) -> Result<()> {
    std::fs::write(path, encode_model(m)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Autoencoder> {
    let path = path.as_ref();
    with_path(path, decode_model(&read_path(path)?))
}

/// Geometry of a stored video set. The videos themselves go in a `ZMAT` file.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoHeader {
    pub frames: usize,
    pub size: usize,
    pub angle: RotationAngle,
    pub angles: Vec<f64>,
}

impl VideoHeader {
    pub fn of(set: &VideoSet) -> Self {
        Self {
            frames: set.frames,
            size: set.frame_size,
            angle: set.angle,
            angles: set.angles.clone(),
        }
    }
}

/// `frames=`, `size=`, `angle=` and `angles=` lines. `angle` is either a
/// number or `uniform:LOW:HIGH`; `angles` lists the per-video draws.
pub fn encode_video_header(h: &VideoHeader) -> String {
    let mut s = String::new();
    writeln!(s, "frames={}", h.frames).unwrap();
    writeln!(s, "size={}", h.size).unwrap();
    match h.angle {
        RotationAngle::Fixed(a) => writeln!(s, "angle={a:?}").unwrap(),
        RotationAngle::Uniform { low, high } => {
            writeln!(s, "angle=uniform:{low:?}:{high:?}").unwrap()
        }
    }
    let list: Vec<String> = h.angles.iter().map(|a| format!("{a:?}")).collect();
    writeln!(s, "angles={}", list.join(",")).unwrap();
    s
}

fn parse_angle(v: &str) -> Option<RotationAngle> {
    match v.strip_prefix("uniform:") {
        Some(rest) => {
            let (lo, hi) = rest.split_once(':')?;
            Some(RotationAngle::Uniform {
                low: lo.parse().ok()?,
                high: hi.parse().ok()?,
            })
        }
        None => v.parse().ok().map(RotationAngle::Fixed),
    }
}

pub fn decode_video_header(text: &str) -> Result<VideoHeader> {
    let pairs = crate::config::parse_key_values(text)?;
    let get = |key: &str| {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::parse(0, format!("video header lacks {key}=")))
    };
    let count = |key: &str| -> Result<usize> {
        match get(key)?.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::parse(0, format!("{key} must be a positive integer"))),
        }
    };
    let frames = count("frames")?;
    let size = count("size")?;
    let angle = parse_angle(get("angle")?).ok_or_else(|| Error::parse(0, "malformed angle"))?;
    let angles = match pairs.iter().find(|(k, _)| k == "angles") {
        Some((_, v)) if !v.is_empty() => v
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(0, "malformed angles list"))?,
        _ => Vec::new(),
    };
    Ok(VideoHeader {
        frames,
        size,
        angle,
        angles,
    })
}

/// Writes `<path>` as `ZMAT` and `<path>.hdr` as the text header.
pub fn save_videos(path: impl AsRef<Path>, set: &VideoSet) -> Result<()> {
    let path = path.as_ref();
    save_matrix(path, &set.videos)?;
    std::fs::write(
        header_path(path),
        encode_video_header(&VideoHeader::of(set)),
    )?;
    Ok(())
}

pub fn load_videos(path: impl AsRef<Path>) -> Result<VideoSet> {
    let path = path.as_ref();
    let videos = load_matrix(path)?;
    let hdr_path = header_path(path);
    let text = String::from_utf8(read_path(&hdr_path)?)
        .map_err(|_| Error::parse(0, format!("{}: header is not UTF-8", hdr_path.display())))?;
    let h = with_path(&hdr_path, decode_video_header(&text))?;
    if videos.ncols() != h.frames * h.size * h.size {
        return Err(Error::dim(format!(
            "videos have {} values per row, header says {}×{}×{}",
            videos.ncols(),
            h.frames,
            h.size,
            h.size
        )));
    }
    if !h.angles.is_empty() && h.angles.len() != videos.nrows() {
        return Err(Error::dim(format!(
            "{} angles for {} videos",
            h.angles.len(),
            videos.nrows()
        )));
    }
    Ok(VideoSet {
        videos,
        frames: h.frames,
        frame_size: h.size,
        angle: h.angle,
        angles: h.angles,
    })
}

pub fn header_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    s.into()
}

/// Binary `P6` pixmap. `rgb` holds `3·width·height` bytes, row-major.
pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != 3 * width * height {
        return Err(Error::dim(format!(
            "{} bytes for a {width}×{height} RGB image",
            rgb.len()
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}
