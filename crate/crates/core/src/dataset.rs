//! MNIST ingestion and the reduced binary variant.
//!
//! IDX files are read whole: a big-endian magic (`0x0803` images,
//! `0x0801` labels), big-endian dimensions, then one byte per pixel or label.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::sampler::{SampleOrigin, SampleSet};
use crate::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const CACHE_MAGIC: &[u8; 5] = b"BGIMG";
const CACHE_FORMAT: u8 = 1;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// What the pixel values mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelKind {
    /// Gray level in `[0, 1]`.
    Intensity,
    /// Gray level rescaled to `[-1, 1]`.
    Signed,
    /// `-1` or `+1`.
    Spin,
}

impl PixelKind {
    fn code(self) -> u8 {
        match self {
            PixelKind::Intensity => 0,
            PixelKind::Signed => 1,
            PixelKind::Spin => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        [PixelKind::Intensity, PixelKind::Signed, PixelKind::Spin].get(c as usize).copied()
    }

    fn admits(self, v: f64) -> bool {
        match self {
            PixelKind::Intensity => (0.0..=1.0).contains(&v),
            PixelKind::Signed => (-1.0..=1.0).contains(&v),
            PixelKind::Spin => v == 1.0 || v == -1.0,
        }
    }
}

/// Images as rows of `height · width` pixels, with optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    height: usize,
    width: usize,
    pixels: Array2<f64>,
    kind: PixelKind,
    labels: Option<Vec<u8>>,
}

impl ImageSet {
    pub fn new(height: usize, width: usize, pixels: Array2<f64>, kind: PixelKind, labels: Option<Vec<u8>>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.ncols() != height * width {
            return Err(Error::InvalidSize(format!("{} columns for {height}x{width} images", pixels.ncols())));
        }
        if let Some(l) = &labels {
            if l.len() != pixels.nrows() {
                return Err(Error::InvalidInput(format!("{} labels for {} images", l.len(), pixels.nrows())));
            }
        }
        if let Some(v) = pixels.iter().find(|&&v| !kind.admits(v)) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside the {kind:?} range")));
        }
        Ok(Self { height, width, pixels, kind, labels })
    }

    pub fn len(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.nrows() == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn kind(&self) -> PixelKind {
        self.kind
    }

    pub fn pixels(&self) -> ArrayView2<'_, f64> {
        self.pixels.view()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn image(&self, k: usize) -> ArrayView2<'_, f64> {
        self.pixels
            .row(k)
            .into_shape_with_order((self.height, self.width))
            .expect("rows hold height * width pixels")
    }

    /// Images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.select(Axis(0), indices),
            kind: self.kind,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// The first `n` images (all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Intensities mapped to `[-1, 1]` by `2x - 1`.
    pub fn to_signed(&self) -> Result<Self> {
        if self.kind != PixelKind::Intensity {
            return Err(Error::InvalidInput(format!("cannot rescale {:?} pixels", self.kind)));
        }
        Ok(Self { pixels: self.pixels.mapv(|v| 2.0 * v - 1.0), kind: PixelKind::Signed, ..self.clone() })
    }

    /// Spin images as a sample set for Boltzmann-machine training.
    pub fn to_samples(&self) -> Result<SampleSet> {
        if self.kind != PixelKind::Spin {
            return Err(Error::InvalidInput(format!("{:?} pixels are not spins", self.kind)));
        }
        let flat = self.pixels.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect();
        SampleSet::from_flat(self.n_pixels(), flat, SampleOrigin::Data)
    }
}

fn be_u32(bytes: &[u8], at: usize, field: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(field, "file ends inside the header"))
}

/// Parses an IDX image file into intensities in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Array2<f64>)> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::format("magic", format!("expected {IMAGE_MAGIC:#010x} for images, found {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "image count")? as usize;
    let h = be_u32(bytes, 8, "rows")? as usize;
    let w = be_u32(bytes, 12, "columns")? as usize;
    if h == 0 || w == 0 {
        return Err(Error::format("dimensions", format!("{h}x{w} images")));
    }
    let need = n.checked_mul(h * w).ok_or_else(|| Error::format("dimensions", "size overflows"))?;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::format("payload", format!("truncated: {} of {need} pixel bytes", payload.len())));
    }
    if payload.len() > need {
        return Err(Error::format("payload", format!("{} trailing bytes", payload.len() - need)));
    }
    let pixels = Array2::from_shape_vec((n, h * w), payload.iter().map(|&b| f64::from(b) / 255.0).collect())
        .expect("payload length checked");
    Ok((h, w, pixels))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "magic")?;
    if magic != LABEL_MAGIC {
        return Err(Error::format("magic", format!("expected {LABEL_MAGIC:#010x} for labels, found {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "label count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(Error::format("payload", format!("truncated: {} of {n} label bytes", payload.len())));
    }
    if payload.len() > n {
        return Err(Error::format("payload", format!("{} trailing bytes", payload.len() - n)));
    }
    Ok(payload.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an IDX image file and, optionally, its label file.
pub fn load_idx(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<ImageSet> {
    let (h, w, pixels) = parse_idx_images(&read(images.as_ref())?)?;
    let labels = match labels {
        Some(p) => {
            let l = parse_idx_labels(&read(p)?)?;
            if l.len() != pixels.nrows() {
                return Err(Error::format("label count", format!("{} labels for {} images", l.len(), pixels.nrows())));
            }
            Some(l)
        }
        None => None,
    };
    ImageSet::new(h, w, pixels, PixelKind::Intensity, labels)
}

/// Paths of the four standard MNIST files under `dir`.
pub fn mnist_files(dir: &Path) -> [PathBuf; 4] {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS].map(|f| dir.join(f))
}

/// Training and test sets from a directory holding the standard file names.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<(ImageSet, ImageSet)> {
    let dir = dir.as_ref();
    let files = mnist_files(dir);
    if let Some(missing) = files.iter().find(|p| !p.is_file()) {
        return Err(Error::Config(format!(
            "MNIST file {} not found; place the four IDX files ({TRAIN_IMAGES}, {TRAIN_LABELS}, {TEST_IMAGES}, {TEST_LABELS}) in {} or run scripts/fetch-mnist.sh",
            missing.display(),
            dir.display()
        )));
    }
    let train = load_idx(&files[0], Some(&files[1]))?;
    let test = load_idx(&files[2], Some(&files[3]))?;
    Ok((train, test))
}

/// Centre-crops to the largest multiple of the block size, then averages
/// non-overlapping blocks. For 28×28 → 6×6 that is a 24×24 crop and 4×4
/// blocks.
pub fn reduce(images: &ImageSet, target_h: usize, target_w: usize) -> Result<ImageSet> {
    if images.kind != PixelKind::Intensity {
        return Err(Error::InvalidInput(format!("reduce expects intensities, got {:?}", images.kind)));
    }
    if target_h == 0 || target_w == 0 || target_h > images.height || target_w > images.width {
        return Err(Error::InvalidInput(format!(
            "cannot reduce {}x{} images to {target_h}x{target_w}",
            images.height, images.width
        )));
    }
    let bh = images.height / target_h;
    let bw = images.width / target_w;
    let top = (images.height - bh * target_h) / 2;
    let left = (images.width - bw * target_w) / 2;
    let area = (bh * bw) as f64;
    let mut out = Array2::zeros((images.len(), target_h * target_w));
    for (k, mut row) in out.rows_mut().into_iter().enumerate() {
        let img = images.image(k);
        for r in 0..target_h {
            for c in 0..target_w {
                let block = img.slice(s![top + r * bh..top + (r + 1) * bh, left + c * bw..left + (c + 1) * bw]);
                // clamp away rounding above 1
                row[r * target_w + c] = (block.sum() / area).min(1.0);
            }
        }
    }
    ImageSet::new(target_h, target_w, out, PixelKind::Intensity, images.labels.clone())
}

/// Each pixel becomes `+1` with probability equal to its intensity.
pub fn stochastic_binarize<R: Rng + ?Sized>(images: &ImageSet, rng: &mut R) -> Result<ImageSet> {
    if images.kind != PixelKind::Intensity {
        return Err(Error::InvalidInput(format!("binarization expects intensities, got {:?}", images.kind)));
    }
    // random() lies in [0, 1): intensity 0 never fires, intensity 1 always does
    let pixels = images.pixels.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { -1.0 });
    ImageSet::new(images.height, images.width, pixels, PixelKind::Spin, images.labels.clone())
}

/// Writes the internal cache: magic `BGIMG`, format byte, pixel kind byte,
/// height and width as `u32`, image count as `u64`, label flag byte, pixels
/// as little-endian `f64`, then one byte per label.
pub fn save_cache(images: &ImageSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    w.write_all(&[CACHE_FORMAT, images.kind.code()]).map_err(io)?;
    w.write_all(&(images.height as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(images.width as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(images.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&[u8::from(images.labels.is_some())]).map_err(io)?;
    for v in images.pixels.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    if let Some(l) = &images.labels {
        w.write_all(l).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<ImageSet> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let header = 5 + 2 + 4 + 4 + 8 + 1;
    if bytes.len() < header {
        return Err(Error::format("header", "file is shorter than the cache header"));
    }
    if &bytes[..5] != CACHE_MAGIC {
        return Err(Error::format("magic", "not an image cache"));
    }
    if bytes[5] != CACHE_FORMAT {
        return Err(Error::format("version", format!("unsupported cache format {}", bytes[5])));
    }
    let kind = PixelKind::from_code(bytes[6]).ok_or_else(|| Error::format("pixel kind", format!("code {}", bytes[6])))?;
    let h = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[11..15].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[15..23].try_into().expect("8 bytes")) as usize;
    let has_labels = bytes[23] != 0;
    let n_values = n.checked_mul(h * w).ok_or_else(|| Error::format("dimensions", "size overflows"))?;
    let need = header + 8 * n_values + if has_labels { n } else { 0 };
    if bytes.len() != need {
        return Err(Error::format("payload", format!("{} bytes, expected {need}", bytes.len())));
    }
    let pixels: Vec<f64> = bytes[header..header + 8 * n_values]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let labels = has_labels.then(|| bytes[header + 8 * n_values..].to_vec());
    let pixels = Array2::from_shape_vec((n, h * w), pixels).expect("length checked");
    ImageSet::new(h, w, pixels, kind, labels)
}
