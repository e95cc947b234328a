//! Manifests and image grids.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::ArrayView2;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.txt";

/// Keys left out of manifests: where outputs go does not change them.
pub const LOCATION_KEYS: &[&str] = &["out"];

/// Writes `manifest.txt` into `out` and returns the run id, the first 12 hex
/// digits of the SHA-256 of the manifest body.
pub fn write_manifest(out: &Path, command: &str, config: &RunConfig) -> Result<String> {
    let body = format!(
        "command={command}\nversion={}\n{}",
        env!("CARGO_PKG_VERSION"),
        config.snapshot_without(LOCATION_KEYS)
    );
    let hash = sha256_hex(&body);
    write_file(&out.join(MANIFEST), format!("{body}config_sha256={hash}\n").as_bytes())?;
    Ok(hash[..12].to_string())
}

/// Lower-case hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Binary PGM of the first `rows · cols` images laid out in a grid. Pixels
/// in `[-1, 1]` map to gray levels 0..=255.
pub fn image_grid_pgm(images: ArrayView2<'_, f64>, height: usize, width: usize, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if images.ncols() != height * width {
        bail!("images have {} pixels, not {height}x{width}", images.ncols());
    }
    if images.nrows() < rows * cols {
        bail!("{} images for a {rows}x{cols} grid", images.nrows());
    }
    let (gh, gw) = (rows * height, cols * width);
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + gh * gw, 0);
    for (k, img) in images.outer_iter().take(rows * cols).enumerate() {
        let (r0, c0) = ((k / cols) * height, (k % cols) * width);
        for (p, &v) in img.iter().enumerate() {
            let level = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
            out[header + (r0 + p / width) * gw + c0 + p % width] = level;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn grid_layout() {
        // four 1x2 images in a 2x2 grid
        let imgs = Array2::from_shape_vec((4, 2), vec![-1.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        let pgm = image_grid_pgm(imgs.view(), 1, 2, 2, 2).unwrap();
        let header = b"P5\n4 2\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(&pgm[header.len()..], &[0, 255, 128, 128, 255, 0, 0, 0]);
        assert!(image_grid_pgm(imgs.view(), 1, 2, 3, 2).is_err());
    }

    #[test]
    fn manifest_ignores_output_location() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = RunConfig::from_defaults(&[("out", "x"), ("seed", "1")]);
        let id1 = write_manifest(dir.path(), "cmd", &a).unwrap();
        a.set("out", "y").unwrap();
        assert_eq!(write_manifest(dir.path(), "cmd", &a).unwrap(), id1);
        a.set("seed", "2").unwrap();
        assert_ne!(write_manifest(dir.path(), "cmd", &a).unwrap(), id1);
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(text.starts_with("command=cmd\nversion="));
        assert!(text.contains("seed=2\n") && !text.contains("out="));
    }
}
