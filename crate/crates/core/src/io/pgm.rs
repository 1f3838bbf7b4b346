//! 8-bit binary PGM for planar debug images. Row `j = 0` is written first.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::ScalarImage;

/// Map `[lo, hi]` to `0..=255`; the image's finite range when `window` is `None`.
pub fn encode_pgm(img: &ScalarImage, window: Option<(f64, f64)>) -> Result<Vec<u8>> {
    let [nx, ny, nz] = img.grid().dims();
    if nz != 1 {
        return Err(Error::InvalidConfig(format!(
            "PGM needs a planar image, got {nz} slices"
        )));
    }
    let (lo, hi) = window.or_else(|| img.finite_range()).unwrap_or((0.0, 1.0));
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(img.data().iter().map(|v| {
        if v.is_finite() {
            ((v - lo) * scale).clamp(0.0, 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn write_pgm(
    img: &ScalarImage,
    path: impl AsRef<Path>,
    window: Option<(f64, f64)>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img, window)?).map_err(|e| Error::io(path, e))
}
