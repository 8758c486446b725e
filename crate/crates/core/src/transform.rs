//! Inversion between "dark is shadow" and "bright is shadow" encodings.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// `max(s) - s`. Involutive whenever `min(s) == 0`.
pub fn invert_shadow(s: &ImageBuffer) -> ImageBuffer {
    let m = s.max().unwrap_or(0.0);
    s.map(|v| m - v)
}

/// Inverts `s` using a caller-supplied peak instead of its own maximum.
pub fn invert_with_peak(s: &ImageBuffer, peak: f32) -> ImageBuffer {
    s.map(|v| peak - v)
}

/// Inverts a prediction and its ground truth against the ground-truth peak
/// so both maps share one reference level.
pub fn invert_pair(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<(ImageBuffer, ImageBuffer)> {
    pred.ensure_same_dims(gt)?;
    let peak = gt
        .max()
        .ok_or_else(|| Error::InvalidParameter("empty image".into()))?;
    Ok((invert_with_peak(pred, peak), invert_with_peak(gt, peak)))
}
