//! Layering a soft shadow and an object cutout over a background photo.

use std::io::Cursor;

use image::{DynamicImage, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::bases::{ShadowDomain, ShadowMap};
use crate::error::{Error, Result};

/// Where the cutout lands on the background: top-left corner in pixels
/// and a uniform scale applied to the cutout's own size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: i64,
    pub y: i64,
    pub scale: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Placement { x: 0, y: 0, scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cutout {
    pub image: RgbaImage,
    pub placement: Placement,
}

/// Decodes a PNG to RGBA. Images without alpha are read as masks: the
/// luminance becomes the alpha channel.
pub fn decode_rgba(bytes: &[u8]) -> Result<RgbaImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    Ok(match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgb16(_) => {
            let luma = img.to_luma8();
            let mut rgba = img.to_rgba8();
            for (p, l) in rgba.pixels_mut().zip(luma.pixels()) {
                p.0[3] = l.0[0];
            }
            rgba
        }
        other => other.to_rgba8(),
    })
}

pub fn encode_rgba(img: &RgbaImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

/// Destination rectangle of the cutout on the background, in pixels.
fn display_rect(cutout: &Cutout) -> (i64, i64, i64, i64) {
    let p = cutout.placement;
    let w = (cutout.image.width() as f64 * p.scale).round() as i64;
    let h = (cutout.image.height() as f64 * p.scale).round() as i64;
    (p.x, p.y, w, h)
}

/// Darkens `background` by the radiance-domain `shadow` divided by the
/// unoccluded total, then alpha-blends the cutout on top. The shadow and
/// the cutout share the cutout's display rectangle.
pub fn composite(background: &RgbaImage, shadow: &ShadowMap, total: f64, cutout: &Cutout) -> Result<RgbaImage> {
    if shadow.domain != ShadowDomain::Radiance {
        return Err(Error::Domain("compositing needs a radiance-domain shadow".into()));
    }
    if !(cutout.placement.scale > 0.0) || !cutout.placement.scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cutout scale must be positive, got {}",
            cutout.placement.scale
        )));
    }
    let mut out = background.clone();
    let (rx, ry, rw, rh) = display_rect(cutout);
    if rw <= 0 || rh <= 0 {
        return Ok(out);
    }
    let (sw, sh) = shadow.dims();
    let (cw, ch) = (cutout.image.width() as i64, cutout.image.height() as i64);
    let receiver = shadow.receiver.as_deref();
    let x0 = rx.max(0);
    let y0 = ry.max(0);
    let x1 = (rx + rw).min(out.width() as i64);
    let y1 = (ry + rh).min(out.height() as i64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (fx, fy) = ((x - rx) as f64 / rw as f64, (y - ry) as f64 / rh as f64);
            let sx = ((fx * sw as f64) as usize).min(sw - 1);
            let sy = ((fy * sh as f64) as usize).min(sh - 1);
            let is_receiver = receiver.map_or(true, |r| r.get(sx, sy) > 0.0);
            let factor = if total > 0.0 && is_receiver {
                (shadow.pixels.get(sx, sy) as f64 / total).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let px = out.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                px.0[c] = (px.0[c] as f64 * factor).round() as u8;
            }
            let cx = ((fx * cw as f64) as i64).min(cw - 1) as u32;
            let cy = ((fy * ch as f64) as i64).min(ch - 1) as u32;
            let src = cutout.image.get_pixel(cx, cy).0;
            let a = src[3] as f64 / 255.0;
            if a > 0.0 {
                for c in 0..3 {
                    px.0[c] = (src[c] as f64 * a + px.0[c] as f64 * (1.0 - a)).round() as u8;
                }
            }
        }
    }
    Ok(out)
}
