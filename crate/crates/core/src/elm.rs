//! Environment light maps as Gaussian mixtures over a lat-long panorama.
//!
//! Light positions live in normalized panorama coordinates: `x` is azimuth
//! (periodic), `y` is the polar coordinate measured down from the zenith.
//! The upper half (`y < 0.5`) is above the horizon.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::image::ImageBuffer;

pub const ELM_WIDTH: usize = 512;
pub const ELM_HEIGHT: usize = 256;

pub const MAX_LIGHTS: usize = 50;
pub const MAX_INTENSITY: f64 = 3.0;
pub const MAX_SIGMA2: f64 = 0.1;
pub const MAX_AMBIENT: f64 = 0.05;

/// Gaussian contributions vanish beyond this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLight {
    pub x: f64,
    pub y: f64,
    pub intensity: f64,
    pub sigma2: f64,
}

impl GaussianLight {
    pub fn new(x: f64, y: f64, intensity: f64, sigma2: f64) -> Self {
        GaussianLight {
            x,
            y,
            intensity,
            sigma2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.intensity >= 0.0) || !self.intensity.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "intensity must be non-negative, got {}",
                self.intensity
            )));
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::InvalidParameter("light position must be finite".into()));
        }
        Ok(())
    }

    /// Inside the sampled parameter ranges.
    pub fn in_sampling_range(&self) -> bool {
        (0.0..=1.0).contains(&self.x)
            && (0.0..=1.0).contains(&self.y)
            && (0.0..=MAX_INTENSITY).contains(&self.intensity)
            && self.sigma2 > 0.0
            && self.sigma2 <= MAX_SIGMA2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvLightMap {
    pub width: usize,
    pub height: usize,
    pub ambient: f64,
    pub lights: Vec<GaussianLight>,
}

impl Default for EnvLightMap {
    fn default() -> Self {
        EnvLightMap::new(Vec::new(), 0.0)
    }
}

impl EnvLightMap {
    pub fn new(lights: Vec<GaussianLight>, ambient: f64) -> Self {
        EnvLightMap {
            width: ELM_WIDTH,
            height: ELM_HEIGHT,
            ambient,
            lights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("light map has zero size".into()));
        }
        if !(self.ambient >= 0.0) || !self.ambient.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ambient must be non-negative, got {}",
                self.ambient
            )));
        }
        self.lights.iter().try_for_each(GaussianLight::validate)
    }

    /// Rasterizes the full panorama.
    pub fn rasterize(&self) -> Result<ImageBuffer> {
        self.rasterize_rows(self.height)
    }

    /// Rasterizes only the first `rows` rows; the rest stay at zero. Used
    /// by composition, which ignores the lower hemisphere.
    pub fn rasterize_rows(&self, rows: usize) -> Result<ImageBuffer> {
        self.validate()?;
        let (w, h) = (self.width, self.height);
        let rows = rows.min(h);
        let mut img = ImageBuffer::new(w, h);
        img.data_mut()[..rows * w].fill(self.ambient as f32);
        // separable factors, truncated radially
        let mut gx = vec![0.0f64; w];
        let mut dx2 = vec![0.0f64; w];
        for light in &self.lights {
            if light.intensity == 0.0 {
                continue;
            }
            let inv = 1.0 / (2.0 * light.sigma2);
            let cutoff2 = TRUNCATION_SIGMAS * TRUNCATION_SIGMAS * light.sigma2;
            for (u, (g, d2)) in gx.iter_mut().zip(dx2.iter_mut()).enumerate() {
                let mut dx = (u as f64 / w as f64 - light.x).rem_euclid(1.0);
                if dx > 0.5 {
                    dx = 1.0 - dx;
                }
                *d2 = dx * dx;
                *g = (-*d2 * inv).exp();
            }
            let cutoff = cutoff2.sqrt();
            let v_lo = (((light.y - cutoff) * h as f64).floor().max(0.0)) as usize;
            let v_hi = (((light.y + cutoff) * h as f64).ceil() as i64 + 1).clamp(0, rows as i64) as usize;
            for v in v_lo..v_hi {
                let dy = v as f64 / h as f64 - light.y;
                let dy2 = dy * dy;
                if dy2 > cutoff2 {
                    continue;
                }
                let row_scale = light.intensity * (-dy2 * inv).exp();
                let row = &mut img.data_mut()[v * w..(v + 1) * w];
                for u in 0..w {
                    if dx2[u] + dy2 <= cutoff2 {
                        row[u] += (row_scale * gx[u]) as f32;
                    }
                }
            }
        }
        Ok(img)
    }

    pub fn from_json(text: &str) -> Result<EnvLightMap> {
        let elm: EnvLightMap = serde_json::from_str(text)?;
        elm.validate()?;
        Ok(elm)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<EnvLightMap> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Draws a random mixture: 1..=50 lights, positions in the unit square,
/// intensity in [0,3], variance in (0, 0.1], ambient in [0, 0.05].
pub fn sample_elm(seed: u64) -> EnvLightMap {
    sample_elm_with_min_sigma2(seed, 0.0)
}

/// Like [`sample_elm`] with variances drawn from `(min_sigma2, 0.1]`
/// instead, for experiments that exclude near-point lights.
pub fn sample_elm_with_min_sigma2(seed: u64, min_sigma2: f64) -> EnvLightMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = (MAX_SIGMA2 - min_sigma2.clamp(0.0, MAX_SIGMA2)).max(f64::MIN_POSITIVE);
    let k = rng.random_range(1..=MAX_LIGHTS);
    let lights = (0..k)
        .map(|_| GaussianLight {
            x: rng.random_range(0.0..=1.0),
            y: rng.random_range(0.0..=1.0),
            intensity: rng.random_range(0.0..=MAX_INTENSITY),
            // (0, max]: reflect the half-open [0, max) draw
            sigma2: MAX_SIGMA2 - rng.random_range(0.0..span),
        })
        .collect();
    let ambient = rng.random_range(0.0..=MAX_AMBIENT);
    EnvLightMap::new(lights, ambient)
}

/// Unit direction for the center of ELM pixel `(u, v)` on a 512x256
/// lat-long map. Azimuth `0.5` (panorama center) points along `-z`, away
/// from the camera.
pub fn pixel_direction(u: usize, v: usize) -> Result<Vec3> {
    pixel_direction_in(u, v, ELM_WIDTH, ELM_HEIGHT)
}

pub fn pixel_direction_in(u: usize, v: usize, width: usize, height: usize) -> Result<Vec3> {
    if u >= width || v >= height {
        return Err(Error::OutOfBounds {
            u,
            v,
            width,
            height,
        });
    }
    let phi = 2.0 * PI * (u as f64 + 0.5) / width as f64;
    let theta = PI * (v as f64 + 0.5) / height as f64;
    Ok(Vec3::new(
        -theta.sin() * phi.sin(),
        theta.cos(),
        theta.sin() * phi.cos(),
    ))
}
