//! Ground-plane ambient occlusion by Monte-Carlo hemisphere sampling, plus
//! morphological perturbation and brush edits of AO maps.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::image::ImageBuffer;
use crate::mesh::Mesh;
use crate::scene::View;

pub const DEFAULT_SPP: usize = 256;
pub const RAY_OFFSET: f64 = 1e-4;
pub const AO_EXPONENT: f64 = 1.0 / 3.0;
pub const MAX_PERTURB_RADIUS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct AoMap {
    pub pixels: ImageBuffer,
    pub samples_per_pixel: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AoSampling {
    /// Jittered `nx x ny` grid over the unit square.
    #[default]
    Stratified,
    /// Independent uniform samples.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AoOptions {
    pub spp: usize,
    pub seed: u64,
    pub sampling: AoSampling,
    /// Apply the cube-root contrast curve.
    pub apply_exponent: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            spp: DEFAULT_SPP,
            seed: 0,
            sampling: AoSampling::Stratified,
            apply_exponent: true,
        }
    }
}

impl AoOptions {
    pub fn with_spp(spp: usize) -> Self {
        AoOptions {
            spp,
            ..Default::default()
        }
    }
}

/// Largest divisor of `n` not exceeding `sqrt(n)`.
fn grid_dims(n: usize) -> (usize, usize) {
    let mut nx = (n as f64).sqrt() as usize;
    while nx > 1 && n % nx != 0 {
        nx -= 1;
    }
    let nx = nx.max(1);
    (nx, n / nx)
}

/// Maps the unit square to the upper hemisphere with density `cos / pi`.
#[inline]
fn cosine_direction(u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    Vec3::new(r * phi.cos(), (1.0 - u1).max(0.0).sqrt(), r * phi.sin())
}

fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel as u64);
    rng
}

/// Unoccluded fraction of the cosine-weighted hemisphere above a ground
/// point, before the contrast exponent.
pub fn estimate_exposure(
    mesh: &Mesh,
    point: &Vec3,
    spp: usize,
    sampling: AoSampling,
    rng: &mut impl Rng,
) -> f64 {
    let origin = point + Vec3::new(0.0, RAY_OFFSET, 0.0);
    let (nx, ny) = grid_dims(spp);
    let mut visible = 0usize;
    for k in 0..spp {
        let (u1, u2) = match sampling {
            AoSampling::Stratified => {
                let (i, j) = (k % nx, k / nx);
                (
                    (i as f64 + rng.random::<f64>()) / nx as f64,
                    (j as f64 + rng.random::<f64>()) / ny as f64,
                )
            }
            AoSampling::Independent => (rng.random::<f64>(), rng.random::<f64>()),
        };
        let ray = Ray::new(origin, cosine_direction(u1, u2));
        if !mesh.occluded(&ray, 0.0, f64::INFINITY) {
            visible += 1;
        }
    }
    visible as f64 / spp as f64
}

/// Exposure at one image pixel of `view`, using the same per-pixel random
/// stream as [`compute_ao`]. `None` for non-receiver pixels.
pub fn exposure_at(view: &View, x: usize, y: usize, options: &AoOptions) -> Option<f64> {
    let p = view.ground_point(x, y)?;
    let mut rng = pixel_rng(options.seed, y * view.width() + x);
    Some(estimate_exposure(&view.mesh, &p, options.spp, options.sampling, &mut rng))
}

pub fn compute_ao(view: &View, options: &AoOptions) -> Result<AoMap> {
    if options.spp == 0 {
        return Err(Error::InvalidParameter("spp must be at least 1".into()));
    }
    let w = view.width();
    let data: Vec<f32> = view
        .ground_points()
        .par_iter()
        .enumerate()
        .map(|(i, g)| match g {
            None => 1.0,
            Some(p) => {
                let mut rng = pixel_rng(options.seed, i);
                let a = estimate_exposure(&view.mesh, p, options.spp, options.sampling, &mut rng);
                if options.apply_exponent {
                    a.powf(AO_EXPONENT) as f32
                } else {
                    a as f32
                }
            }
        })
        .collect();
    Ok(AoMap {
        pixels: ImageBuffer::from_vec(w, view.height(), data)?,
        samples_per_pixel: options.spp,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Morphology {
    Erode,
    Dilate,
}

/// Grayscale erosion (min) or dilation (max) with a disk of `radius`
/// pixels. Out-of-image neighbours are ignored.
pub fn morph(img: &ImageBuffer, radius: usize, op: Morphology) -> ImageBuffer {
    let (w, h) = img.dims();
    let r = radius as isize;
    let spans: Vec<(isize, isize)> = (-r..=r)
        .map(|dy| {
            let half = (((r * r - dy * dy) as f64).sqrt()).floor() as isize;
            (dy, half)
        })
        .collect();
    let src = img.data();
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = src[y * w + x];
            for &(dy, half) in &spans {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let lo = (x as isize - half).max(0) as usize;
                let hi = (x as isize + half).min(w as isize - 1) as usize;
                let line = &src[yy as usize * w + lo..=yy as usize * w + hi];
                acc = match op {
                    Morphology::Erode => line.iter().fold(acc, |a, &v| a.min(v)),
                    Morphology::Dilate => line.iter().fold(acc, |a, &v| a.max(v)),
                };
            }
            *o = acc;
        }
    });
    ImageBuffer::from_vec(w, h, out).unwrap()
}

/// Applies `op` with `radius` to the occlusion channel `1 - A`.
pub fn morph_occlusion(ao: &AoMap, radius: usize, op: Morphology) -> AoMap {
    let occlusion = ao.pixels.map(|a| 1.0 - a);
    AoMap {
        pixels: morph(&occlusion, radius, op).map(|o| 1.0 - o),
        samples_per_pixel: ao.samples_per_pixel,
    }
}

/// The perturbation `perturb_ao` would pick for `seed`.
pub fn perturbation_for_seed(seed: u64) -> (Morphology, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = if rng.random_bool(0.5) {
        Morphology::Erode
    } else {
        Morphology::Dilate
    };
    (op, rng.random_range(1..=MAX_PERTURB_RADIUS))
}

/// Random erosion or dilation of the occluded region, radius 1 to 5 px.
pub fn perturb_ao(ao: &AoMap, seed: u64) -> AoMap {
    let (op, radius) = perturbation_for_seed(seed);
    morph_occlusion(ao, radius, op)
}

/// A soft disk brush stamp. Pixels move toward `value` with a weight that
/// is 1 in the interior and falls linearly to 0 over the outer quarter of
/// the radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoStroke {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub value: f64,
}

impl AoStroke {
    fn weight(&self, px: f64, py: f64) -> f64 {
        let d = ((px - self.x).powi(2) + (py - self.y).powi(2)).sqrt();
        if d >= self.radius {
            return 0.0;
        }
        let feather = (0.25 * self.radius).max(1.0);
        ((self.radius - d) / feather).min(1.0)
    }

    /// Whether pixel `(x, y)` (center at `+0.5`) lies inside the disk.
    pub fn covers(&self, x: usize, y: usize) -> bool {
        self.weight(x as f64 + 0.5, y as f64 + 0.5) > 0.0
    }
}

/// Applies strokes in order. Darkening strokes can only lower a pixel and
/// lightening strokes can only raise it; strokes off the image are clipped.
pub fn apply_strokes(ao: &mut ImageBuffer, strokes: &[AoStroke]) -> Result<()> {
    for s in strokes {
        if !(0.0..=1.0).contains(&s.value) || !(s.radius >= 0.0) || !s.x.is_finite() || !s.y.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "stroke value must be in [0,1] and radius non-negative: {s:?}"
            )));
        }
    }
    let (w, h) = ao.dims();
    for s in strokes {
        let x0 = (s.x - s.radius).floor().max(0.0) as usize;
        let y0 = (s.y - s.radius).floor().max(0.0) as usize;
        let x1 = ((s.x + s.radius).ceil().max(0.0) as usize).min(w);
        let y1 = ((s.y + s.radius).ceil().max(0.0) as usize).min(h);
        let v = s.value as f32;
        for y in y0..y1 {
            for x in x0..x1 {
                let wgt = s.weight(x as f64 + 0.5, y as f64 + 0.5) as f32;
                if wgt <= 0.0 {
                    continue;
                }
                let a = ao.get(x, y);
                let stamped = a + wgt * (v - a);
                let out = if v < a { a.min(stamped) } else { a.max(stamped) };
                ao.set(x, y, out);
            }
        }
    }
    Ok(())
}
