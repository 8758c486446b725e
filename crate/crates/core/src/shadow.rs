//! Hard shadows on the ground plane for a single directional light.
//!
//! The fast path projects every triangle along the light direction onto the
//! receiver plane and scan-converts the projected polygons in camera image
//! space. A ground point is in shadow exactly when the ray from it toward
//! the light crosses a triangle, which is when it lies inside that
//! triangle's projection, so the result matches per-pixel ray casting up to
//! pixel centers that land on an edge. [`hard_shadow_raycast`] keeps the
//! ray-cast formulation as a reference.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};
use crate::image::ImageBuffer;
use crate::mesh::Mesh;
use crate::scene::{CameraPose, GroundPlane, View};

/// Offset applied to shadow and AO ray origins, in scene units.
pub const RAY_EPSILON: f64 = 1e-4;
/// Near clipping distance for projected shadow polygons.
const NEAR: f64 = 1e-3;

/// Which algorithm produces hard shadows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShadowMethod {
    #[default]
    Projection,
    RayCast,
}

/// Precomputed per-view state for casting many hard shadows.
pub struct ShadowCaster<'a> {
    view: &'a View,
    receiver: Vec<bool>,
    /// Triangles that can contribute; for closed meshes one facing set per
    /// light suffices, see [`ShadowCaster::cast`].
    triangles: Vec<([u32; 3], Vec3)>,
    closed: bool,
}

/// Reusable scratch buffers; one per worker.
pub struct CastScratch {
    stamp: Vec<u32>,
    generation: u32,
    ground: Vec<Vec3>,
    projected: Vec<Option<(f64, f64)>>,
}

impl CastScratch {
    pub fn new(pixels: usize) -> Self {
        CastScratch {
            stamp: vec![0; pixels],
            generation: 0,
            ground: Vec::new(),
            projected: Vec::new(),
        }
    }

    fn next_generation(&mut self) -> u32 {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.fill(0);
            self.generation = 1;
        }
        self.generation
    }
}

impl<'a> ShadowCaster<'a> {
    pub fn new(view: &'a View) -> Self {
        let mesh = &view.mesh;
        let receiver = view.ground_points().iter().map(Option::is_some).collect();
        let triangles = mesh
            .triangles()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let [a, b, c] = mesh.triangle(i);
                (t, (b - a).cross(&(c - a)))
            })
            .collect();
        ShadowCaster {
            view,
            receiver,
            triangles,
            closed: mesh.is_closed(),
        }
    }

    pub fn view(&self) -> &View {
        self.view
    }

    pub fn pixel_count(&self) -> usize {
        self.receiver.len()
    }

    pub fn scratch(&self) -> CastScratch {
        CastScratch::new(self.receiver.len())
    }

    /// Calls `visit` once for every receiver pixel shadowed from `dir`.
    /// `dir` points toward the light and must have positive `y`.
    pub fn cast(&self, dir: &Vec3, scratch: &mut CastScratch, mut visit: impl FnMut(usize)) {
        debug_assert!(dir.y > 0.0);
        let mesh = &self.view.mesh;
        let camera = &self.view.camera;
        let g = self.view.ground.height;
        let (w, h) = camera.image_size();
        let generation = scratch.next_generation();

        scratch.ground.clear();
        scratch.projected.clear();
        for v in mesh.vertices() {
            let p = v - dir * ((v.y - g) / dir.y);
            scratch.ground.push(p);
            scratch.projected.push(camera.project(&p, NEAR).map(|q| (q.x, q.y)));
        }

        let mut poly: Vec<(f64, f64)> = Vec::with_capacity(8);
        let mut clipped: Vec<Vec3> = Vec::with_capacity(8);
        for (t, normal) in &self.triangles {
            // A line along `dir` through a closed, consistently oriented
            // surface crosses it through faces of both orientations, so one
            // facing set covers the whole shadow. Edge-on faces project to
            // segments.
            let facing = normal.dot(dir);
            if self.closed && facing <= 0.0 || facing == 0.0 {
                continue;
            }
            poly.clear();
            let corners = [t[0] as usize, t[1] as usize, t[2] as usize];
            if corners.iter().all(|&k| scratch.projected[k].is_some()) {
                poly.extend(corners.iter().map(|&k| scratch.projected[k].unwrap()));
            } else {
                clipped.clear();
                clip_near(
                    corners.map(|k| scratch.ground[k]),
                    |p| camera.depth(p) - NEAR * 2.0,
                    &mut clipped,
                );
                for p in &clipped {
                    if let Some(q) = camera.project(p, NEAR) {
                        poly.push((q.x, q.y));
                    }
                }
                if poly.len() < 3 {
                    continue;
                }
            }
            fill_convex(&poly, w, h, |idx| {
                if self.receiver[idx] && scratch.stamp[idx] != generation {
                    scratch.stamp[idx] = generation;
                    visit(idx);
                }
            });
        }
    }

    /// Binary hard shadow image for one direction.
    pub fn render(&self, dir: &Vec3, scratch: &mut CastScratch) -> ImageBuffer {
        let (w, h) = self.view.camera.image_size();
        let mut img = ImageBuffer::new(w, h);
        let data = img.data_mut();
        self.cast(dir, scratch, |i| data[i] = 1.0);
        img
    }
}

/// Sutherland–Hodgman against one plane, keeping `signed(p) > 0`.
fn clip_near(tri: [Vec3; 3], signed: impl Fn(&Vec3) -> f64, out: &mut Vec<Vec3>) {
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        let (da, db) = (signed(&a), signed(&b));
        if da > 0.0 {
            out.push(a);
        }
        if (da > 0.0) != (db > 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
}

/// Scan-converts a convex polygon, sampling pixel centers with half-open
/// edges so adjacent polygons never leave cracks.
fn fill_convex(poly: &[(f64, f64)], width: usize, height: usize, mut visit: impl FnMut(usize)) {
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, y) in poly {
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let row_lo = (y_min - 0.5).ceil().max(0.0);
    let row_hi = (y_max - 0.5).ceil().min(height as f64);
    if !(row_lo < row_hi) {
        return;
    }
    let n = poly.len();
    for row in row_lo as usize..row_hi as usize {
        let yc = row as f64 + 0.5;
        let (mut xl, mut xr) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                let x = x0 + (yc - y0) * (x1 - x0) / (y1 - y0);
                xl = xl.min(x);
                xr = xr.max(x);
            }
        }
        if !(xl < xr) {
            continue;
        }
        let col_lo = (xl - 0.5).ceil().max(0.0);
        let col_hi = (xr - 0.5).ceil().min(width as f64);
        if !(col_lo < col_hi) {
            continue;
        }
        let base = row * width;
        for col in col_lo as usize..col_hi as usize {
            visit(base + col);
        }
    }
}

fn check_direction(dir: &Vec3) -> Result<Vec3> {
    let n = dir.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidDirection("zero or non-finite direction".into()));
    }
    let d = dir / n;
    if d.y <= 0.0 {
        return Err(Error::InvalidDirection(format!(
            "direction ({:.4}, {:.4}, {:.4}) is not above the horizon",
            d.x, d.y, d.z
        )));
    }
    Ok(d)
}

/// Binary hard shadow in the camera frame: 1 on receiver pixels whose ray
/// toward `dir` hits the mesh. Object, sky and lit pixels are 0.
pub fn hard_shadow(mesh: &Mesh, pose: &CameraPose, ground: GroundPlane, dir: &Vec3) -> Result<ImageBuffer> {
    let d = check_direction(dir)?;
    let view = View::with_ground(mesh.rotated_y(pose.yaw), *pose, ground);
    hard_shadow_in(&view, &d, ShadowMethod::Projection)
}

pub fn hard_shadow_in(view: &View, dir: &Vec3, method: ShadowMethod) -> Result<ImageBuffer> {
    let d = check_direction(dir)?;
    Ok(match method {
        ShadowMethod::Projection => {
            let caster = ShadowCaster::new(view);
            let mut scratch = caster.scratch();
            caster.render(&d, &mut scratch)
        }
        ShadowMethod::RayCast => hard_shadow_raycast(view, &d),
    })
}

/// Per-pixel BVH ray casting from each ground point toward the light.
pub fn hard_shadow_raycast(view: &View, dir: &Vec3) -> ImageBuffer {
    let (w, h) = (view.width(), view.height());
    let data: Vec<f32> = view
        .ground_points()
        .par_iter()
        .map(|g| match g {
            Some(p) => {
                let ray = Ray::new(*p, *dir);
                if view.mesh.occluded(&ray, RAY_EPSILON, f64::INFINITY) {
                    1.0
                } else {
                    0.0
                }
            }
            None => 0.0,
        })
        .collect();
    ImageBuffer::from_vec(w, h, data).unwrap()
}
