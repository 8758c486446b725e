//! Camera poses, ground plane and the per-view pixel geometry shared by
//! masks, hard shadows and AO.
//!
//! World frame: `+y` is up, the camera orbits on the `+z` side looking at
//! the origin. Yaw rotates the object, pitch raises the camera. The image is
//! framed with a vertical lens shift so the highest projected vertex sits on
//! the top edge of the frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Ray, Vec3};
use crate::image::ImageBuffer;
use crate::mesh::Mesh;

pub const DEFAULT_FOV_Y: f64 = 45.0;
pub const DEFAULT_IMAGE_SIZE: usize = 256;
/// Camera distance from the box center, in normalized scene units.
pub const CAMERA_DISTANCE: f64 = 2.5;

pub const CANONICAL_YAWS: [f64; 5] = [0.0, 45.0, -45.0, 90.0, -90.0];
pub const CANONICAL_PITCHES: [f64; 3] = [0.0, 15.0, 30.0];

/// Missing JSON fields take their defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraPose {
    pub yaw: f64,
    pub pitch: f64,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraPose {
    pub fn new(yaw: f64, pitch: f64) -> Self {
        CameraPose {
            yaw,
            pitch,
            fov_y: DEFAULT_FOV_Y,
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
        }
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Default for CameraPose {
    fn default() -> Self {
        CameraPose::new(0.0, 0.0)
    }
}

/// The fifteen dataset views, yaw-major.
pub fn canonical_poses() -> Vec<CameraPose> {
    CANONICAL_YAWS
        .iter()
        .flat_map(|&yaw| CANONICAL_PITCHES.iter().map(move |&pitch| CameraPose::new(yaw, pitch)))
        .collect()
}

/// Horizontal receiver plane `y = height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub height: f64,
}

impl GroundPlane {
    /// Plane through the bottom face of the mesh's min-max box.
    pub fn below(mesh: &Mesh) -> GroundPlane {
        if mesh.vertices().is_empty() {
            return GroundPlane { height: -0.5 };
        }
        GroundPlane {
            height: mesh.bounds().min.y,
        }
    }
}

/// Pinhole camera with a vertical lens shift.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    tan_half_fov: f64,
    aspect: f64,
    /// Subtracted from normalized device y after projection.
    shift_y: f64,
    width: usize,
    height: usize,
}

/// Projected point in continuous pixel coordinates (pixel centers at +0.5).
#[derive(Clone, Copy, Debug)]
pub struct Projected {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl Camera {
    /// Frames the already-posed mesh for the given pitch and image size.
    pub fn framing(mesh: &Mesh, pose: &CameraPose) -> Camera {
        let pitch = pose.pitch.to_radians();
        let forward = Vec3::new(0.0, -pitch.sin(), -pitch.cos());
        let right = Vec3::new(1.0, 0.0, 0.0);
        let up = right.cross(&forward);
        let position = -forward * CAMERA_DISTANCE;
        let tan_half_fov = (pose.fov_y.to_radians() * 0.5).tan();
        let mut cam = Camera {
            position,
            forward,
            right,
            up,
            tan_half_fov,
            aspect: pose.width as f64 / pose.height as f64,
            shift_y: 0.0,
            width: pose.width,
            height: pose.height,
        };
        let top = mesh
            .vertices()
            .iter()
            .map(|v| {
                let rel = v - position;
                rel.dot(&up) / rel.dot(&forward) / tan_half_fov
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if top.is_finite() {
            cam.shift_y = top - 1.0;
        }
        cam
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Ray through continuous pixel coordinates `(px, py)`.
    pub fn ray(&self, px: f64, py: f64) -> Ray {
        let ndc_x = 2.0 * px / self.width as f64 - 1.0;
        let ndc_y = 1.0 - 2.0 * py / self.height as f64;
        let dir = self.forward
            + self.right * (ndc_x * self.tan_half_fov * self.aspect)
            + self.up * ((ndc_y + self.shift_y) * self.tan_half_fov);
        Ray::new(self.position, dir.normalize())
    }

    pub fn pixel_ray(&self, x: usize, y: usize) -> Ray {
        self.ray(x as f64 + 0.5, y as f64 + 0.5)
    }

    #[inline]
    pub fn depth(&self, p: &Vec3) -> f64 {
        (p - self.position).dot(&self.forward)
    }

    /// Projects a point in front of the camera; `None` when `depth <= near`.
    #[inline]
    pub fn project(&self, p: &Vec3, near: f64) -> Option<Projected> {
        let rel = p - self.position;
        let depth = rel.dot(&self.forward);
        if depth <= near {
            return None;
        }
        let ndc_x = rel.dot(&self.right) / depth / (self.tan_half_fov * self.aspect);
        let ndc_y = rel.dot(&self.up) / depth / self.tan_half_fov - self.shift_y;
        Some(Projected {
            x: (ndc_x + 1.0) * 0.5 * self.width as f64,
            y: (1.0 - ndc_y) * 0.5 * self.height as f64,
            depth,
        })
    }
}

/// Per-pixel geometry of one (mesh, pose) pair: the posed mesh, the camera,
/// which pixels see the ground, and where.
#[derive(Clone, Debug)]
pub struct View {
    pub mesh: Mesh,
    pub pose: CameraPose,
    pub ground: GroundPlane,
    pub camera: Camera,
    /// Object coverage, exactly 0 or 1.
    pub mask: ImageBuffer,
    /// Ground point for each receiver pixel, `None` for sky and object
    /// pixels.
    ground_points: Vec<Option<Vec3>>,
}

impl View {
    /// Poses a normalized mesh and rests it on its own ground plane.
    pub fn new(mesh: &Mesh, pose: CameraPose) -> View {
        let posed = mesh.rotated_y(pose.yaw);
        let ground = GroundPlane::below(&posed);
        View::with_ground(posed, pose, ground)
    }

    /// `mesh` must already be rotated into the pose.
    pub fn with_ground(mesh: Mesh, pose: CameraPose, ground: GroundPlane) -> View {
        let camera = Camera::framing(&mesh, &pose);
        let (w, h) = (pose.width, pose.height);
        let rows: Vec<(Vec<f32>, Vec<Option<Vec3>>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut mask_row = vec![0.0f32; w];
                let mut ground_row = vec![None; w];
                for x in 0..w {
                    let ray = camera.pixel_ray(x, y);
                    let t_ground = if ray.dir.y < 0.0 {
                        (ground.height - ray.origin.y) / ray.dir.y
                    } else {
                        f64::INFINITY
                    };
                    match mesh.intersect(&ray, 0.0, f64::INFINITY) {
                        Some(hit) if hit.t <= t_ground => mask_row[x] = 1.0,
                        _ if t_ground.is_finite() && t_ground > 0.0 => {
                            ground_row[x] = Some(ray.at(t_ground))
                        }
                        _ => {}
                    }
                }
                (mask_row, ground_row)
            })
            .collect();
        let mut mask = Vec::with_capacity(w * h);
        let mut ground_points = Vec::with_capacity(w * h);
        for (m, g) in rows {
            mask.extend(m);
            ground_points.extend(g);
        }
        View {
            mesh,
            pose,
            ground,
            camera,
            mask: ImageBuffer::from_vec(w, h, mask).expect("row sizes"),
            ground_points,
        }
    }

    pub fn width(&self) -> usize {
        self.pose.width
    }

    pub fn height(&self) -> usize {
        self.pose.height
    }

    #[inline]
    pub fn ground_point(&self, x: usize, y: usize) -> Option<Vec3> {
        self.ground_points[y * self.pose.width + x]
    }

    pub fn ground_points(&self) -> &[Option<Vec3>] {
        &self.ground_points
    }

    /// 1 on receiver pixels, 0 elsewhere.
    pub fn receiver_mask(&self) -> ImageBuffer {
        let data = self
            .ground_points
            .iter()
            .map(|g| if g.is_some() { 1.0 } else { 0.0 })
            .collect();
        ImageBuffer::from_vec(self.pose.width, self.pose.height, data).unwrap()
    }
}

/// Binary cutout mask of a normalized mesh seen from `pose`.
pub fn render_mask(mesh: &Mesh, pose: &CameraPose) -> ImageBuffer {
    let posed = mesh.rotated_y(pose.yaw);
    let camera = Camera::framing(&posed, pose);
    let (w, h) = (pose.width, pose.height);
    let data: Vec<f32> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let posed = &posed;
            (0..w).map(move |x| {
                let ray = camera.pixel_ray(x, y);
                if posed.occluded(&ray, 0.0, f64::INFINITY) {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    ImageBuffer::from_vec(w, h, data).unwrap()
}
