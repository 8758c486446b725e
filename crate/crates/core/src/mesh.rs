//! Triangle meshes: OBJ ingest, canonical normalization and a few
//! procedural shapes used by tests, benchmarks and demos.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::bvh::{Bvh, Hit};
use crate::error::{Error, Result};
use crate::geometry::{intersect_triangle, Aabb, Ray, Vec3};

/// Meshes whose box center and longest edge are this close to canonical are
/// left untouched by [`Mesh::normalized`].
const NORMALIZED_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    bvh: Bvh,
    closed: bool,
}

impl Mesh {
    /// Builds a mesh as given, without normalization.
    pub fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Mesh> {
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k as usize >= vertices.len()) {
                return Err(Error::Degenerate(format!(
                    "triangle {i} references a missing vertex"
                )));
            }
        }
        let bvh = Bvh::build(&vertices, &triangles);
        let closed = is_closed(&triangles);
        Ok(Mesh {
            vertices,
            triangles,
            bvh,
            closed,
        })
    }

    pub fn empty() -> Mesh {
        Mesh {
            vertices: Vec::new(),
            triangles: Vec::new(),
            bvh: Bvh::build(&[], &[]),
            closed: true,
        }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Translates the min-max box center to the origin and scales the
    /// longest box edge to 1.
    pub fn normalized(&self) -> Result<Mesh> {
        if self.triangles.is_empty() {
            return Err(Error::Degenerate("mesh has no faces".into()));
        }
        let b = self.bounds();
        let longest = b.extent().max();
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(Error::Degenerate("mesh has zero extent".into()));
        }
        let center = b.center();
        // within rounding of canonical already; rescaling again would drift
        if center.norm() <= NORMALIZED_TOLERANCE && (longest - 1.0).abs() <= NORMALIZED_TOLERANCE {
            return Ok(self.clone());
        }
        let s = 1.0 / longest;
        let vertices = self.vertices.iter().map(|v| (v - center) * s).collect();
        Mesh::from_parts(vertices, self.triangles.clone())
    }

    /// Rotates about the vertical axis by `yaw_deg` degrees.
    pub fn rotated_y(&self, yaw_deg: f64) -> Mesh {
        if yaw_deg == 0.0 {
            return self.clone();
        }
        let (s, c) = yaw_deg.to_radians().sin_cos();
        let vertices = self
            .vertices
            .iter()
            .map(|v| Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z))
            .collect();
        Mesh::from_parts(vertices, self.triangles.clone()).expect("indices unchanged")
    }

    pub fn translated(&self, offset: Vec3) -> Mesh {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        Mesh::from_parts(vertices, self.triangles.clone()).expect("indices unchanged")
    }

    pub fn scaled(&self, factors: Vec3) -> Mesh {
        let vertices = self.vertices.iter().map(|v| v.component_mul(&factors)).collect();
        Mesh::from_parts(vertices, self.triangles.clone()).expect("indices unchanged")
    }

    /// Concatenates the geometry of several meshes.
    pub fn merge(parts: &[&Mesh]) -> Mesh {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for m in parts {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            triangles.extend(m.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        }
        Mesh::from_parts(vertices, triangles).expect("indices offset consistently")
    }

    /// Same geometry with triangles in a different order.
    pub fn with_triangle_order(&self, order: &[usize]) -> Mesh {
        let triangles = order.iter().map(|&i| self.triangles[i]).collect();
        Mesh::from_parts(self.vertices.clone(), triangles).expect("indices unchanged")
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.bvh.intersect(ray, t_min, t_max)
    }

    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.bvh.occluded(ray, t_min, t_max)
    }

    /// Closest hit by testing every triangle; reference for the BVH.
    pub fn intersect_brute_force(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(i);
            if let Some(t) = intersect_triangle(ray, &a, &b, &c, t_min, limit) {
                limit = t;
                best = Some(Hit { t, triangle: i });
            }
        }
        best
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

/// True when every directed edge appears exactly once and its reverse
/// exactly once, i.e. the surface is watertight and consistently wound.
fn is_closed(triangles: &[[u32; 3]]) -> bool {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            *edges.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    !edges.is_empty()
        && edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
}

/// Parses the OBJ `v`/`f` subset without normalizing. Faces with more than
/// three corners are fan-triangulated; texture and normal indices are
/// ignored.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| {
                        f.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| Error::format(line_no, format!("invalid coordinate `{f}`")))
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(Error::format(line_no, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let corners: Vec<u32> = fields
                    .map(|f| resolve_index(f, vertices.len(), line_no))
                    .collect::<Result<_>>()?;
                if corners.len() < 3 {
                    return Err(Error::format(line_no, "face needs at least three vertices"));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::Degenerate("mesh has no faces".into()));
    }
    Mesh::from_parts(vertices, triangles)
}

fn resolve_index(field: &str, vertex_count: usize, line_no: usize) -> Result<u32> {
    let head = field.split('/').next().unwrap_or("");
    let idx: i64 = head
        .parse()
        .map_err(|_| Error::format(line_no, format!("invalid face index `{field}`")))?;
    let resolved = if idx > 0 {
        idx - 1
    } else if idx < 0 {
        vertex_count as i64 + idx
    } else {
        -1
    };
    if resolved < 0 || resolved >= vertex_count as i64 {
        return Err(Error::format(
            line_no,
            format!("face index {idx} out of range ({vertex_count} vertices defined)"),
        ));
    }
    Ok(resolved as u32)
}

/// Reads an OBJ file and normalizes it into canonical pose.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)?.normalized()
}

/// Procedural test geometry. All shapes are closed and outward-facing
/// except where noted.
pub mod shapes {
    use super::*;
    use std::f64::consts::PI;

    /// Axis-aligned box spanning `min..max`.
    pub fn cuboid(min: Vec3, max: Vec3) -> Mesh {
        let b = Aabb { min, max };
        let vertices = b.corners().to_vec();
        // corner bit order: x=1, y=2, z=4
        let quads: [[u32; 4]; 6] = [
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
        ];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        Mesh::from_parts(vertices, triangles).unwrap()
    }

    /// Cube spanning `[-0.5, 0.5]^3`.
    pub fn unit_cube() -> Mesh {
        cuboid(Vec3::repeat(-0.5), Vec3::repeat(0.5))
    }

    /// Latitude/longitude sphere of radius `r` centered at the origin.
    pub fn uv_sphere(radius: f64, rings: usize, segments: usize) -> Mesh {
        let rings = rings.max(2);
        let segments = segments.max(3);
        let mut vertices = vec![Vec3::new(0.0, radius, 0.0)];
        for i in 1..rings {
            let theta = PI * i as f64 / rings as f64;
            for j in 0..segments {
                let phi = 2.0 * PI * j as f64 / segments as f64;
                vertices.push(Vec3::new(
                    radius * theta.sin() * phi.cos(),
                    radius * theta.cos(),
                    radius * theta.sin() * phi.sin(),
                ));
            }
        }
        let bottom = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, -radius, 0.0));
        let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
        let mut triangles = Vec::new();
        for j in 0..segments {
            triangles.push([0, ring(1, j + 1), ring(1, j)]);
        }
        for i in 1..rings - 1 {
            for j in 0..segments {
                let (a, b) = (ring(i, j), ring(i, j + 1));
                let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        for j in 0..segments {
            triangles.push([bottom, ring(rings - 1, j), ring(rings - 1, j + 1)]);
        }
        Mesh::from_parts(vertices, triangles).unwrap()
    }

    /// Capped vertical cylinder with its base centered at `base`.
    pub fn cylinder(base: Vec3, radius: f64, height: f64, segments: usize) -> Mesh {
        let segments = segments.max(3);
        let mut vertices = Vec::with_capacity(2 * segments + 2);
        for y in [0.0, height] {
            for j in 0..segments {
                let phi = 2.0 * PI * j as f64 / segments as f64;
                vertices.push(base + Vec3::new(radius * phi.cos(), y, radius * phi.sin()));
            }
        }
        let (bc, tc) = (vertices.len() as u32, vertices.len() as u32 + 1);
        vertices.push(base);
        vertices.push(base + Vec3::new(0.0, height, 0.0));
        let n = segments as u32;
        let mut triangles = Vec::new();
        for j in 0..n {
            let k = (j + 1) % n;
            triangles.push([j, n + k, k]);
            triangles.push([j, n + j, n + k]);
            triangles.push([bc, j, k]);
            triangles.push([tc, n + k, n + j]);
        }
        Mesh::from_parts(vertices, triangles).unwrap()
    }

    /// A stool-and-lamp style composite of roughly 5k triangles: a round
    /// seat on four legs with a sphere resting on top. Stands in for a
    /// scanned catalogue model.
    pub fn lamp_stool() -> Mesh {
        let seat = cylinder(Vec3::new(0.0, 0.55, 0.0), 0.45, 0.08, 96);
        let legs: Vec<Mesh> = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
            .iter()
            .map(|&(sx, sz)| cylinder(Vec3::new(0.28 * sx, 0.0, 0.28 * sz), 0.035, 0.55, 24))
            .collect();
        let stem = cylinder(Vec3::new(0.0, 0.63, 0.0), 0.03, 0.25, 24);
        let shade = uv_sphere(0.22, 40, 56).translated(Vec3::new(0.0, 1.08, 0.0));
        let mut parts: Vec<&Mesh> = vec![&seat, &stem, &shade];
        parts.extend(legs.iter());
        Mesh::merge(&parts)
    }

    /// Thin vertical pole of unit height, normalized scale.
    pub fn pole(radius: f64) -> Mesh {
        cylinder(Vec3::new(0.0, -0.5, 0.0), radius, 1.0, 16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: Vec3, b: Vec3) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn cube_in_0_10_normalizes_to_unit_box() {
        let m = shapes::cuboid(Vec3::zeros(), Vec3::repeat(10.0));
        let obj = m.to_obj();
        let n = parse_obj(&obj).unwrap().normalized().unwrap();
        let b = n.bounds();
        assert!(approx(b.min, Vec3::repeat(-0.5)));
        assert!(approx(b.max, Vec3::repeat(0.5)));
    }

    #[test]
    fn single_triangle_is_valid() {
        let m = parse_obj("v 0 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\n").unwrap().normalized().unwrap();
        assert_eq!(m.triangle_count(), 1);
        assert!(approx(m.bounds().center(), Vec3::zeros()));
        assert!((m.bounds().extent().max() - 1.0).abs() < 1e-12);
        assert!(!m.is_closed());
    }

    #[test]
    fn no_faces_is_degenerate() {
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\n"), Err(Error::Degenerate(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 4, .. }), "{err}");
        let err = parse_obj("# c\nv 0 zero 0\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn polygons_fan_triangulate_and_slashes_parse() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 -1//1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let m = shapes::lamp_stool().normalized().unwrap();
        let mm = m.normalized().unwrap();
        for (a, b) in m.vertices().iter().zip(mm.vertices()) {
            assert!(approx(*a, *b));
        }
    }

    #[test]
    fn procedural_shapes_are_closed() {
        assert!(shapes::unit_cube().is_closed());
        assert!(shapes::uv_sphere(0.5, 8, 12).is_closed());
        assert!(shapes::cylinder(Vec3::zeros(), 0.5, 1.0, 8).is_closed());
        let stool = shapes::lamp_stool();
        assert!(stool.is_closed());
        let n = stool.triangle_count();
        assert!((4000..=6000).contains(&n), "{n} triangles");
    }

    #[test]
    fn yaw_rotation_keeps_vertical_extent() {
        let m = shapes::unit_cube().rotated_y(45.0);
        let b = m.bounds();
        assert!((b.min.y + 0.5).abs() < 1e-12 && (b.max.y - 0.5).abs() < 1e-12);
        assert!((b.max.x - 0.5f64.hypot(0.5)).abs() < 1e-12);
    }
}
