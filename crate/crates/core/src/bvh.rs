//! Bounding volume hierarchy over mesh triangles.
//!
//! Built top-down with a binned surface-area heuristic and flattened into a
//! depth-first node array. Triangle vertex data is copied into leaf order so
//! traversal touches contiguous memory.

use crate::geometry::{intersect_triangle, Aabb, Ray, Vec3};

const MAX_LEAF: usize = 4;
const BINS: usize = 12;

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle slot. Interior: index of the second child (the
    /// first child immediately follows the node).
    offset: u32,
    /// Triangle count for leaves, 0 for interior nodes.
    count: u32,
    axis: u8,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle corners in leaf order.
    tris: Vec<[Vec3; 3]>,
    /// Original triangle index for each leaf slot.
    ids: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: usize,
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    id: u32,
}

impl Bvh {
    pub fn build(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Bvh {
        let mut items: Vec<BuildItem> = triangles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let b = Aabb::from_points(t.iter().map(|&k| &vertices[k as usize]));
                BuildItem {
                    bounds: b,
                    centroid: b.center(),
                    id: i as u32,
                }
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * items.len().max(1));
        if !items.is_empty() {
            build_recursive(&mut items, &mut nodes, 0);
        }
        let tris = items
            .iter()
            .map(|it| {
                let t = triangles[it.id as usize];
                [
                    vertices[t[0] as usize],
                    vertices[t[1] as usize],
                    vertices[t[2] as usize],
                ]
            })
            .collect();
        let ids = items.iter().map(|it| it.id).collect();
        Bvh { nodes, tris, ids }
    }

    /// Closest hit with `t` in `(t_min, t_max)`.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        self.traverse(ray, t_min, &mut limit, |slot, t| {
            best = Some(Hit {
                t,
                triangle: self.ids[slot] as usize,
            });
            false
        });
        best
    }

    /// Any-hit query for shadow and visibility rays.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let mut found = false;
        let mut limit = t_max;
        self.traverse(ray, t_min, &mut limit, |_, _| {
            found = true;
            true
        });
        found
    }

    /// Walks the tree; `on_hit` returns `true` to stop early. `limit` shrinks
    /// to each accepted hit distance.
    #[inline]
    fn traverse(&self, ray: &Ray, t_min: f64, limit: &mut f64, mut on_hit: impl FnMut(usize, f64) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = ray.dir.map(|c| 1.0 / c);
        let neg = [inv.x < 0.0, inv.y < 0.0, inv.z < 0.0];
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.bounds.hit(&ray.origin, &inv, *limit).is_some() {
                if node.count > 0 {
                    let start = node.offset as usize;
                    for slot in start..start + node.count as usize {
                        let [a, b, c] = &self.tris[slot];
                        if let Some(t) = intersect_triangle(ray, a, b, c, t_min, *limit) {
                            *limit = t;
                            if on_hit(slot, t) {
                                return;
                            }
                        }
                    }
                } else {
                    // visit the near child first
                    let (first, second) = if neg[node.axis as usize] {
                        (node.offset as usize, idx + 1)
                    } else {
                        (idx + 1, node.offset as usize)
                    };
                    stack[sp] = second as u32;
                    sp += 1;
                    idx = first;
                    continue;
                }
            }
            if sp == 0 {
                break;
            }
            sp -= 1;
            idx = stack[sp] as usize;
        }
    }
}

fn build_recursive(items: &mut [BuildItem], nodes: &mut Vec<Node>, first: usize) -> usize {
    let bounds = items.iter().fold(Aabb::empty(), |b, it| b.union(&it.bounds));
    let index = nodes.len();
    nodes.push(Node {
        bounds,
        offset: first as u32,
        count: items.len() as u32,
        axis: 0,
    });
    if items.len() <= MAX_LEAF {
        return index;
    }

    let centroid_bounds = Aabb::from_points(items.iter().map(|it| &it.centroid));
    let axis = centroid_bounds.longest_axis();
    let lo = centroid_bounds.min[axis];
    let span = centroid_bounds.max[axis] - lo;
    if span <= 0.0 {
        // coincident centroids, splitting cannot help
        return index;
    }

    let bin_of = |c: f64| (((c - lo) / span * BINS as f64) as usize).min(BINS - 1);
    let mut bin_bounds = [Aabb::empty(); BINS];
    let mut bin_counts = [0usize; BINS];
    for it in items.iter() {
        let b = bin_of(it.centroid[axis]);
        bin_bounds[b] = bin_bounds[b].union(&it.bounds);
        bin_counts[b] += 1;
    }
    let mut best_cost = f64::INFINITY;
    let mut best_split = 0;
    for split in 1..BINS {
        let (mut lb, mut rb) = (Aabb::empty(), Aabb::empty());
        let (mut lc, mut rc) = (0, 0);
        for i in 0..split {
            lb = lb.union(&bin_bounds[i]);
            lc += bin_counts[i];
        }
        for i in split..BINS {
            rb = rb.union(&bin_bounds[i]);
            rc += bin_counts[i];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = lb.surface_area() * lc as f64 + rb.surface_area() * rc as f64;
        if cost < best_cost {
            best_cost = cost;
            best_split = split;
        }
    }

    let mid = if best_split == 0 {
        items.sort_by(|a, b| a.centroid[axis].total_cmp(&b.centroid[axis]));
        items.len() / 2
    } else {
        let mut i = 0;
        for j in 0..items.len() {
            if bin_of(items[j].centroid[axis]) < best_split {
                items.swap(i, j);
                i += 1;
            }
        }
        i
    };

    let (left, right) = items.split_at_mut(mid);
    build_recursive(left, nodes, first);
    let second = build_recursive(right, nodes, first + mid);
    let node = &mut nodes[index];
    node.offset = second as u32;
    node.count = 0;
    node.axis = axis as u8;
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tree_never_hits() {
        let bvh = Bvh::build(&[], &[]);
        let ray = Ray::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0));
        assert!(bvh.intersect(&ray, 0.0, f64::INFINITY).is_none());
        assert!(!bvh.occluded(&ray, 0.0, f64::INFINITY));
    }

    #[test]
    fn closest_of_stacked_triangles() {
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        for k in 0..20 {
            let z = k as f64;
            let base = verts.len() as u32;
            verts.push(Vec3::new(-1.0, -1.0, z));
            verts.push(Vec3::new(1.0, -1.0, z));
            verts.push(Vec3::new(0.0, 1.0, z));
            tris.push([base, base + 1, base + 2]);
        }
        let bvh = Bvh::build(&verts, &tris);
        let ray = Ray::new(Vec3::new(0.0, 0.0, 30.0), Vec3::new(0.0, 0.0, -1.0));
        let hit = bvh.intersect(&ray, 0.0, f64::INFINITY).unwrap();
        assert_eq!(hit.triangle, 19);
        assert!((hit.t - 11.0).abs() < 1e-12);
    }
}
