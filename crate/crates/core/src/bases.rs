//! Shadow bases: per-patch sums of hard shadows, and soft-shadow
//! composition as a light-weighted sum of bases.
//!
//! The upper half of the light map is tiled into `patch x patch` blocks.
//! Basis `(r, c)` counts, per image pixel, how many of the block's pixel
//! directions are blocked, so values are integers in `[0, patch^2]`.

use std::io::{Cursor, Read};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elm::{pixel_direction_in, EnvLightMap, ELM_HEIGHT, ELM_WIDTH};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mesh::Mesh;
use crate::scene::{CameraPose, GroundPlane, View};
use crate::shadow::ShadowCaster;

pub const PATCH_SIZE: usize = 16;
pub const GRID_ROWS: usize = ELM_HEIGHT / 2 / PATCH_SIZE;
pub const GRID_COLS: usize = ELM_WIDTH / PATCH_SIZE;

const SSBB_MAGIC: &[u8; 4] = b"SSBB";
const SSBB_VERSION: u16 = 1;

/// Where a basis set came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mesh_id: String,
    pub pose: CameraPose,
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

#[derive(Clone, Debug)]
pub struct ShadowBasisSet {
    width: usize,
    height: usize,
    grid_rows: usize,
    grid_cols: usize,
    patch: usize,
    bases: Vec<ImageBuffer>,
    /// Bounding box of each basis' nonzero pixels.
    extents: Vec<Option<Rect>>,
    receiver: Option<Arc<ImageBuffer>>,
    pub provenance: Option<Provenance>,
}

/// Which representation a shadow map is in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShadowDomain {
    /// Blocked light; zero where fully lit.
    Inverse,
    /// Received light; `total - inverse` on the receiver.
    Radiance,
}

impl std::str::FromStr for ShadowDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(ShadowDomain::Inverse),
            "radiance" => Ok(ShadowDomain::Radiance),
            _ => Err(Error::InvalidParameter(format!("unknown shadow domain `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowMap {
    pub pixels: ImageBuffer,
    pub domain: ShadowDomain,
    /// Receiver pixels (1) versus sky and object (0); `None` treats every
    /// pixel as receiver.
    pub receiver: Option<Arc<ImageBuffer>>,
}

/// Light arriving at composition: a mixture document or a raw lat-long
/// raster.
#[derive(Clone, Copy, Debug)]
pub enum LightInput<'a> {
    Mixture(&'a EnvLightMap),
    Raster(&'a ImageBuffer),
}

impl<'a> From<&'a EnvLightMap> for LightInput<'a> {
    fn from(e: &'a EnvLightMap) -> Self {
        LightInput::Mixture(e)
    }
}

impl<'a> From<&'a ImageBuffer> for LightInput<'a> {
    fn from(r: &'a ImageBuffer) -> Self {
        LightInput::Raster(r)
    }
}

impl ShadowBasisSet {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn patch_size(&self) -> usize {
        self.patch
    }

    /// Light map size these bases expect.
    pub fn elm_size(&self) -> (usize, usize) {
        (self.grid_cols * self.patch, 2 * self.grid_rows * self.patch)
    }

    pub fn basis(&self, row: usize, col: usize) -> &ImageBuffer {
        &self.bases[row * self.grid_cols + col]
    }

    pub fn bases(&self) -> &[ImageBuffer] {
        &self.bases
    }

    pub fn receiver(&self) -> Option<&Arc<ImageBuffer>> {
        self.receiver.as_ref()
    }

    pub fn set_receiver(&mut self, receiver: Option<ImageBuffer>) -> Result<()> {
        if let Some(r) = &receiver {
            if r.dims() != self.image_size() {
                return Err(Error::DimensionMismatch(r.width(), r.height(), self.width, self.height));
            }
        }
        self.receiver = receiver.map(Arc::new);
        Ok(())
    }

    /// Assembles a set from raw basis images in grid-row-major order.
    pub fn from_bases(
        grid_rows: usize,
        grid_cols: usize,
        patch: usize,
        bases: Vec<ImageBuffer>,
        receiver: Option<ImageBuffer>,
    ) -> Result<ShadowBasisSet> {
        if bases.len() != grid_rows * grid_cols || bases.is_empty() {
            return Err(Error::Geometry(format!(
                "{} bases for a {grid_rows}x{grid_cols} grid",
                bases.len()
            )));
        }
        let (width, height) = bases[0].dims();
        for b in &bases {
            b.ensure_same_dims(&bases[0])?;
        }
        let extents = bases.iter().map(nonzero_extent).collect();
        let mut set = ShadowBasisSet {
            width,
            height,
            grid_rows,
            grid_cols,
            patch,
            bases,
            extents,
            receiver: None,
            provenance: None,
        };
        set.set_receiver(receiver)?;
        Ok(set)
    }

    /// Per-patch weights: the mean light value over each upper-half patch.
    pub fn weights(&self, light: LightInput<'_>) -> Result<Vec<f64>> {
        let (ew, eh) = self.elm_size();
        let owned;
        let raster = match light {
            LightInput::Mixture(elm) => {
                if (elm.width, elm.height) != (ew, eh) {
                    return Err(Error::Geometry(format!(
                        "light map is {}x{}, bases expect {ew}x{eh}",
                        elm.width, elm.height
                    )));
                }
                owned = elm.rasterize_rows(eh / 2)?;
                &owned
            }
            LightInput::Raster(r) => {
                if r.dims() != (ew, eh) {
                    return Err(Error::Geometry(format!(
                        "light raster is {}x{}, bases expect {ew}x{eh}",
                        r.width(),
                        r.height()
                    )));
                }
                r
            }
        };
        let p = self.patch;
        let norm = 1.0 / (p * p) as f64;
        let mut weights = vec![0.0f64; self.grid_rows * self.grid_cols];
        for r in 0..self.grid_rows {
            for v in r * p..(r + 1) * p {
                let row = raster.row(v);
                for c in 0..self.grid_cols {
                    let s: f64 = row[c * p..(c + 1) * p].iter().map(|&x| x as f64).sum();
                    weights[r * self.grid_cols + c] += s;
                }
            }
        }
        weights.iter_mut().for_each(|w| *w *= norm);
        Ok(weights)
    }

    /// Soft shadow in the inverse domain: `sum w(r,c) * basis(r,c)`.
    pub fn compose(&self, light: LightInput<'_>) -> Result<ShadowMap> {
        let weights = self.weights(light)?;
        Ok(self.compose_weights(&weights))
    }

    pub fn compose_weights(&self, weights: &[f64]) -> ShadowMap {
        assert_eq!(weights.len(), self.bases.len());
        let w = self.width;
        let mut acc = vec![0.0f64; w * self.height];
        for ((basis, extent), &weight) in self.bases.iter().zip(&self.extents).zip(weights) {
            let Some(rect) = extent else { continue };
            if weight == 0.0 {
                continue;
            }
            let src = basis.data();
            for y in rect.y0..rect.y1 {
                let lo = y * w + rect.x0;
                let hi = y * w + rect.x1;
                for (a, &b) in acc[lo..hi].iter_mut().zip(&src[lo..hi]) {
                    *a += weight * b as f64;
                }
            }
        }
        let data = acc.into_iter().map(|v| v as f32).collect();
        ShadowMap {
            pixels: ImageBuffer::from_vec(w, self.height, data).unwrap(),
            domain: ShadowDomain::Inverse,
            receiver: self.receiver.clone(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let field = |name: &'static str, v: usize| -> Result<u16> {
            u16::try_from(v).map_err(|_| Error::header(name, format!("{v} does not fit in u16")))
        };
        let mut out = Vec::with_capacity(16 + self.bases.len() * self.width * self.height * 4);
        out.extend_from_slice(SSBB_MAGIC);
        for (name, v) in [
            ("version", SSBB_VERSION as usize),
            ("image_w", self.width),
            ("image_h", self.height),
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("patch", self.patch),
        ] {
            out.extend_from_slice(&field(name, v)?.to_le_bytes());
        }
        for b in &self.bases {
            for v in b.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<ShadowBasisSet> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::header("magic", "truncated"))?;
        if &magic != SSBB_MAGIC {
            return Err(Error::header("magic", format!("expected SSBB, found {magic:?}")));
        }
        let mut read_u16 = |name: &'static str| -> Result<usize> {
            let mut b = [0u8; 2];
            r.read_exact(&mut b).map_err(|_| Error::header(name, "truncated"))?;
            Ok(u16::from_le_bytes(b) as usize)
        };
        let version = read_u16("version")?;
        if version != SSBB_VERSION as usize {
            return Err(Error::header("version", format!("unsupported version {version}")));
        }
        let width = read_u16("image_w")?;
        let height = read_u16("image_h")?;
        let grid_rows = read_u16("grid_rows")?;
        let grid_cols = read_u16("grid_cols")?;
        let patch = read_u16("patch")?;
        for (name, v) in [
            ("image_w", width),
            ("image_h", height),
            ("grid_rows", grid_rows),
            ("grid_cols", grid_cols),
            ("patch", patch),
        ] {
            if v == 0 {
                return Err(Error::header(name, "must be non-zero"));
            }
        }
        let per_basis = width * height;
        let expected = grid_rows * grid_cols * per_basis * 4;
        let body = &bytes[16..];
        if body.len() < expected {
            return Err(Error::header(
                "pixels",
                format!("truncated: {} of {expected} bytes", body.len()),
            ));
        }
        let bases = body[..expected]
            .chunks_exact(per_basis * 4)
            .map(|chunk| {
                let data = chunk
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                ImageBuffer::from_vec(width, height, data).unwrap()
            })
            .collect();
        ShadowBasisSet::from_bases(grid_rows, grid_cols, patch, bases, None)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ShadowBasisSet> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn nonzero_extent(img: &ImageBuffer) -> Option<Rect> {
    let (w, h) = img.dims();
    let mut rect: Option<Rect> = None;
    for y in 0..h {
        let row = img.row(y);
        let Some(first) = row.iter().position(|&v| v != 0.0) else {
            continue;
        };
        let last = row.iter().rposition(|&v| v != 0.0).unwrap();
        rect = Some(match rect {
            None => Rect {
                x0: first,
                y0: y,
                x1: last + 1,
                y1: y + 1,
            },
            Some(r) => Rect {
                x0: r.x0.min(first),
                y0: r.y0,
                x1: r.x1.max(last + 1),
                y1: y + 1,
            },
        });
    }
    debug_assert!(rect.map_or(true, |r| r.x1 <= w));
    rect
}

/// Progress callback argument: patches finished so far and total.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

/// Builds the 8x32 basis grid for a posed view.
pub fn build_bases(view: &View) -> ShadowBasisSet {
    build_bases_with_progress(view, &|_, _| {})
}

pub fn build_bases_with_progress(view: &View, progress: Progress<'_>) -> ShadowBasisSet {
    let caster = ShadowCaster::new(view);
    let (w, h) = (view.width(), view.height());
    let total = GRID_ROWS * GRID_COLS;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let bases: Vec<ImageBuffer> = (0..total)
        .into_par_iter()
        .map_init(
            || caster.scratch(),
            |scratch, index| {
                let (r, c) = (index / GRID_COLS, index % GRID_COLS);
                let mut counts = vec![0u16; w * h];
                for v in r * PATCH_SIZE..(r + 1) * PATCH_SIZE {
                    for u in c * PATCH_SIZE..(c + 1) * PATCH_SIZE {
                        let dir = pixel_direction_in(u, v, ELM_WIDTH, ELM_HEIGHT).unwrap();
                        caster.cast(&dir, scratch, |p| counts[p] += 1);
                    }
                }
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                progress(n, total);
                let data = counts.into_iter().map(f32::from).collect();
                ImageBuffer::from_vec(w, h, data).unwrap()
            },
        )
        .collect();
    ShadowBasisSet::from_bases(GRID_ROWS, GRID_COLS, PATCH_SIZE, bases, Some(view.receiver_mask()))
        .expect("grid is consistent")
}

/// Convenience wrapper: poses `mesh`, uses the given ground plane.
pub fn build_bases_for(mesh: &Mesh, pose: &CameraPose, ground: GroundPlane) -> ShadowBasisSet {
    let view = View::with_ground(mesh.rotated_y(pose.yaw), *pose, ground);
    build_bases(&view)
}

/// Total unoccluded light: the sum of the upper half of the light raster,
/// which equals `sum w(r,c) * patch^2`.
pub fn total_irradiance(light: LightInput<'_>) -> Result<f64> {
    let owned;
    let raster = match light {
        LightInput::Mixture(elm) => {
            owned = elm.rasterize_rows(elm.height / 2)?;
            &owned
        }
        LightInput::Raster(r) => r,
    };
    let rows = raster.height() / 2;
    Ok(raster.data()[..rows * raster.width()].iter().map(|&v| v as f64).sum())
}

impl ShadowMap {
    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dims()
    }

    fn is_receiver(&self, i: usize) -> bool {
        self.receiver.as_ref().map_or(true, |r| r.data()[i] > 0.0)
    }

    /// `total - s` on receiver pixels, 0 elsewhere.
    pub fn to_radiance(&self, light: LightInput<'_>) -> Result<ShadowMap> {
        let total = total_irradiance(light)?;
        Ok(self.to_radiance_with_total(total))
    }

    pub fn to_radiance_with_total(&self, total: f64) -> ShadowMap {
        assert_eq!(self.domain, ShadowDomain::Inverse, "already in radiance domain");
        self.flip(total, ShadowDomain::Radiance)
    }

    /// Inverse of [`ShadowMap::to_radiance`].
    pub fn to_inverse(&self, light: LightInput<'_>) -> Result<ShadowMap> {
        let total = total_irradiance(light)?;
        Ok(self.to_inverse_with_total(total))
    }

    pub fn to_inverse_with_total(&self, total: f64) -> ShadowMap {
        assert_eq!(self.domain, ShadowDomain::Radiance, "already in inverse domain");
        self.flip(total, ShadowDomain::Inverse)
    }

    fn flip(&self, total: f64, domain: ShadowDomain) -> ShadowMap {
        let data = self
            .pixels
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.is_receiver(i) {
                    (total - v as f64) as f32
                } else {
                    0.0
                }
            })
            .collect();
        ShadowMap {
            pixels: ImageBuffer::from_vec(self.pixels.width(), self.pixels.height(), data).unwrap(),
            domain,
            receiver: self.receiver.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elm::GaussianLight;
    use crate::mesh::shapes;

    fn small_view(mesh: &Mesh) -> View {
        View::new(mesh, CameraPose::new(0.0, 30.0).with_size(48, 48))
    }

    #[test]
    fn grid_is_8_by_32() {
        assert_eq!((GRID_ROWS, GRID_COLS, PATCH_SIZE), (8, 32, 16));
        let set = build_bases(&small_view(&shapes::unit_cube()));
        assert_eq!(set.grid(), (8, 32));
        assert_eq!(set.bases().len(), 256);
        let max = set.bases().iter().filter_map(|b| b.max()).fold(0.0f32, f32::max);
        assert!(max <= 256.0 && max > 0.0);
        assert!(set.bases().iter().all(|b| b.data().iter().all(|&v| v >= 0.0 && v.fract() == 0.0)));
    }

    #[test]
    fn zero_light_composes_to_zero() {
        let set = build_bases(&small_view(&shapes::unit_cube()));
        let s = set.compose((&EnvLightMap::default()).into()).unwrap();
        assert_eq!(s.domain, ShadowDomain::Inverse);
        assert_eq!(s.pixels.count_nonzero(), 0);
    }

    #[test]
    fn uniform_light_is_scaled_basis_sum() {
        let set = build_bases(&small_view(&shapes::unit_cube()));
        let c = 0.75f32;
        let raster = ImageBuffer::filled(512, 256, c);
        let s = set.compose((&raster).into()).unwrap();
        let mut expected = vec![0.0f64; 48 * 48];
        for b in set.bases() {
            for (e, &v) in expected.iter_mut().zip(b.data()) {
                *e += v as f64;
            }
        }
        for (got, e) in s.pixels.data().iter().zip(&expected) {
            assert!((*got as f64 - c as f64 * e).abs() <= 1e-6 * e.max(1.0));
        }
    }

    #[test]
    fn geometry_mismatch_is_reported() {
        let set = build_bases(&small_view(&shapes::unit_cube()));
        let raster = ImageBuffer::new(256, 128);
        assert!(matches!(set.compose((&raster).into()), Err(Error::Geometry(_))));
        let mut elm = EnvLightMap::default();
        elm.width = 1024;
        assert!(matches!(set.compose((&elm).into()), Err(Error::Geometry(_))));
    }

    #[test]
    fn radiance_round_trip() {
        let set = build_bases(&small_view(&shapes::unit_cube()));
        let elm = EnvLightMap::new(vec![GaussianLight::new(0.5, 0.25, 2.0, 0.01)], 0.02);
        let s = set.compose((&elm).into()).unwrap();
        let total = total_irradiance((&elm).into()).unwrap();
        let weights = set.weights((&elm).into()).unwrap();
        let via_weights: f64 = weights.iter().map(|w| w * 256.0).sum();
        assert!((total - via_weights).abs() <= 1e-9 * total);

        let rad = s.to_radiance((&elm).into()).unwrap();
        let recv = set.receiver().unwrap();
        for i in 0..rad.pixels.len() {
            if recv.data()[i] > 0.0 {
                if s.pixels.data()[i] == 0.0 {
                    assert_eq!(rad.pixels.data()[i], total as f32);
                }
            } else {
                assert_eq!(rad.pixels.data()[i], 0.0);
            }
        }
        let back = rad.to_inverse((&elm).into()).unwrap();
        // f32 storage of `total - s` rounds at the scale of `total`
        let tol = total as f32 * f32::EPSILON;
        for (a, b) in back.pixels.data().iter().zip(s.pixels.data()) {
            assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
        let t32 = total as f32;
        let full = ShadowMap {
            pixels: ImageBuffer::filled(48, 48, t32),
            domain: ShadowDomain::Inverse,
            receiver: None,
        };
        assert!(full.to_radiance_with_total(t32 as f64).pixels.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ssbb_layout_and_errors() {
        let set = build_bases(&small_view(&shapes::unit_cube()));
        let bytes = set.encode().unwrap();
        assert_eq!(&bytes[..4], b"SSBB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 48);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 8);
        assert_eq!(u16::from_le_bytes([bytes[12], bytes[13]]), 32);
        assert_eq!(u16::from_le_bytes([bytes[14], bytes[15]]), 16);
        assert_eq!(bytes.len(), 16 + 256 * 48 * 48 * 4);
        let back = ShadowBasisSet::decode(&bytes).unwrap();
        assert_eq!(back.bases(), set.bases());

        let err = |b: &[u8]| match ShadowBasisSet::decode(b) {
            Err(Error::Header { field, .. }) => field,
            other => panic!("expected header error, got {other:?}"),
        };
        assert_eq!(err(&bytes[..2]), "magic");
        assert_eq!(err(&bytes[..9]), "image_h");
        assert_eq!(err(&bytes[..15]), "patch");
        assert_eq!(err(&bytes[..1000]), "pixels");
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert_eq!(err(&bad), "version");
    }
}
