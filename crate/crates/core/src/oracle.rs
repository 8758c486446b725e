//! Brute-force soft shadows: one hard shadow per upper-half light pixel,
//! weighted by that pixel's light value. No patch aggregation.

use rayon::prelude::*;

use crate::bases::{ShadowDomain, ShadowMap};
use crate::elm::{pixel_direction_in, EnvLightMap};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mesh::Mesh;
use crate::scene::{CameraPose, GroundPlane, View};
use crate::shadow::ShadowCaster;

/// Light rows summed by one task before the deterministic merge.
const ROWS_PER_TASK: usize = 32;

/// Kahan-compensated running sums.
struct Kahan {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl Kahan {
    fn new(n: usize) -> Self {
        Kahan {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    fn add_slice(&mut self, values: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            let y = v - *c;
            let t = *s + y;
            *c = (t - *s) - y;
            *s = t;
        }
    }
}

/// Oracle for one light map, in the inverse domain.
pub fn render_oracle(mesh: &Mesh, pose: &CameraPose, ground: GroundPlane, elm: &EnvLightMap) -> Result<ShadowMap> {
    let view = View::with_ground(mesh.rotated_y(pose.yaw), *pose, ground);
    let mut maps = render_oracle_batch(&view, std::slice::from_ref(elm))?;
    Ok(maps.pop().unwrap())
}

pub fn render_oracle_in(view: &View, elm: &EnvLightMap) -> Result<ShadowMap> {
    let mut maps = render_oracle_batch(view, std::slice::from_ref(elm))?;
    Ok(maps.pop().unwrap())
}

/// Renders several light maps at once, sharing each hard shadow between
/// them. Output is identical to rendering them one at a time.
pub fn render_oracle_batch(view: &View, elms: &[EnvLightMap]) -> Result<Vec<ShadowMap>> {
    let rasters = elms
        .iter()
        .map(|e| e.rasterize_rows(e.height / 2))
        .collect::<Result<Vec<_>>>()?;
    render_oracle_rasters(view, &rasters)
}

/// Same as [`render_oracle_batch`] for raw lat-long rasters. Only the
/// upper half of each raster is read.
pub fn render_oracle_rasters(view: &View, rasters: &[ImageBuffer]) -> Result<Vec<ShadowMap>> {
    let e = rasters.len();
    if e == 0 {
        return Ok(Vec::new());
    }
    let (ew, eh) = rasters[0].dims();
    for r in rasters {
        if r.dims() != (ew, eh) {
            return Err(Error::Geometry("light rasters differ in size".into()));
        }
    }
    let rows = eh / 2;
    let caster = ShadowCaster::new(view);
    let n = caster.pixel_count();

    let row_starts: Vec<usize> = (0..rows).step_by(ROWS_PER_TASK).collect();
    let partials: Vec<Kahan> = row_starts
        .par_iter()
        .map(|&start| {
            let mut scratch = caster.scratch();
            let mut total = Kahan::new(n * e);
            let mut row_acc = vec![0.0f64; n * e];
            let mut weights = vec![0.0f64; e];
            for v in start..(start + ROWS_PER_TASK).min(rows) {
                row_acc.fill(0.0);
                let mut any = false;
                for u in 0..ew {
                    let mut nonzero = false;
                    for (w, r) in weights.iter_mut().zip(rasters) {
                        *w = r.get(u, v) as f64;
                        nonzero |= *w != 0.0;
                    }
                    if !nonzero {
                        continue;
                    }
                    any = true;
                    let dir = pixel_direction_in(u, v, ew, eh).expect("upper half");
                    caster.cast(&dir, &mut scratch, |p| {
                        for (a, &w) in row_acc[p * e..(p + 1) * e].iter_mut().zip(&weights) {
                            *a += w;
                        }
                    });
                }
                if any {
                    total.add_slice(&row_acc);
                }
            }
            total
        })
        .collect();

    let mut merged = vec![0.0f64; n * e];
    for part in &partials {
        for (m, s) in merged.iter_mut().zip(&part.sum) {
            *m += s;
        }
    }
    let receiver = std::sync::Arc::new(view.receiver_mask());
    let (w, h) = (view.width(), view.height());
    Ok((0..e)
        .map(|k| {
            let data = (0..n).map(|p| merged[p * e + k] as f32).collect();
            ShadowMap {
                pixels: ImageBuffer::from_vec(w, h, data).unwrap(),
                domain: ShadowDomain::Inverse,
                receiver: Some(receiver.clone()),
            }
        })
        .collect())
}
