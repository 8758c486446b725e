//! Training triplets on disk: cutout mask, AO (plain and perturbed), and
//! shadow bases, indexed by a newline-delimited JSON manifest.
//!
//! Layout under the export root:
//!
//! ```text
//! manifest.jsonl
//! <mesh_id>/y<yaw>_p<pitch>/{mask.png, receiver.png, ao.pfm, ao_perturbed.pfm, bases.ssbb}
//! <mesh_id>/y<yaw>_p<pitch>/samples/{elm_<k>.json, shadow_<k>.pfm}
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{compute_ao, perturb_ao, AoMap, AoOptions};
use crate::bases::{build_bases, ShadowBasisSet, ShadowMap, Provenance};
use crate::elm::{sample_elm, EnvLightMap};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::mesh::{load_mesh, Mesh};
use crate::scene::{canonical_poses, CameraPose, GroundPlane, View};

pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const EPOCH_REPEATS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterializedSample {
    pub seed: u64,
    pub elm: String,
    pub shadow: String,
}

/// One manifest line. Paths are relative to the export root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub mesh_id: String,
    pub pose: CameraPose,
    pub ground_height: f64,
    pub mask: String,
    pub receiver: String,
    pub ao: String,
    pub ao_perturbed: String,
    pub bases: String,
    pub ao_spp: usize,
    pub seed: u64,
    pub perturb_seed: u64,
    /// Hint for trainers: how often to revisit each triplet per epoch,
    /// drawing a fresh light map each time.
    pub suggested_epoch_repeats: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materialized: Vec<MaterializedSample>,
}

#[derive(Clone, Debug)]
pub struct DatasetTriplet {
    pub mask: ImageBuffer,
    pub ao: AoMap,
    pub ao_perturbed: AoMap,
    pub bases: ShadowBasisSet,
    pub meta: ManifestEntry,
}

#[derive(Clone, Debug)]
pub struct ExportOptions {
    pub spp: usize,
    /// Pre-composed shadows per triplet.
    pub materialize: usize,
    pub poses: Vec<CameraPose>,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            spp: crate::ao::DEFAULT_SPP,
            materialize: 0,
            poses: canonical_poses(),
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn pose_dir(pose: &CameraPose) -> String {
    format!("y{}_p{}", pose.yaw, pose.pitch)
}

/// Seed of a light map drawn for materialized sample `k` of a triplet.
pub fn materialized_seed(triplet_seed: u64, k: usize) -> u64 {
    triplet_seed.wrapping_mul(1_000_003).wrapping_add(k as u64)
}

/// Renders and writes one triplet; returns its manifest entry.
/// `mesh` is normalized and unposed.
pub fn export_triplet(
    mesh: &Mesh,
    mesh_id: &str,
    pose: &CameraPose,
    ground: Option<GroundPlane>,
    seed: u64,
    options: &ExportOptions,
    root: &Path,
) -> Result<ManifestEntry> {
    let posed = mesh.rotated_y(pose.yaw);
    let ground = ground.unwrap_or_else(|| GroundPlane::below(&posed));
    let view = View::with_ground(posed, *pose, ground);

    let rel = format!("{mesh_id}/{}", pose_dir(pose));
    let dir = root.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut bases = build_bases(&view);
    bases.provenance = Some(Provenance {
        mesh_id: mesh_id.to_string(),
        pose: *pose,
    });
    let ao_options = AoOptions {
        seed,
        ..AoOptions::with_spp(options.spp)
    };
    let ao = compute_ao(&view, &ao_options)?;
    let perturb_seed = seed;
    let ao_perturbed = perturb_ao(&ao, perturb_seed);

    view.mask.write_png(dir.join("mask.png"))?;
    view.receiver_mask().write_png(dir.join("receiver.png"))?;
    ao.pixels.write_pfm(dir.join("ao.pfm"))?;
    ao_perturbed.pixels.write_pfm(dir.join("ao_perturbed.pfm"))?;
    write_bytes(&dir.join("bases.ssbb"), &bases.encode()?)?;

    let mut materialized = Vec::with_capacity(options.materialize);
    if options.materialize > 0 {
        let samples = dir.join("samples");
        fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;
        for k in 0..options.materialize {
            let s = materialized_seed(seed, k);
            let elm = sample_elm(s);
            let shadow = bases.compose((&elm).into())?;
            elm.write_json(samples.join(format!("elm_{k}.json")))?;
            shadow.pixels.write_pfm(samples.join(format!("shadow_{k}.pfm")))?;
            materialized.push(MaterializedSample {
                seed: s,
                elm: format!("{rel}/samples/elm_{k}.json"),
                shadow: format!("{rel}/samples/shadow_{k}.pfm"),
            });
        }
    }

    Ok(ManifestEntry {
        mesh_id: mesh_id.to_string(),
        pose: *pose,
        ground_height: ground.height,
        mask: format!("{rel}/mask.png"),
        receiver: format!("{rel}/receiver.png"),
        ao: format!("{rel}/ao.pfm"),
        ao_perturbed: format!("{rel}/ao_perturbed.pfm"),
        bases: format!("{rel}/bases.ssbb"),
        ao_spp: options.spp,
        seed,
        perturb_seed,
        suggested_epoch_repeats: EPOCH_REPEATS,
        materialized,
    })
}

/// Appends entries to a manifest, one JSON object per line.
pub struct ManifestWriter {
    file: File,
    path: PathBuf,
}

impl ManifestWriter {
    /// Starts a fresh manifest, replacing any previous one.
    pub fn create(root: &Path) -> Result<ManifestWriter> {
        let path = root.join(MANIFEST_NAME);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(ManifestWriter { file, path })
    }

    pub fn append_to(root: &Path) -> Result<ManifestWriter> {
        let path = root.join(MANIFEST_NAME);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(ManifestWriter { file, path })
    }

    pub fn append(&mut self, entry: &ManifestEntry) -> Result<()> {
        let line = serde_json::to_string(entry)?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join(MANIFEST_NAME);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| Error::format(i + 1, e.to_string()))?;
        out.push(entry);
    }
    Ok(out)
}

/// Exports every mesh under every pose. Triplet seeds are
/// `mesh_index * poses + pose_index`; entries are written in that order.
pub fn export_dataset(meshes: &[(String, Mesh)], root: &Path, options: &ExportOptions) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let jobs: Vec<(usize, usize)> = (0..meshes.len())
        .flat_map(|m| (0..options.poses.len()).map(move |p| (m, p)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(m, p)| {
            let (id, mesh) = &meshes[m];
            let seed = (m * options.poses.len() + p) as u64;
            export_triplet(mesh, id, &options.poses[p], None, seed, options, root)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut writer = ManifestWriter::create(root)?;
    for e in &entries {
        writer.append(e)?;
    }
    Ok(entries)
}

/// Loads and normalizes every `.obj` under `dir`, sorted by file name.
/// Mesh ids are the file stems.
pub fn load_mesh_dir(dir: &Path) -> Result<Vec<(String, Mesh)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((id, load_mesh(&p)?))
        })
        .collect()
}

pub fn read_triplet(root: &Path, entry: &ManifestEntry) -> Result<DatasetTriplet> {
    let mut bases = ShadowBasisSet::read(root.join(&entry.bases))?;
    bases.set_receiver(Some(ImageBuffer::read_png(root.join(&entry.receiver))?))?;
    bases.provenance = Some(Provenance {
        mesh_id: entry.mesh_id.clone(),
        pose: entry.pose,
    });
    let mask = ImageBuffer::read_png(root.join(&entry.mask))?;
    let ao = ImageBuffer::read_pfm(root.join(&entry.ao))?;
    let ao_perturbed = ImageBuffer::read_pfm(root.join(&entry.ao_perturbed))?;
    for img in [&mask, &ao, &ao_perturbed] {
        if img.dims() != bases.image_size() {
            let (w, h) = bases.image_size();
            return Err(Error::DimensionMismatch(img.width(), img.height(), w, h));
        }
    }
    Ok(DatasetTriplet {
        mask,
        ao: AoMap {
            pixels: ao,
            samples_per_pixel: entry.ao_spp,
        },
        ao_perturbed: AoMap {
            pixels: ao_perturbed,
            samples_per_pixel: entry.ao_spp,
        },
        bases,
        meta: entry.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub mask: ImageBuffer,
    pub ao_perturbed: ImageBuffer,
    pub elm: EnvLightMap,
    pub elm_raster: ImageBuffer,
    /// Inverse-domain soft shadow.
    pub target: ShadowMap,
}

/// Draws a light map from `seed` and composes the matching target.
pub fn sample_training_pair(triplet: &DatasetTriplet, seed: u64) -> Result<TrainingPair> {
    let elm = sample_elm(seed);
    let elm_raster = elm.rasterize()?;
    let target = triplet.bases.compose((&elm_raster).into())?;
    Ok(TrainingPair {
        mask: triplet.mask.clone(),
        ao_perturbed: triplet.ao_perturbed.pixels.clone(),
        elm,
        elm_raster,
        target,
    })
}
