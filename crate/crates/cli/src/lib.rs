//! Command-line front end. Each subcommand reads and writes plain files
//! (OBJ, PFM, PNG, JSON, SSBB).

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shadowbasis_core::ao::{compute_ao, perturb_ao, AoMap, AoOptions};
use shadowbasis_core::bases::{build_bases_with_progress, LightInput, ShadowBasisSet, ShadowDomain};
use shadowbasis_core::dataset::{export_dataset, load_mesh_dir, ExportOptions};
use shadowbasis_core::metrics::{self, MetricReport};
use shadowbasis_core::scene::{canonical_poses, render_mask, DEFAULT_IMAGE_SIZE};
use shadowbasis_core::session::{SessionManager, DEFAULT_IDLE_TIMEOUT};
use shadowbasis_core::transform::{invert_pair, invert_shadow};
use shadowbasis_core::oracle::render_oracle_in;
use shadowbasis_core::{load_mesh, sample_elm, CameraPose, EnvLightMap, ImageBuffer, View};

#[derive(Debug, Parser)]
#[command(name = "shadowbasis", version, about = "Soft-shadow basis compiler and compositor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub yaw: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub pitch: f64,
    /// Output width and height in pixels.
    #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
    pub size: usize,
}

impl PoseArgs {
    fn view(&self) -> Result<View> {
        let mesh = load_mesh(&self.mesh).with_context(|| format!("loading {}", self.mesh.display()))?;
        Ok(View::new(&mesh, self.pose()))
    }

    fn pose(&self) -> CameraPose {
        CameraPose::new(self.yaw, self.pitch).with_size(self.size, self.size)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the binary cutout mask (8-bit PNG, 0 or 255).
    Mask {
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a random light map and write it as JSON.
    SampleElm {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize a light map JSON to a PFM panorama.
    RasterizeElm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute the shadow basis set for one view.
    Bases {
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the receiver mask as PNG.
        #[arg(long)]
        receiver: Option<PathBuf>,
    },
    /// Compose a soft shadow from a basis set and a light map (JSON or PFM).
    Compose {
        #[arg(long)]
        bases: PathBuf,
        #[arg(long)]
        elm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write radiance instead of the inverse shadow.
        #[arg(long)]
        radiance: bool,
        /// Receiver mask PNG for the radiance conversion.
        #[arg(long)]
        receiver: Option<PathBuf>,
    },
    /// Monte-Carlo ambient occlusion on the ground plane.
    Ao {
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long, default_value_t = shadowbasis_core::ao::DEFAULT_SPP)]
        spp: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random erosion or dilation of an AO map.
    PerturbAo {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flip a shadow map between the dark-is-shadow and bright-is-shadow encodings.
    Invert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted shadow against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Domain of both inputs.
        #[arg(long, default_value = "inverse")]
        domain: ShadowDomain,
        #[arg(long)]
        pred_domain: Option<ShadowDomain>,
        #[arg(long)]
        gt_domain: Option<ShadowDomain>,
        #[arg(long)]
        json: bool,
    },
    /// Brute-force reference shadow, one hard shadow per light pixel.
    Oracle {
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long)]
        elm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export training triplets for every OBJ in a directory.
    Export {
        #[arg(long)]
        mesh_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = shadowbasis_core::ao::DEFAULT_SPP)]
        spp: usize,
        #[arg(long, default_value_t = 0)]
        materialize: usize,
        /// Output width and height in pixels.
        #[arg(long, default_value_t = DEFAULT_IMAGE_SIZE)]
        size: usize,
    },
    /// Run the HTTP editing service.
    Serve {
        #[arg(long, env = shadowbasis_server::PORT_ENV, default_value_t = shadowbasis_server::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Idle session timeout in seconds.
        #[arg(long, default_value_t = DEFAULT_IDLE_TIMEOUT.as_secs())]
        idle_timeout: u64,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask { pose, out } => {
            let mesh = load_mesh(&pose.mesh).with_context(|| format!("loading {}", pose.mesh.display()))?;
            render_mask(&mesh, &pose.pose()).write_png(&out)?;
        }
        Command::SampleElm { seed, out } => sample_elm(seed).write_json(&out)?,
        Command::RasterizeElm { input, out } => EnvLightMap::read_json(&input)?.rasterize()?.write_pfm(&out)?,
        Command::Bases { pose, out, receiver } => {
            let view = pose.view()?;
            let progress = |done: usize, total: usize| {
                if done % 32 == 0 || done == total {
                    tracing::info!("bases {done}/{total}");
                }
            };
            let set = build_bases_with_progress(&view, &progress);
            set.write(&out)?;
            if let Some(path) = receiver {
                view.receiver_mask().write_png(path)?;
            }
        }
        Command::Compose { bases, elm, out, radiance, receiver } => {
            let mut set = ShadowBasisSet::read(&bases)?;
            if let Some(path) = receiver {
                set.set_receiver(Some(ImageBuffer::read_png(path)?))?;
            }
            let light = read_light(&elm)?;
            let light_input = match &light {
                Light::Mixture(m) => LightInput::from(m),
                Light::Raster(r) => LightInput::from(r),
            };
            let mut shadow = set.compose(light_input)?;
            if radiance {
                shadow = shadow.to_radiance(light_input)?;
            }
            shadow.pixels.write_pfm(&out)?;
        }
        Command::Ao { pose, spp, seed, out } => {
            let view = pose.view()?;
            let ao = compute_ao(&view, &AoOptions { seed, ..AoOptions::with_spp(spp) })?;
            ao.pixels.write_pfm(&out)?;
        }
        Command::PerturbAo { input, seed, out } => {
            let ao = AoMap {
                pixels: ImageBuffer::read_pfm(&input)?,
                samples_per_pixel: 0,
            };
            perturb_ao(&ao, seed).pixels.write_pfm(&out)?;
        }
        Command::Invert { input, out } => invert_shadow(&ImageBuffer::read_pfm(&input)?).write_pfm(&out)?,
        Command::Metrics { pred, gt, domain, pred_domain, gt_domain, json } => {
            let pred = ImageBuffer::read_pfm(&pred)?;
            let gt = ImageBuffer::read_pfm(&gt)?;
            let report = metrics_report(&pred, &gt, pred_domain.unwrap_or(domain), gt_domain.unwrap_or(domain))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "rmse {:.6}\nrmse_s {:.6}\nzncc {:.6}\ndssim {:.6}",
                    report.rmse, report.rmse_s, report.zncc, report.dssim
                );
            }
        }
        Command::Oracle { pose, elm, out } => {
            let view = pose.view()?;
            let elm = EnvLightMap::read_json(&elm)?;
            render_oracle_in(&view, &elm)?.pixels.write_pfm(&out)?;
        }
        Command::Export { mesh_dir, out, spp, materialize, size } => {
            let meshes = load_mesh_dir(&mesh_dir)?;
            if meshes.is_empty() {
                bail!("no .obj files in {}", mesh_dir.display());
            }
            let poses = canonical_poses().into_iter().map(|p| p.with_size(size, size)).collect();
            let options = ExportOptions { spp, materialize, poses };
            let entries = export_dataset(&meshes, &out, &options)?;
            tracing::info!("wrote {} triplets to {}", entries.len(), out.display());
        }
        Command::Serve { port, data_dir, idle_timeout } => {
            if let Some(dir) = &data_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let manager = Arc::new(SessionManager::new(Duration::from_secs(idle_timeout), data_dir));
            let addr = SocketAddr::from((Ipv4Addr::UNSPECIFIED, port));
            tokio::runtime::Runtime::new()?.block_on(shadowbasis_server::serve(addr, manager))?;
        }
    }
    Ok(())
}

enum Light {
    Mixture(EnvLightMap),
    Raster(ImageBuffer),
}

fn read_light(path: &Path) -> Result<Light> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(b"Pf") {
        return Ok(Light::Raster(ImageBuffer::decode_pfm(&bytes)?));
    }
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is neither PFM nor JSON", path.display()))?;
    Ok(Light::Mixture(EnvLightMap::from_json(text)?))
}

/// Metrics are always measured on inverse-domain maps. Radiance pairs are
/// inverted against the ground-truth peak; mixed pairs are refused.
pub fn metrics_report(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    pred_domain: ShadowDomain,
    gt_domain: ShadowDomain,
) -> Result<MetricReport> {
    if pred_domain != gt_domain {
        bail!(
            "mixed domains: prediction is {} but ground truth is {}",
            pred_domain.as_str(),
            gt_domain.as_str()
        );
    }
    let report = match pred_domain {
        ShadowDomain::Inverse => metrics::evaluate_images(pred, gt)?,
        ShadowDomain::Radiance => {
            let (p, g) = invert_pair(pred, gt)?;
            metrics::evaluate_images(&p, &g)?
        }
    };
    Ok(report)
}
