//! Soft shadows for image compositing from precomputed hard-shadow bases.
//!
//! A normalized mesh is posed in front of a fixed camera above a ground
//! plane. Hard shadows for every upper-hemisphere light direction are summed
//! per 16x16 patch of a 512x256 environment light map, giving 256 shadow
//! bases. Any light map then composes into a soft shadow as a weighted sum.

pub mod ao;
pub mod bases;
mod bvh;
pub mod composite;
pub mod dataset;
pub mod elm;
pub mod error;
pub mod geometry;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod oracle;
pub mod scene;
pub mod session;
pub mod shadow;
pub mod transform;

pub use ao::{compute_ao, perturb_ao, AoMap, AoOptions, AoSampling, AoStroke};
pub use bases::{build_bases, LightInput, ShadowBasisSet, ShadowDomain, ShadowMap};
pub use bvh::Hit;
pub use elm::{sample_elm, EnvLightMap, GaussianLight};
pub use error::{Error, Result};
pub use geometry::{Ray, Vec3};
pub use image::ImageBuffer;
pub use mesh::{load_mesh, parse_obj, Mesh};
pub use metrics::{losses, MetricReport};
pub use oracle::render_oracle;
pub use scene::{canonical_poses, CameraPose, GroundPlane, View};
pub use transform::invert_shadow;
