//! Shared fixtures for the benchmarks.

use shadowbasis_core::mesh::shapes;
use shadowbasis_core::{CameraPose, EnvLightMap, GaussianLight, View};

/// The resting unit cube seen at yaw 45, pitch 15.
pub fn cube_view(size: usize) -> View {
    View::new(&shapes::unit_cube(), CameraPose::new(45.0, 15.0).with_size(size, size))
}

/// A light map with a few lights spread over the upper hemisphere.
pub fn busy_elm() -> EnvLightMap {
    let lights = (0..8)
        .map(|i| GaussianLight::new(i as f64 / 8.0 + 0.03, 0.1 + 0.04 * (i % 3) as f64, 1.5, 0.01 + 0.01 * i as f64))
        .collect();
    EnvLightMap::new(lights, 0.02)
}
