use std::sync::OnceLock;

use proptest::prelude::*;

use shadowbasis_core::bases::{build_bases, GRID_COLS, GRID_ROWS, PATCH_SIZE};
use shadowbasis_core::elm::{pixel_direction, ELM_HEIGHT, ELM_WIDTH};
use shadowbasis_core::mesh::shapes;
use shadowbasis_core::metrics::rmse_scale_invariant;
use shadowbasis_core::oracle::render_oracle_rasters;
use shadowbasis_core::shadow::{hard_shadow, hard_shadow_in, ShadowMethod};
use shadowbasis_core::{
    sample_elm, CameraPose, EnvLightMap, GaussianLight, GroundPlane, ImageBuffer, ShadowBasisSet, ShadowDomain, Vec3, View,
};

fn cube_view() -> &'static View {
    static VIEW: OnceLock<View> = OnceLock::new();
    VIEW.get_or_init(|| View::new(&shapes::unit_cube(), CameraPose::new(45.0, 15.0).with_size(32, 32)))
}

fn cube_bases() -> &'static ShadowBasisSet {
    static BASES: OnceLock<ShadowBasisSet> = OnceLock::new();
    BASES.get_or_init(|| build_bases(cube_view()))
}

fn pole_view() -> &'static View {
    static VIEW: OnceLock<View> = OnceLock::new();
    VIEW.get_or_init(|| View::new(&shapes::pole(0.03), CameraPose::new(0.0, 30.0).with_size(64, 64)))
}

fn pole_bases() -> &'static ShadowBasisSet {
    static BASES: OnceLock<ShadowBasisSet> = OnceLock::new();
    BASES.get_or_init(|| build_bases(pole_view()))
}

fn single(x: f64, y: f64, intensity: f64, sigma2: f64) -> EnvLightMap {
    EnvLightMap::new(vec![GaussianLight::new(x, y, intensity, sigma2)], 0.0)
}

fn rel_err(got: &ImageBuffer, want: &ImageBuffer) -> f64 {
    let scale = want.data().iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
    let diff = got.data().iter().zip(want.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs() as f64));
    if scale == 0.0 { diff } else { diff / scale }
}

fn combine(a: &ImageBuffer, b: &ImageBuffer, alpha: f32, beta: f32) -> ImageBuffer {
    ImageBuffer::from_fn(a.width(), a.height(), |x, y| alpha * a.get(x, y) + beta * b.get(x, y))
}

#[test]
fn basis_values_are_bounded_counts() {
    let bases = cube_bases();
    assert_eq!(bases.grid(), (GRID_ROWS, GRID_COLS));
    for b in bases.bases() {
        for &v in b.data() {
            assert!((0.0..=(PATCH_SIZE * PATCH_SIZE) as f32).contains(&v));
            assert_eq!(v.fract(), 0.0);
        }
    }
}

#[test]
fn near_horizon_pole_shadows_are_longer() {
    let bases = pole_bases();
    let rows_touched = |img: &ImageBuffer| (0..img.height()).filter(|&y| img.row(y).iter().any(|&v| v > 0.0)).count();
    let mut longer = 0;
    for c in 0..GRID_COLS {
        let (high, low) = (rows_touched(bases.basis(0, c)), rows_touched(bases.basis(7, c)));
        assert!(low >= high, "column {c}: zenith patch {high} rows, horizon patch {low} rows");
        longer += (low > high) as usize;
    }
    assert!(longer > GRID_COLS / 2);
}

#[test]
fn shadows_leaving_the_frame_give_zero_bases() {
    // a cube hovering above the ground throws some shadows past the frame
    let view = View::with_ground(
        shapes::unit_cube(),
        CameraPose::new(0.0, 30.0).with_size(48, 48),
        GroundPlane { height: -0.8 },
    );
    let bases = build_bases(&view);
    let zero: Vec<usize> = (0..bases.bases().len()).filter(|&i| bases.bases()[i].max() == Some(0.0)).collect();
    assert!(!zero.is_empty());
    for &i in &zero {
        let (r, c) = (i / GRID_COLS, i % GRID_COLS);
        for (du, dv) in [(0, 0), (15, 15), (7, 3)] {
            let dir = pixel_direction(c * PATCH_SIZE + du, r * PATCH_SIZE + dv).unwrap();
            let ray = hard_shadow_in(&view, &dir, ShadowMethod::RayCast).unwrap();
            assert_eq!(ray.count_nonzero(), 0);
        }
    }
    let elm = EnvLightMap::new(vec![], 0.0);
    assert_eq!(bases.compose((&elm).into()).unwrap().pixels.max(), Some(0.0));
}

#[test]
fn cube_shadow_at_45_degrees_extends_one_height() {
    let mesh = shapes::unit_cube();
    let pose = CameraPose::new(0.0, 30.0).with_size(96, 96);
    let ground = GroundPlane::below(&mesh);
    let dir = Vec3::new(1.0, 1.0, 0.0).normalize();
    let shadow = hard_shadow(&mesh, &pose, ground, &dir).unwrap();
    let view = View::with_ground(mesh, pose, ground);
    // light from +x at 45 degrees: the unit cube's shadow spans x in [-1.5, 0.5]
    let expected = ImageBuffer::from_fn(96, 96, |x, y| match view.ground_point(x, y) {
        Some(p) if (-1.5..=0.5).contains(&p.x) && p.z.abs() <= 0.5 => 1.0,
        _ => 0.0,
    });
    let mut mismatches = 0;
    for y in 0..96 {
        for x in 0..96 {
            if shadow.get(x, y) == expected.get(x, y) {
                continue;
            }
            mismatches += 1;
            let near_edge = (y.saturating_sub(1)..=(y + 1).min(95))
                .any(|yy| (x.saturating_sub(1)..=(x + 1).min(95)).any(|xx| expected.get(xx, yy) != expected.get(x, y)));
            assert!(near_edge, "pixel ({x},{y}) off by more than 1 px");
        }
    }
    assert!(expected.count_nonzero() > 200);
    assert!(mismatches < expected.count_nonzero() / 10);
}

#[test]
fn azimuth_quarter_turn_rotates_shadow() {
    let bases = pole_bases();
    let view = pole_view();
    let angle = |x: f64| {
        let s = bases.compose((&single(x, 0.1, 2.0, 0.002)).into()).unwrap();
        let (mut sx, mut sz, mut m) = (0.0, 0.0, 0.0);
        for py in 0..view.height() {
            for px in 0..view.width() {
                let v = s.pixels.get(px, py) as f64;
                if v > 0.0 {
                    let p = view.ground_point(px, py).unwrap();
                    sx += v * p.x;
                    sz += v * p.z;
                    m += v;
                }
            }
        }
        (sz / m).atan2(sx / m).to_degrees()
    };
    for k in 0..4 {
        let x = 0.1 + 0.25 * k as f64;
        let turn = (angle((x + 0.25) % 1.0) - angle(x)).rem_euclid(360.0);
        assert!((turn - 90.0).abs() <= 10.0, "x = {x}: shadow turned {turn} degrees");
    }
}

#[test]
fn softer_light_of_equal_power_spreads_the_shadow() {
    let bases = cube_bases();
    for (x, y) in [(0.5, 0.25), (0.2, 0.3), (0.8, 0.4)] {
        let mut last: Option<(f32, usize)> = None;
        for s2 in [0.005, 0.02, 0.08] {
            // intensity * sigma^2 held fixed so every light carries the same power
            let s = bases.compose((&single(x, y, 0.015 / s2, s2)).into()).unwrap();
            let now = (s.pixels.max().unwrap(), s.pixels.count_nonzero());
            if let Some((peak, area)) = last {
                assert!(now.0 <= peak, "({x},{y}) sigma2 {s2}: peak rose {peak} -> {}", now.0);
                assert!(now.1 >= area, "({x},{y}) sigma2 {s2}: support shrank {area} -> {}", now.1);
            }
            last = Some(now);
        }
    }
}

#[test]
fn sweep_is_continuous() {
    let bases = cube_bases();
    for x0 in [0.05, 0.4, 0.7] {
        let frames: Vec<ImageBuffer> = (0..=10)
            .map(|k| bases.compose((&single(x0 + k as f64 / ELM_WIDTH as f64, 0.3, 2.0, 0.01)).into()).unwrap().pixels)
            .collect();
        let d = |a: &ImageBuffer, b: &ImageBuffer| shadowbasis_core::metrics::rmse(a, b).unwrap();
        assert!(d(&frames[0], &frames[1]) < d(&frames[0], &frames[10]), "x0 = {x0}");
    }
}

#[test]
fn radiance_extremes() {
    let bases = cube_bases();
    let elm = single(0.5, 0.25, 2.0, 0.01);
    let total = shadowbasis_core::bases::total_irradiance((&elm).into()).unwrap() as f32;
    let lit = shadowbasis_core::ShadowMap {
        pixels: ImageBuffer::new(32, 32),
        domain: ShadowDomain::Inverse,
        receiver: bases.receiver().cloned(),
    };
    let receiver = bases.receiver().unwrap();
    let rad = lit.to_radiance((&elm).into()).unwrap();
    let dark = shadowbasis_core::ShadowMap { pixels: ImageBuffer::filled(32, 32, total), ..lit.clone() }
        .to_radiance_with_total(total as f64);
    for (i, &r) in receiver.data().iter().enumerate() {
        let expect = if r > 0.0 { total } else { 0.0 };
        assert_eq!(rad.pixels.data()[i], expect);
        assert_eq!(dark.pixels.data()[i], 0.0);
    }
}

#[test]
fn oracle_is_linear_and_refines_with_softness() {
    let view = cube_view();
    let r1 = sample_elm(1).rasterize().unwrap();
    let r2 = sample_elm(2).rasterize().unwrap();
    let mix = combine(&r1, &r2, 0.7, 1.9);
    let out = render_oracle_rasters(view, &[r1, r2, mix]).unwrap();
    let expected = combine(&out[0].pixels, &out[1].pixels, 0.7, 1.9);
    assert!(rel_err(&out[2].pixels, &expected) <= 1e-5);

    let bases = cube_bases();
    let errors: Vec<f64> = [0.002, 0.01, 0.05]
        .iter()
        .map(|&s2| {
            let elm = single(0.5, 0.25, 2.0, s2);
            let raster = elm.rasterize().unwrap();
            let oracle = render_oracle_rasters(view, &[raster]).unwrap().remove(0);
            let composed = bases.compose((&elm).into()).unwrap();
            rmse_scale_invariant(&composed.pixels.normalized_to_peak(), &oracle.pixels.normalized_to_peak()).unwrap()
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn compose_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), alpha in 0.0f32..3.0, beta in 0.0f32..3.0) {
        let bases = cube_bases();
        let r1 = sample_elm(s1).rasterize().unwrap();
        let r2 = sample_elm(s2).rasterize().unwrap();
        let lhs = bases.compose((&combine(&r1, &r2, alpha, beta)).into()).unwrap().pixels;
        let c1 = bases.compose((&r1).into()).unwrap().pixels;
        let c2 = bases.compose((&r2).into()).unwrap().pixels;
        let rhs = combine(&c1, &c2, alpha, beta);
        prop_assert!(rel_err(&lhs, &rhs) <= 1e-5, "relative error {}", rel_err(&lhs, &rhs));
    }

    #[test]
    fn patch_constant_light_selects_one_basis(r in 0..GRID_ROWS, c in 0..GRID_COLS, value in 1e-3f32..100.0) {
        let bases = cube_bases();
        let raster = ImageBuffer::from_fn(ELM_WIDTH, ELM_HEIGHT, |u, v| {
            if u / PATCH_SIZE == c && v / PATCH_SIZE == r { value } else { 0.0 }
        });
        let out = bases.compose((&raster).into()).unwrap();
        let expected = bases.basis(r, c).scaled(value);
        prop_assert!(rel_err(&out.pixels, &expected) <= 1e-5);
        prop_assert_eq!(out.domain, ShadowDomain::Inverse);
    }

    #[test]
    fn composed_shadows_are_non_negative(seed in any::<u64>()) {
        let s = cube_bases().compose((&sample_elm(seed)).into()).unwrap();
        prop_assert!(s.pixels.data().iter().all(|&v| v >= 0.0));
    }
}
