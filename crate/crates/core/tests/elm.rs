use proptest::prelude::*;

use shadowbasis_core::elm::{ELM_WIDTH, MAX_AMBIENT, MAX_INTENSITY, MAX_SIGMA2};
use shadowbasis_core::{sample_elm, EnvLightMap, GaussianLight, ImageBuffer};

fn max_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn shifted(img: &ImageBuffer, k: usize) -> ImageBuffer {
    let w = img.width();
    ImageBuffer::from_fn(w, img.height(), |u, v| img.get((u + w - k % w) % w, v))
}

fn arb_light() -> impl Strategy<Value = GaussianLight> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=MAX_INTENSITY, 1e-4..=MAX_SIGMA2).prop_map(|(x, y, i, s)| GaussianLight::new(x, y, i, s))
}

fn arb_elm() -> impl Strategy<Value = EnvLightMap> {
    (prop::collection::vec(arb_light(), 0..6), 0.0..=MAX_AMBIENT).prop_map(|(l, a)| EnvLightMap::new(l, a))
}

#[test]
fn lights_mirrored_across_the_seam() {
    let a = EnvLightMap::new(vec![GaussianLight::new(0.01, 0.3, 2.0, 0.02)], 0.0).rasterize().unwrap();
    let b = EnvLightMap::new(vec![GaussianLight::new(0.99, 0.3, 2.0, 0.02)], 0.0).rasterize().unwrap();
    let w = a.width();
    let mirrored = ImageBuffer::from_fn(w, a.height(), |u, v| b.get((w - u) % w, v));
    assert!(max_abs_diff(&a, &mirrored) < 1e-5);
    // both halves of the light reach across the seam
    assert!(a.get(w - 3, 77) > 1.0 && b.get(3, 77) > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn whole_pixel_azimuth_moves_are_cyclic_shifts(
        x in 0.0..1.0f64,
        y in 0.05..0.5f64,
        s in 0.001..MAX_SIGMA2,
        k in 0usize..ELM_WIDTH,
    ) {
        let base = EnvLightMap::new(vec![GaussianLight::new(x, y, 2.0, s)], 0.01).rasterize().unwrap();
        let x2 = (x + k as f64 / ELM_WIDTH as f64).rem_euclid(1.0);
        let moved = EnvLightMap::new(vec![GaussianLight::new(x2, y, 2.0, s)], 0.01).rasterize().unwrap();
        prop_assert!(max_abs_diff(&shifted(&base, k), &moved) < 1e-5);
    }

    #[test]
    fn mixtures_add(a in arb_elm(), b in arb_elm()) {
        let ambient = a.ambient;
        let mut both = a.clone();
        both.lights.extend(b.lights.iter().cloned());
        let b = EnvLightMap::new(b.lights, ambient);
        let ra = a.rasterize().unwrap();
        let rb = b.rasterize().unwrap();
        let sum = ImageBuffer::from_fn(ra.width(), ra.height(), |u, v| ra.get(u, v) + rb.get(u, v) - ambient as f32);
        let peak = sum.max().unwrap().max(1.0);
        prop_assert!(max_abs_diff(&both.rasterize().unwrap(), &sum) <= 1e-6 * peak);
    }

    #[test]
    fn intensity_scaling(elm in arb_elm(), exp in -3i32..2, c in 0.1..3.0f64) {
        let scale = |e: &EnvLightMap, f: f64| {
            let mut out = e.clone();
            out.lights.iter_mut().for_each(|l| l.intensity *= f);
            out
        };
        // powers of two commute with rounding, so the zero-ambient case is exact
        let flat = EnvLightMap::new(elm.lights.clone(), 0.0);
        let p = 2f64.powi(exp);
        prop_assert_eq!(scale(&flat, p).rasterize().unwrap(), flat.rasterize().unwrap().scaled(p as f32));

        let a = elm.ambient as f32;
        let base = elm.rasterize().unwrap().map(|v| v - a);
        let scaled = scale(&elm, c).rasterize().unwrap().map(|v| v - a);
        let peak = scaled.max().unwrap().max(1.0);
        prop_assert!(max_abs_diff(&scaled, &base.scaled(c as f32)) <= 1e-5 * peak);
    }

    #[test]
    fn sampled_maps_are_valid(seed in any::<u64>()) {
        let elm = sample_elm(seed);
        prop_assert!((1..=50).contains(&elm.lights.len()));
        prop_assert!(elm.lights.iter().all(|l| l.in_sampling_range()));
        prop_assert!((0.0..=MAX_AMBIENT).contains(&elm.ambient));
        prop_assert_eq!(&elm, &sample_elm(seed));
        let r = elm.rasterize().unwrap();
        prop_assert!(r.data().iter().all(|v| v.is_finite() && *v >= elm.ambient as f32));
    }

    #[test]
    fn json_is_a_fixed_point(elm in arb_elm()) {
        let text = elm.to_json();
        let back = EnvLightMap::from_json(&text).unwrap();
        prop_assert_eq!(&back, &elm);
        prop_assert_eq!(back.to_json(), text);
    }
}
