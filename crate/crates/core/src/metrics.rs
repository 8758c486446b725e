//! Evaluation metrics and training losses.

use serde::{Deserialize, Serialize};

use crate::bases::{ShadowDomain, ShadowMap};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub rmse_s: f64,
    pub zncc: f64,
    pub dssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_ao: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_shadow: Option<f64>,
}

fn check(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<()> {
    pred.ensure_same_dims(gt)?;
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("empty images".into()));
    }
    Ok(())
}

fn pairs<'a>(pred: &'a ImageBuffer, gt: &'a ImageBuffer) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.data().iter().zip(gt.data()).map(|(&p, &g)| (p as f64, g as f64))
}

pub fn mse(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check(pred, gt)?;
    Ok(pairs(pred, gt).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    mse(pred, gt).map(f64::sqrt)
}

/// Least-squares scale aligning `pred` to `gt`; 0 for an all-zero `pred`.
pub fn optimal_scale(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check(pred, gt)?;
    let (pg, pp) = pairs(pred, gt).fold((0.0, 0.0), |(pg, pp), (p, g)| (pg + p * g, pp + p * p));
    Ok(if pp > 0.0 { pg / pp } else { 0.0 })
}

/// RMSE after scaling `pred` by [`optimal_scale`].
pub fn rmse_scale_invariant(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    let s = optimal_scale(pred, gt)?;
    let sum: f64 = pairs(pred, gt).map(|(p, g)| (s * p - g).powi(2)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Zero-normalized cross-correlation (Pearson). Undefined when either
/// image is constant.
pub fn zncc(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check(pred, gt)?;
    let n = pred.len() as f64;
    let (sp, sg) = pairs(pred, gt).fold((0.0, 0.0), |(a, b), (p, g)| (a + p, b + g));
    let (mp, mg) = (sp / n, sg / n);
    let (mut cov, mut vp, mut vg) = (0.0, 0.0, 0.0);
    for (p, g) in pairs(pred, gt) {
        let (dp, dg) = (p - mp, g - mg);
        cov += dp * dg;
        vp += dp * dp;
        vg += dg * dg;
    }
    if vp == 0.0 || vg == 0.0 {
        return Err(Error::UndefinedMetric("zncc of a constant image".into()));
    }
    Ok(cov / (vp.sqrt() * vg.sqrt()))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over valid window positions only.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let n = SSIM_WINDOW;
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|i| k[i] * row[x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM with an 11x11 Gaussian window. The dynamic range is taken
/// from `gt`; a flat `gt` uses a range of 1.
pub fn ssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    check(pred, gt)?;
    let (w, h) = gt.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::UndefinedMetric(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let range = (gt.max().unwrap() - gt.min().unwrap()) as f64;
    let l = if range > 0.0 { range } else { 1.0 };
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let k = gaussian_kernel();
    let x: Vec<f64> = pred.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = gt.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let (mx, ow, oh) = filter_valid(&x, w, h, &k);
    let (my, _, _) = filter_valid(&y, w, h, &k);
    let (sxx, _, _) = filter_valid(&xx, w, h, &k);
    let (syy, _, _) = filter_valid(&yy, w, h, &k);
    let (sxy, _, _) = filter_valid(&xy, w, h, &k);
    let mut total = 0.0;
    for i in 0..ow * oh {
        let (a, b) = (mx[i], my[i]);
        let va = sxx[i] - a * a;
        let vb = syy[i] - b * b;
        let cov = sxy[i] - a * b;
        total += ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (va + vb + c2));
    }
    Ok(total / (ow * oh) as f64)
}

/// `(1 - SSIM) / 2`.
pub fn dssim(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    ssim(pred, gt).map(|s| (1.0 - s) / 2.0)
}

fn same_domain(pred: &ShadowMap, gt: &ShadowMap) -> Result<()> {
    if pred.domain != gt.domain {
        return Err(Error::Domain(format!(
            "prediction is {:?} but ground truth is {:?}",
            pred.domain, gt.domain
        )));
    }
    Ok(())
}

/// All image metrics on a pair of shadow maps in the same domain.
pub fn evaluate(pred: &ShadowMap, gt: &ShadowMap) -> Result<MetricReport> {
    same_domain(pred, gt)?;
    evaluate_images(&pred.pixels, &gt.pixels)
}

pub fn evaluate_images(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<MetricReport> {
    Ok(MetricReport {
        rmse: rmse(pred, gt)?,
        rmse_s: rmse_scale_invariant(pred, gt)?,
        zncc: zncc(pred, gt)?,
        dssim: dssim(pred, gt)?,
        l2_ao: None,
        l2_shadow: None,
    })
}

/// Mean squared error between two shadow maps of the same domain.
pub fn shadow_loss(pred: &ShadowMap, gt: &ShadowMap) -> Result<f64> {
    same_domain(pred, gt)?;
    mse(&pred.pixels, &gt.pixels)
}

/// Mean squared error between AO maps.
pub fn ao_loss(pred: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    mse(pred, gt)
}

/// Training losses `(l2_ao, l2_shadow)`, both mean-reduced so each equals
/// the square of the matching RMSE. Both shadows must be inverse-domain.
pub fn losses(
    pred_ao: &ImageBuffer,
    gt_ao: &ImageBuffer,
    pred_shadow: &ShadowMap,
    gt_shadow: &ShadowMap,
) -> Result<(f64, f64)> {
    for (which, m) in [("prediction", pred_shadow), ("ground truth", gt_shadow)] {
        if m.domain != ShadowDomain::Inverse {
            return Err(Error::Domain(format!("shadow {which} must be inverse-domain, got {:?}", m.domain)));
        }
    }
    Ok((ao_loss(pred_ao, gt_ao)?, shadow_loss(pred_shadow, gt_shadow)?))
}

impl ShadowDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            ShadowDomain::Inverse => "inverse",
            ShadowDomain::Radiance => "radiance",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| (x * 3 + y * 7 % 11) as f32)
    }

    #[test]
    fn identical_images() {
        let a = ramp(32, 24);
        let r = evaluate_images(&a, &a).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert!(r.rmse_s < 1e-12);
        assert!((r.zncc - 1.0).abs() < 1e-12);
        assert!(r.dssim.abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let a = ramp(32, 24);
        let b = a.scaled(2.5);
        assert!(rmse_scale_invariant(&b, &a).unwrap() < 1e-6);
        assert!((optimal_scale(&b, &a).unwrap() - 0.4).abs() < 1e-9);
        assert!(rmse(&b, &a).unwrap() > 1.0);
        assert!((zncc(&b, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_prediction_scale_is_zero() {
        let a = ramp(16, 16);
        let z = ImageBuffer::new(16, 16);
        assert_eq!(optimal_scale(&z, &a).unwrap(), 0.0);
        let expected = rmse(&z, &a).unwrap();
        assert!((rmse_scale_invariant(&z, &a).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn zncc_constant_is_undefined() {
        let a = ramp(16, 16);
        let c = ImageBuffer::filled(16, 16, 3.0);
        assert!(matches!(zncc(&c, &a), Err(Error::UndefinedMetric(_))));
        assert!(matches!(zncc(&a, &c), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rmse_known_value() {
        let a = ImageBuffer::from_vec(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = ImageBuffer::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(rmse(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn dssim_of_negated_signal_is_large() {
        let a = ramp(32, 32);
        let m = a.max().unwrap();
        let b = a.map(|v| m - v);
        assert!(dssim(&b, &a).unwrap() > 0.5);
        assert!(matches!(ssim(&ramp(8, 8), &ramp(8, 8)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let a = ShadowMap {
            pixels: ramp(16, 16),
            domain: ShadowDomain::Inverse,
            receiver: None,
        };
        let mut b = a.clone();
        b.domain = ShadowDomain::Radiance;
        assert!(matches!(evaluate(&a, &b), Err(Error::Domain(_))));
        assert!(matches!(shadow_loss(&a, &b), Err(Error::Domain(_))));
        assert_eq!(shadow_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn report_json_fields() {
        let r = MetricReport {
            rmse: 1.0,
            rmse_s: 0.5,
            zncc: 0.9,
            dssim: 0.1,
            l2_ao: None,
            l2_shadow: Some(0.25),
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["rmse", "rmse_s", "zncc", "dssim"] {
            assert!(v.get(k).is_some());
        }
        assert!(v.get("l2_ao").is_none());
        assert_eq!(v["l2_shadow"], 0.25);
    }

    fn inverse(pixels: ImageBuffer) -> ShadowMap {
        ShadowMap {
            pixels,
            domain: ShadowDomain::Inverse,
            receiver: None,
        }
    }

    #[test]
    fn losses_are_squared_rmse() {
        let a = ramp(12, 12);
        let b = a.map(|v| v * 0.5 + 1.0);
        assert_eq!(losses(&a, &a, &inverse(a.clone()), &inverse(a.clone())).unwrap(), (0.0, 0.0));
        let (la, ls) = losses(&a, &b, &inverse(b.clone()), &inverse(a.clone())).unwrap();
        let r = rmse(&a, &b).unwrap();
        assert!((la - r * r).abs() < 1e-9 * la);
        assert!((ls - r * r).abs() < 1e-9 * ls);
        let mut rad = inverse(a.clone());
        rad.domain = ShadowDomain::Radiance;
        assert!(matches!(losses(&a, &a, &rad, &inverse(a.clone())), Err(Error::Domain(_))));
        assert!(matches!(losses(&a, &a, &inverse(a.clone()), &rad), Err(Error::Domain(_))));
        assert!(matches!(losses(&a, &ramp(4, 4), &inverse(a.clone()), &inverse(a.clone())), Err(Error::DimensionMismatch(..))));
    }

    // 8x8 values from a fixed LCG, checked against straightforward loops.
    fn lcg_image(seed: u64) -> ImageBuffer {
        let mut s = seed;
        ImageBuffer::from_fn(8, 8, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 40) as f32 / (1u64 << 24) as f32
        })
    }

    #[test]
    fn hand_computed_references() {
        let a = lcg_image(1);
        let b = lcg_image(2);
        let (xs, ys): (Vec<f64>, Vec<f64>) = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64, y as f64)).unzip();
        let mut sq = 0.0;
        for i in 0..64 {
            sq += (xs[i] - ys[i]).powi(2);
        }
        assert!((rmse(&a, &b).unwrap() - (sq / 64.0).sqrt()).abs() < 1e-12);

        let mx = xs.iter().sum::<f64>() / 64.0;
        let my = ys.iter().sum::<f64>() / 64.0;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..64 {
            num += (xs[i] - mx) * (ys[i] - my);
            dx += (xs[i] - mx).powi(2);
            dy += (ys[i] - my).powi(2);
        }
        assert!((zncc(&a, &b).unwrap() - num / (dx * dy).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zncc_of_negation_is_minus_one() {
        let a = lcg_image(9);
        assert!((zncc(&a.map(|v| -v), &a).unwrap() + 1.0).abs() < 1e-12);
        assert!((zncc(&a.map(|v| 3.0 * v + 7.0), &a).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn disk_and_complement_are_dissimilar() {
        let disk = ImageBuffer::from_fn(32, 32, |x, y| {
            let (dx, dy) = (x as f32 - 15.5, y as f32 - 15.5);
            if dx * dx + dy * dy < 100.0 { 1.0 } else { 0.0 }
        });
        let comp = disk.map(|v| 1.0 - v);
        let d = dssim(&comp, &disk).unwrap();
        assert!(d > 0.2 && d <= 1.0, "{d}");
    }

    #[test]
    fn zero_against_constant() {
        let z = ImageBuffer::new(4, 4);
        let c = ImageBuffer::filled(4, 4, 2.5);
        assert_eq!(rmse(&z, &c).unwrap(), 2.5);
    }
}
