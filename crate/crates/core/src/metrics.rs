//! Image quality metrics. All scores are computed on luma in f64.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::frames::Frame;
use crate::scalar::Real;

pub const DEFAULT_CHARBONNIER_EPS: f64 = 1e-3;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn luma_pair<T: Real>(pred: &Frame<T>, gt: &Frame<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    if pred.dims() != gt.dims() {
        return Err(invalid(format!(
            "metric inputs differ in size: {:?} vs {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let to64 = |f: &Frame<T>| f.luma().data().iter().map(|v| v.as_f64()).collect::<Vec<_>>();
    Ok((to64(pred), to64(gt)))
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Peak signal-to-noise ratio for a unit peak; identical inputs give `+inf`.
pub fn psnr<T: Real>(pred: &Frame<T>, gt: &Frame<T>) -> Result<f64> {
    let (a, b) = luma_pair(pred, gt)?;
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR restricted to pixels where `mask > 0.5`.
pub fn psnr_masked<T: Real>(pred: &Frame<T>, gt: &Frame<T>, mask: &Frame<T>) -> Result<f64> {
    let (a, b) = luma_pair(pred, gt)?;
    if mask.dims() != pred.dims() || mask.channels() != 1 {
        return Err(invalid("mask must be a single-channel frame of the image size"));
    }
    let half = T::lit(0.5);
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, m) in mask.data().iter().enumerate() {
        if *m > half {
            sum += (a[i] - b[i]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(invalid("empty metric mask"));
    }
    Ok(psnr_from_mse(sum / n as f64))
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn ssim_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        *t = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Windowed weighted mean over valid positions only, separable.
fn gauss_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5).
pub fn ssim<T: Real>(pred: &Frame<T>, gt: &Frame<T>) -> Result<f64> {
    let (a, b) = luma_pair(pred, gt)?;
    let (w, h) = pred.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let taps = ssim_taps();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = gauss_valid(&a, w, h, &taps);
    let mu_b = gauss_valid(&b, w, h, &taps);
    let e_aa = gauss_valid(&prod(&a, &a), w, h, &taps);
    let e_bb = gauss_valid(&prod(&b, &b), w, h, &taps);
    let e_ab = gauss_valid(&prod(&a, &b), w, h, &taps);
    let total: f64 = (0..mu_a.len())
        .map(|i| ssim_index(mu_a[i], mu_b[i], e_aa[i], e_bb[i], e_ab[i]))
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// SSIM of one window from its first and second weighted moments.
pub fn ssim_index(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    ((2.0 * (mu_a * mu_b) + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Mean per-pixel `sqrt(d² + ε²)`.
///
/// Evaluated as `ε + mean(d² / (sqrt(d² + ε²) + ε))`, which is the same
/// quantity but returns `ε` bit-exactly for identical inputs.
pub fn charbonnier<T: Real>(pred: &Frame<T>, gt: &Frame<T>, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("charbonnier epsilon must be positive"));
    }
    let (a, b) = luma_pair(pred, gt)?;
    let eps2 = epsilon * epsilon;
    let excess: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let d2 = (x - y).powi(2);
            d2 / ((d2 + eps2).sqrt() + epsilon)
        })
        .sum();
    Ok(epsilon + excess / a.len() as f64)
}

/// Scores of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub charbonnier: f64,
}

impl FrameMetrics {
    pub fn compute<T: Real>(frame_index: usize, pred: &Frame<T>, gt: &Frame<T>) -> Result<Self> {
        Ok(Self {
            frame_index,
            psnr: psnr(pred, gt)?,
            ssim: ssim(pred, gt)?,
            charbonnier: charbonnier(pred, gt, DEFAULT_CHARBONNIER_EPS)?,
        })
    }
}

/// Aggregate scores plus optional named region PSNRs (mean over frames).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub charbonnier: f64,
    pub per_frame: Vec<FrameMetrics>,
    pub regions: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn from_frames(per_frame: Vec<FrameMetrics>) -> Self {
        let n = per_frame.len().max(1) as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| per_frame.iter().map(f).sum::<f64>() / n;
        Self {
            psnr: mean(|m| m.psnr),
            ssim: mean(|m| m.ssim),
            charbonnier: mean(|m| m.charbonnier),
            regions: Vec::new(),
            per_frame,
        }
    }

    /// Evaluates paired sequences frame by frame.
    pub fn evaluate<T: Real>(pred: &[Frame<T>], gt: &[Frame<T>]) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(invalid(format!(
                "{} predictions for {} ground-truth frames",
                pred.len(),
                gt.len()
            )));
        }
        let per_frame = pred
            .iter()
            .zip(gt)
            .map(|(p, g)| FrameMetrics::compute(g.index, p, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_frames(per_frame))
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("frame_index,psnr,ssim,charbonnier\n");
        for m in &self.per_frame {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.8}", m.frame_index, m.psnr, m.ssim, m.charbonnier);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_form() {
        let a = Frame::<f64>::filled(16, 16, 1, 0.0);
        let b = Frame::<f64>::filled(16, 16, 1, 0.5);
        assert!((psnr(&a, &b).unwrap() - 6.0206).abs() < 1e-4);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &Frame::filled(8, 16, 1, 0.0)).is_err());
    }

    #[test]
    fn charbonnier_closed_form() {
        let a = Frame::<f64>::filled(4, 4, 1, 0.2);
        let b = Frame::<f64>::filled(4, 4, 1, 0.5);
        let v = charbonnier(&a, &b, 1e-3).unwrap();
        assert!((v - (0.09f64 + 1e-6).sqrt()).abs() < 1e-12);
        assert_eq!(charbonnier(&a, &a, 1e-3).unwrap(), 1e-3);
    }

    #[test]
    fn ssim_identity_and_size() {
        let a = Frame::<f32>::from_fn(20, 16, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f32 / 11.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let small = Frame::<f32>::filled(10, 20, 1, 0.1);
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn masked_psnr_ignores_outside() {
        let a = Frame::<f64>::filled(4, 1, 1, 0.0);
        let b = Frame::new(4, 1, 1, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let m = Frame::new(4, 1, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(psnr_masked(&a, &b, &m).unwrap(), f64::INFINITY);
        assert!(psnr_masked(&a, &b, &Frame::filled(4, 1, 1, 0.0)).is_err());
    }

    #[test]
    fn report_means_and_csv() {
        let r = MetricReport::from_frames(vec![
            FrameMetrics {
                frame_index: 0,
                psnr: 30.0,
                ssim: 0.9,
                charbonnier: 0.01,
            },
            FrameMetrics {
                frame_index: 1,
                psnr: 20.0,
                ssim: 0.7,
                charbonnier: 0.03,
            },
        ]);
        assert_eq!(r.psnr, 25.0);
        assert!((r.ssim - 0.8).abs() < 1e-12);
        assert_eq!(r.csv().lines().count(), 3);
    }
}
