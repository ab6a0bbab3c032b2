//! Gauss-Newton photometric polish of an affine alignment.

use crate::align::{solve_linear, AffineParams};
use crate::frames::{sample_bilinear, Frame};
use crate::scalar::Real;

/// Template border skipped so that gradient taps stay inside.
const BORDER: usize = 2;
/// Largest accepted change of any linear coefficient.
const MAX_LINEAR_DRIFT: f64 = 0.15;

fn sample<T: Real>(f: &Frame<T>, x: f64, y: f64) -> f64 {
    let mut v = [T::zero()];
    sample_bilinear(f, T::lit(x), T::lit(y), &mut v);
    v[0].as_f64()
}

fn inside<T: Real>(f: &Frame<T>, x: f64, y: f64) -> bool {
    x >= 1.0 && y >= 1.0 && x <= (f.width() - 2) as f64 && y <= (f.height() - 2) as f64
}

/// Mean squared residual and the fraction of template pixels that mapped
/// inside the image.
fn residual<T: Real>(template: &Frame<T>, image: &Frame<T>, a: &[f64; 6], c: (f64, f64)) -> (f64, f64) {
    let (w, h) = template.dims();
    let (mut sum, mut n, mut total) = (0.0, 0usize, 0usize);
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            total += 1;
            let (ux, uy) = (x as f64 - c.0, y as f64 - c.1);
            let (ix, iy) = (a[0] * ux + a[1] * uy + a[4], a[2] * ux + a[3] * uy + a[5]);
            if inside(image, ix, iy) {
                sum += (sample(image, ix, iy) - template.get(x, y, 0).as_f64()).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        (f64::INFINITY, 0.0)
    } else {
        (sum / n as f64, n as f64 / total as f64)
    }
}

/// Refines `image_to_template` (image pixels to template pixels) by forward
/// additive Gauss-Newton on the squared luma difference. Returns `None` when
/// the polish does not lower the residual or drifts implausibly far.
pub(crate) fn refine_affine<T: Real>(
    template: &Frame<T>,
    image: &Frame<T>,
    image_to_template: &AffineParams<f64>,
    iterations: usize,
) -> Option<AffineParams<f64>> {
    let (w, h) = template.dims();
    if w <= 2 * BORDER + 2 || h <= 2 * BORDER + 2 {
        return None;
    }
    let g = image_to_template.inverse().ok()?;
    // Template-to-image map about the template center: x = A (u − c) + b.
    let c = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let (bx, by) = g.apply(c.0, c.1);
    let start = [g.a11, g.a12, g.a21, g.a22, bx, by];
    let (start_err, start_cover) = residual(template, image, &start, c);
    if !start_err.is_finite() || start_cover < 0.5 {
        return None;
    }
    let mut p = start;
    for _ in 0..iterations {
        let mut hess = [[0.0f64; 6]; 6];
        let mut grad = [0.0f64; 6];
        for y in BORDER..h - BORDER {
            for x in BORDER..w - BORDER {
                let (ux, uy) = (x as f64 - c.0, y as f64 - c.1);
                let (ix, iy) = (p[0] * ux + p[1] * uy + p[4], p[2] * ux + p[3] * uy + p[5]);
                if !inside(image, ix, iy) {
                    continue;
                }
                let e = sample(image, ix, iy) - template.get(x, y, 0).as_f64();
                let gx = (sample(image, ix + 1.0, iy) - sample(image, ix - 1.0, iy)) / 2.0;
                let gy = (sample(image, ix, iy + 1.0) - sample(image, ix, iy - 1.0)) / 2.0;
                let j = [gx * ux, gx * uy, gy * ux, gy * uy, gx, gy];
                for r in 0..6 {
                    grad[r] += j[r] * e;
                    for k in 0..6 {
                        hess[r][k] += j[r] * j[k];
                    }
                }
            }
        }
        // Light damping keeps flat windows from producing wild steps.
        for (r, row) in hess.iter_mut().enumerate() {
            row[r] *= 1.0 + 1e-3;
        }
        let Some(step) = solve_linear(hess, grad) else {
            break;
        };
        for k in 0..6 {
            p[k] -= step[k];
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-4 {
            break;
        }
    }
    if (0..4).any(|k| (p[k] - start[k]).abs() > MAX_LINEAR_DRIFT) {
        return None;
    }
    let (err, cover) = residual(template, image, &p, c);
    if !(err < start_err) || cover < 0.5 {
        return None;
    }
    let refined = AffineParams {
        a11: p[0],
        a12: p[1],
        a21: p[2],
        a22: p[3],
        tx: p[4] - p[0] * c.0 - p[1] * c.1,
        ty: p[5] - p[2] * c.0 - p[3] * c.1,
    };
    refined.inverse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> Frame<f64> {
        Frame::from_fn(w, h, 1, |x, y, _| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (x * 0.31).sin() * (y * 0.23).cos() + 0.15 * ((x + 2.0 * y) * 0.17).sin()
        })
    }

    #[test]
    fn recovers_subpixel_shift() {
        let image = texture(80, 80);
        // Template = image shifted by (10.4, 12.7).
        let template = Frame::from_fn(40, 40, 1, |x, y, _| sample(&image, x as f64 + 10.4, y as f64 + 12.7));
        let truth = AffineParams::translation(-10.4, -12.7);
        let rough = AffineParams::translation(-10.0, -12.0);
        let refined = refine_affine(&template, &image, &rough, 20).unwrap();
        assert!(refined.max_abs_diff(&truth) < 0.02, "{refined:?}");
    }

    #[test]
    fn exact_start_is_kept_or_improved() {
        let image = texture(60, 60);
        let template = image.crop(10, 10, 30, 30).unwrap();
        let truth = AffineParams::translation(-10.0, -10.0);
        match refine_affine(&template, &image, &truth, 5) {
            Some(r) => assert!(r.max_abs_diff(&truth) < 1e-6),
            None => {}
        }
    }
}
