//! Separable bicubic resampling (a = −0.5) with antialiasing on reduction.

use crate::error::{invalid, Result};
use crate::frames::Frame;
use crate::scalar::Real;

/// Cubic convolution parameter (Catmull-Rom).
pub const BICUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with parameter [`BICUBIC_A`].
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-sample tap lists for one axis.
struct AxisTaps<T> {
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<T>,
}

impl<T: Real> AxisTaps<T> {
    fn new(in_len: usize, out_len: usize) -> Self {
        let scale = out_len as f64 / in_len as f64;
        // Reduction widens the kernel so it doubles as the antialiasing filter.
        let stretch = scale.min(1.0);
        let support = 2.0 / stretch;
        let mut offsets = Vec::with_capacity(out_len + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        let mut raw = Vec::new();
        offsets.push(0);
        for i in 0..out_len {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).ceil() as isize;
            let hi = (center + support).floor() as isize;
            raw.clear();
            for j in lo..=hi {
                let w = cubic_kernel((center - j as f64) * stretch);
                if w != 0.0 {
                    raw.push((j.clamp(0, in_len as isize - 1) as usize, w));
                }
            }
            let total: f64 = raw.iter().map(|(_, w)| w).sum();
            for &(j, w) in &raw {
                indices.push(j);
                weights.push(T::lit(w / total));
            }
            offsets.push(indices.len());
        }
        Self {
            offsets,
            indices,
            weights,
        }
    }

    #[inline]
    fn taps(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }
}

/// Resizes to exactly `out_w`×`out_h`. Output samples are clamped to [0, 1].
pub fn resize_bicubic<T: Real>(frame: &Frame<T>, out_w: usize, out_h: usize) -> Result<Frame<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(invalid(format!("resize target {out_w}x{out_h} is empty")));
    }
    let (w, h, ch) = (frame.width(), frame.height(), frame.channels());
    if (out_w, out_h) == (w, h) {
        // Unit scale places every output center on an input sample.
        return Ok(frame.clone().clamp01());
    }
    let src = frame.data();
    let xt = AxisTaps::<T>::new(w, out_w);
    let yt = AxisTaps::<T>::new(h, out_h);

    let mut horiz = vec![T::zero(); out_w * h * ch];
    for y in 0..h {
        let row = &src[y * w * ch..(y + 1) * w * ch];
        let out = &mut horiz[y * out_w * ch..(y + 1) * out_w * ch];
        for x in 0..out_w {
            for (j, wt) in xt.taps(x) {
                for c in 0..ch {
                    out[x * ch + c] = out[x * ch + c] + wt * row[j * ch + c];
                }
            }
        }
    }

    let stride = out_w * ch;
    let mut data = vec![T::zero(); out_w * out_h * ch];
    for y in 0..out_h {
        let out = &mut data[y * stride..(y + 1) * stride];
        for (j, wt) in yt.taps(y) {
            let row = &horiz[j * stride..(j + 1) * stride];
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + wt * v;
            }
        }
    }
    data.iter_mut().for_each(|v| *v = v.clamp01());
    Ok(Frame::new(out_w, out_h, ch, data)?.with_index(frame.index))
}

/// Output size of scaling `len` by `factor`: `round(len·factor)`, at least 1.
#[inline]
pub fn scaled_len(len: usize, factor: f64) -> usize {
    ((len as f64 * factor).round() as usize).max(1)
}

/// Bicubic resampling by `factor`; output dimensions are `round(dim·factor)`.
pub fn resample_bicubic<T: Real>(frame: &Frame<T>, factor: f64) -> Result<Frame<T>> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(invalid(format!("resample factor {factor} must be positive")));
    }
    resize_bicubic(
        frame,
        scaled_len(frame.width(), factor),
        scaled_len(frame.height(), factor),
    )
}

/// Down-then-up bicubic round trip: keeps the dimensions, removes the band
/// above `1/factor` of Nyquist.
pub fn band_limit<T: Real>(frame: &Frame<T>, factor: f64) -> Result<Frame<T>> {
    if !(factor.is_finite() && factor > 1.0) {
        return Err(invalid(format!("band-limit factor {factor} must exceed 1")));
    }
    let down = resample_bicubic(frame, 1.0 / factor)?;
    resize_bicubic(&down, frame.width(), frame.height())
}

/// Bicubic interpolation at a continuous position (pixel centers at integer
/// coordinates, replicate border). Not clamped.
pub fn sample_bicubic<T: Real>(frame: &Frame<T>, x: T, y: T, out: &mut [T]) {
    let xf = x.floor();
    let yf = y.floor();
    let fx = (x - xf).as_f64();
    let fy = (y - yf).as_f64();
    let x0 = xf.to_isize().unwrap_or(0);
    let y0 = yf.to_isize().unwrap_or(0);
    let wx: [T; 4] = std::array::from_fn(|i| T::lit(cubic_kernel(fx - (i as f64 - 1.0))));
    let wy: [T; 4] = std::array::from_fn(|i| T::lit(cubic_kernel(fy - (i as f64 - 1.0))));
    out.iter_mut().for_each(|v| *v = T::zero());
    for (j, &wyj) in wy.iter().enumerate() {
        let yy = y0 + j as isize - 1;
        for (i, &wxi) in wx.iter().enumerate() {
            let w = wyj * wxi;
            let xx = x0 + i as isize - 1;
            for (c, o) in out.iter_mut().enumerate() {
                *o = *o + w * frame.get_clamped(xx, yy, c);
            }
        }
    }
}

/// Bilinear interpolation at a continuous position (replicate border).
pub fn sample_bilinear<T: Real>(frame: &Frame<T>, x: T, y: T, out: &mut [T]) {
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let x0 = xf.to_isize().unwrap_or(0);
    let y0 = yf.to_isize().unwrap_or(0);
    let one = T::one();
    for (c, o) in out.iter_mut().enumerate() {
        let a = frame.get_clamped(x0, y0, c);
        let b = frame.get_clamped(x0 + 1, y0, c);
        let d = frame.get_clamped(x0, y0 + 1, c);
        let e = frame.get_clamped(x0 + 1, y0 + 1, c);
        *o = (one - fy) * ((one - fx) * a + fx * b) + fy * ((one - fx) * d + fx * e);
    }
}
