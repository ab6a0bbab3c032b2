//! Overlapping patch tiling and seam-free reassembly.

use crate::error::{invalid, Error, Result};
use crate::frames::Frame;
use crate::scalar::Real;

/// Square patches laid out with a fixed stride; the last row and column are
/// pulled back so they end on the frame border.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    /// Top-left corners in row-major order.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut out = vec![0];
    let mut pos = 0;
    while pos + patch < len {
        pos += stride;
        out.push(pos.min(len - patch));
        if pos + patch >= len {
            break;
        }
    }
    out.dedup();
    out
}

impl PatchGrid {
    pub fn n(&self) -> usize {
        self.origins.len()
    }

    /// Distinct x origins (columns) and y origins (rows).
    pub fn axes(&self) -> (Vec<usize>, Vec<usize>) {
        (
            axis_origins(self.width, self.patch_size, self.stride),
            axis_origins(self.height, self.patch_size, self.stride),
        )
    }

    /// Cuts every patch out of `frame`.
    pub fn cut<T: Real>(&self, frame: &Frame<T>) -> Result<Vec<((usize, usize), Frame<T>)>> {
        if frame.dims() != (self.width, self.height) {
            return Err(invalid("frame does not match grid"));
        }
        self.origins
            .iter()
            .map(|&(x, y)| Ok(((x, y), frame.crop(x, y, self.patch_size, self.patch_size)?)))
            .collect()
    }
}

pub fn make_grid(width: usize, height: usize, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    if patch_size == 0 || patch_size > width.min(height) {
        return Err(invalid(format!(
            "patch size {patch_size} does not fit a {width}x{height} frame"
        )));
    }
    if stride == 0 || stride > patch_size {
        return Err(invalid(format!("stride {stride} must be in 1..={patch_size}")));
    }
    let xs = axis_origins(width, patch_size, stride);
    let ys = axis_origins(height, patch_size, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(PatchGrid {
        width,
        height,
        patch_size,
        stride,
        origins,
    })
}

/// Raised-cosine weight for sample `i` of a length-`n` window. Strictly
/// positive on the whole window so every covered pixel has non-zero weight.
#[inline]
pub fn hann(i: usize, n: usize) -> f64 {
    let s = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin();
    s * s
}

/// Blends overlapping patches into a `width`×`height` frame. Each patch is
/// weighted by a separable Hann window; weights are renormalized per pixel.
pub fn splice<T: Real>(patches: &[((usize, usize), Frame<T>)], width: usize, height: usize) -> Result<Frame<T>> {
    let Some((_, first)) = patches.first() else {
        return Err(Error::Uncovered { x: 0, y: 0 });
    };
    let ch = first.channels();
    let mut acc = vec![0.0f64; width * height * ch];
    let mut wsum = vec![0.0f64; width * height];
    for ((ox, oy), p) in patches {
        let (pw, ph) = p.dims();
        if p.channels() != ch {
            return Err(invalid("patches disagree on channel count"));
        }
        if ox + pw > width || oy + ph > height {
            return Err(invalid(format!(
                "patch {pw}x{ph} at ({ox}, {oy}) exceeds {width}x{height}"
            )));
        }
        let wx: Vec<f64> = (0..pw).map(|i| hann(i, pw)).collect();
        for j in 0..ph {
            let wy = hann(j, ph);
            for (i, &wxi) in wx.iter().enumerate() {
                let w = wy * wxi;
                let dst = (oy + j) * width + ox + i;
                wsum[dst] += w;
                for c in 0..ch {
                    acc[dst * ch + c] += w * p.get(i, j, c).as_f64();
                }
            }
        }
    }
    if let Some(pos) = wsum.iter().position(|&w| w <= 0.0) {
        return Err(Error::Uncovered {
            x: pos % width,
            y: pos / width,
        });
    }
    let data = acc.iter().enumerate().map(|(k, &v)| T::lit(v / wsum[k / ch])).collect();
    Frame::new(width, height, ch, data)
}
