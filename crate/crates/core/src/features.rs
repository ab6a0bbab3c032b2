//! Deterministic multi-channel features and dense 3×3 block matching.
//!
//! The extractor is a fixed filter bank (intensity, gradients, Laplacian and
//! four oriented even Gabor filters) standardized per channel. Matching
//! compares every 3×3 block of the query map against every 3×3 block of the
//! reference map by cosine similarity.

use crate::error::{invalid, Result};
use crate::frames::Frame;
use crate::scalar::Real;

/// Channel count produced by [`extract_features`].
pub const FEATURE_CHANNELS: usize = 8;
/// Channels whose variance falls below this are zeroed.
pub const VARIANCE_FLOOR: f64 = 1e-8;
/// Smallest image side accepted by the extractor.
pub const MIN_FEATURE_SIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Query,
    Reference(usize),
}

/// Dense feature grid; `data[(y * width + x) * channels + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
    /// Image pixels per feature cell along each axis.
    pub stride: usize,
    pub source: FeatureSource,
}

impl<T: Real> FeatureMap<T> {
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copy with every value multiplied by `k`.
    pub fn scaled(&self, k: T) -> Self {
        Self {
            data: self.data.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }

    pub fn with_source(mut self, source: FeatureSource) -> Self {
        self.source = source;
        self
    }
}

fn gabor_kernel(theta: f64) -> [[f64; 5]; 5] {
    let sigma = 1.5;
    let wavelength = 4.0;
    let mut k = [[0.0; 5]; 5];
    let (s, c) = theta.sin_cos();
    for (j, row) in k.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            let (u, w) = (i as f64 - 2.0, j as f64 - 2.0);
            let along = u * c + w * s;
            *v = (-(u * u + w * w) / (2.0 * sigma * sigma)).exp()
                * (2.0 * std::f64::consts::PI * along / wavelength).cos();
        }
    }
    let mean = k.iter().flatten().sum::<f64>() / 25.0;
    k.iter_mut().flatten().for_each(|v| *v -= mean);
    let l1: f64 = k.iter().flatten().map(|v| v.abs()).sum();
    k.iter_mut().flatten().for_each(|v| *v /= l1);
    k
}

/// Unstandardized filter responses at full resolution, channel-planar.
fn raw_channels<T: Real>(luma: &Frame<T>) -> Vec<Vec<T>> {
    let (w, h) = luma.dims();
    let at = |x: isize, y: isize| luma.get_clamped(x, y, 0);
    let half = T::lit(0.5);
    let four = T::lit(4.0);
    let gabors: Vec<[[T; 5]; 5]> = [0.0, 45.0, 90.0, 135.0]
        .iter()
        .map(|deg: &f64| gabor_kernel(deg.to_radians()).map(|r| r.map(T::lit)))
        .collect();
    let mut planes = vec![Vec::with_capacity(w * h); FEATURE_CHANNELS];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(x, y);
            planes[0].push(c);
            planes[1].push((at(x + 1, y) - at(x - 1, y)) * half);
            planes[2].push((at(x, y + 1) - at(x, y - 1)) * half);
            planes[3].push(at(x + 1, y) + at(x - 1, y) + at(x, y + 1) + at(x, y - 1) - four * c);
            for (g, k) in gabors.iter().enumerate() {
                let mut acc = T::zero();
                for (j, row) in k.iter().enumerate() {
                    for (i, &kv) in row.iter().enumerate() {
                        acc = acc + kv * at(x + i as isize - 2, y + j as isize - 2);
                    }
                }
                planes[4 + g].push(acc);
            }
        }
    }
    planes
}

fn standardize<T: Real>(plane: &mut [T]) {
    let n = plane.len() as f64;
    let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = plane.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    if var < VARIANCE_FLOOR {
        plane.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let inv = 1.0 / var.sqrt();
    plane.iter_mut().for_each(|v| *v = T::lit((v.as_f64() - mean) * inv));
}

/// Filter-bank features at one cell per pixel.
pub fn extract_features<T: Real>(image: &Frame<T>) -> Result<FeatureMap<T>> {
    extract_features_strided(image, 1)
}

/// Filter-bank features averaged over `stride`×`stride` pixel cells. The map
/// is `width / stride` by `height / stride` (trailing pixels dropped).
pub fn extract_features_strided<T: Real>(image: &Frame<T>, stride: usize) -> Result<FeatureMap<T>> {
    let (w, h) = image.dims();
    if w < MIN_FEATURE_SIDE || h < MIN_FEATURE_SIDE {
        return Err(invalid(format!(
            "feature extraction needs at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE}, got {w}x{h}"
        )));
    }
    if stride == 0 || w / stride < 3 || h / stride < 3 {
        return Err(invalid(format!("stride {stride} leaves fewer than 3x3 cells")));
    }
    let mut planes = raw_channels(&image.luma());
    let (fw, fh) = (w / stride, h / stride);
    if stride > 1 {
        let inv = T::lit(1.0 / (stride * stride) as f64);
        for plane in planes.iter_mut() {
            let mut pooled = Vec::with_capacity(fw * fh);
            for cy in 0..fh {
                for cx in 0..fw {
                    let mut acc = T::zero();
                    for y in cy * stride..(cy + 1) * stride {
                        for x in cx * stride..(cx + 1) * stride {
                            acc = acc + plane[y * w + x];
                        }
                    }
                    pooled.push(acc * inv);
                }
            }
            *plane = pooled;
        }
    }
    planes.iter_mut().for_each(|p| standardize(p));
    let mut data = Vec::with_capacity(fw * fh * FEATURE_CHANNELS);
    for i in 0..fw * fh {
        data.extend(planes.iter().map(|p| p[i]));
    }
    Ok(FeatureMap {
        width: fw,
        height: fh,
        channels: FEATURE_CHANNELS,
        data,
        stride,
        source: FeatureSource::Query,
    })
}

/// Per-block best match of a query map against a reference map.
///
/// Block `g` is centered at query cell `(g % width + 1, g / width + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchMaps<T> {
    /// Block-grid dimensions: query map size minus 2 on each axis.
    pub width: usize,
    pub height: usize,
    /// Best cosine similarity per query block.
    pub similarity: Vec<T>,
    /// Squared distance between matched block centers over the squared map
    /// diagonal.
    pub distance: Vec<T>,
    /// Matched reference block centers, in reference cells.
    pub correspondences: Vec<(usize, usize)>,
}

impl<T: Real> MatchMaps<T> {
    #[inline]
    pub fn query_center(&self, g: usize) -> (usize, usize) {
        (g % self.width + 1, g / self.width + 1)
    }

    pub fn mean_distance(&self) -> f64 {
        self.distance.iter().map(|v| v.as_f64()).sum::<f64>() / self.distance.len() as f64
    }

    pub fn mean_similarity(&self) -> f64 {
        self.similarity.iter().map(|v| v.as_f64()).sum::<f64>() / self.similarity.len() as f64
    }

    /// `(query center, reference center)` pairs in cell units.
    pub fn pairs(&self) -> Vec<([T; 2], [T; 2])> {
        self.correspondences
            .iter()
            .enumerate()
            .map(|(g, &(hx, hy))| {
                let (gx, gy) = self.query_center(g);
                (
                    [T::from_usize_lossy(gx), T::from_usize_lossy(gy)],
                    [T::from_usize_lossy(hx), T::from_usize_lossy(hy)],
                )
            })
            .collect()
    }
}

/// Squared diagonal of a `w`×`h` cell grid.
#[inline]
pub fn diagonal_sq(w: usize, h: usize) -> f64 {
    let (a, b) = (w.saturating_sub(1) as f64, h.saturating_sub(1) as f64);
    (a * a + b * b).max(1.0)
}

/// Unit-normalized 3×3 block vector centered at `(x, y)`, ordered
/// `(dy, dx, channel)`. All-zero blocks stay zero.
pub fn block_vector<T: Real>(map: &FeatureMap<T>, x: usize, y: usize) -> Vec<T> {
    let c = map.channels;
    let mut v = Vec::with_capacity(9 * c);
    for yy in y - 1..=y + 1 {
        let start = (yy * map.width + x - 1) * c;
        v.extend_from_slice(&map.data[start..start + 3 * c]);
    }
    let mut sq = T::zero();
    for &e in &v {
        sq = sq + e * e;
    }
    let norm = sq.sqrt();
    if norm > T::zero() {
        v.iter_mut().for_each(|e| *e = *e / norm);
    }
    v
}

fn check_pair<T: Real>(query: &FeatureMap<T>, reference: &FeatureMap<T>) -> Result<()> {
    if query.channels != reference.channels {
        return Err(invalid(format!(
            "channel mismatch: query {} vs reference {}",
            query.channels, reference.channels
        )));
    }
    if reference.width < 3 || reference.height < 3 || query.width < 3 || query.height < 3 {
        return Err(invalid("feature maps must be at least 3x3 cells"));
    }
    Ok(())
}

/// Dense exhaustive block matching.
pub fn match_blocks<T: Real>(query: &FeatureMap<T>, reference: &FeatureMap<T>) -> Result<MatchMaps<T>> {
    check_pair(query, reference)?;
    let dim = 9 * query.channels;
    let (rbw, rbh) = (reference.width - 2, reference.height - 2);
    let nref = rbw * rbh;
    // Dimension-major reference blocks so each query block scores all
    // references with one vectorizable pass per dimension.
    let mut ref_t = vec![T::zero(); dim * nref];
    for by in 0..rbh {
        for bx in 0..rbw {
            let h = by * rbw + bx;
            for (d, v) in block_vector(reference, bx + 1, by + 1).into_iter().enumerate() {
                ref_t[d * nref + h] = v;
            }
        }
    }
    let (qbw, qbh) = (query.width - 2, query.height - 2);
    let diag2 = T::lit(diagonal_sq(query.width, query.height));
    let mut similarity = Vec::with_capacity(qbw * qbh);
    let mut distance = Vec::with_capacity(qbw * qbh);
    let mut correspondences = Vec::with_capacity(qbw * qbh);
    let mut acc = vec![T::zero(); nref];
    for gy in 0..qbh {
        for gx in 0..qbw {
            let q = block_vector(query, gx + 1, gy + 1);
            acc.iter_mut().for_each(|a| *a = T::zero());
            for (d, &qd) in q.iter().enumerate() {
                let row = &ref_t[d * nref..(d + 1) * nref];
                for (a, &r) in acc.iter_mut().zip(row) {
                    *a = *a + qd * r;
                }
            }
            let mut best = 0;
            for (h, &s) in acc.iter().enumerate() {
                if s > acc[best] {
                    best = h;
                }
            }
            let (hx, hy) = (best % rbw + 1, best / rbw + 1);
            let dx = T::from_usize_lossy(gx + 1) - T::from_usize_lossy(hx);
            let dy = T::from_usize_lossy(gy + 1) - T::from_usize_lossy(hy);
            similarity.push(acc[best]);
            distance.push((dx * dx + dy * dy) / diag2);
            correspondences.push((hx, hy));
        }
    }
    Ok(MatchMaps {
        width: qbw,
        height: qbh,
        similarity,
        distance,
        correspondences,
    })
}

/// Sub-cell reference positions: a parabola through the similarities of the
/// matched block and its axial neighbours locates the peak along each axis.
/// Offsets are limited to ±0.5 cell; border matches are left unrefined.
pub fn refine_correspondences<T: Real>(
    query: &FeatureMap<T>,
    reference: &FeatureMap<T>,
    maps: &MatchMaps<T>,
) -> Result<Vec<[T; 2]>> {
    check_pair(query, reference)?;
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let half = T::lit(0.5);
    let vertex = |minus: T, mid: T, plus: T| {
        let curv = minus - mid - mid + plus;
        if curv < T::zero() {
            ((minus - plus) / (curv + curv)).max(-half).min(half)
        } else {
            T::zero()
        }
    };
    Ok(maps
        .correspondences
        .iter()
        .enumerate()
        .map(|(g, &(hx, hy))| {
            let (gx, gy) = maps.query_center(g);
            let q = block_vector(query, gx, gy);
            let s0 = maps.similarity[g];
            let s = |x: usize, y: usize| dot(&q, &block_vector(reference, x, y));
            let fx = if hx > 1 && hx + 2 < reference.width {
                vertex(s(hx - 1, hy), s0, s(hx + 1, hy))
            } else {
                T::zero()
            };
            let fy = if hy > 1 && hy + 2 < reference.height {
                vertex(s(hx, hy - 1), s0, s(hx, hy + 1))
            } else {
                T::zero()
            };
            [T::from_usize_lossy(hx) + fx, T::from_usize_lossy(hy) + fy]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> Frame<f64> {
        Frame::from_fn(w, h, 1, |x, y, _| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (0.7 * x + 0.3 * y).sin() + 0.15 * (0.45 * y - 0.2 * x * x / 9.0).cos()
        })
    }

    #[test]
    fn constant_image_gives_zero_features() {
        let f = Frame::<f32>::filled(12, 10, 3, 0.3);
        let m = extract_features(&f).unwrap();
        assert_eq!((m.width, m.height, m.channels), (12, 10, 8));
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_small_rejected() {
        assert!(extract_features(&Frame::<f32>::filled(7, 12, 1, 0.3)).is_err());
        assert!(extract_features_strided(&Frame::<f32>::filled(16, 16, 1, 0.3), 6).is_err());
    }

    #[test]
    fn strided_dims() {
        let m = extract_features_strided(&texture(37, 29), 4).unwrap();
        assert_eq!((m.width, m.height, m.stride), (9, 7, 4));
    }

    #[test]
    fn kernels_are_zero_mean() {
        for deg in [0.0f64, 45.0, 90.0, 135.0] {
            let k = gabor_kernel(deg.to_radians());
            assert!(k.iter().flatten().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn self_match_is_identity() {
        let m = extract_features(&texture(24, 20)).unwrap();
        let r = match_blocks(&m, &m).unwrap();
        assert!(r.similarity.iter().all(|&s| s >= 0.999));
        assert!(r.mean_distance() <= 1e-6);
        let refined = refine_correspondences(&m, &m, &r).unwrap();
        let mut total = 0.0;
        for (g, p) in refined.iter().enumerate() {
            let (x, y) = r.query_center(g);
            let (ex, ey) = ((p[0] - x as f64).abs(), (p[1] - y as f64).abs());
            assert!(ex <= 0.25 && ey <= 0.25);
            total += ex + ey;
        }
        assert!(total / (2.0 * refined.len() as f64) < 0.1);
    }

    #[test]
    fn channel_mismatch() {
        let m = extract_features(&texture(16, 16)).unwrap();
        let mut n = m.clone();
        n.channels = 4;
        n.data.truncate(16 * 16 * 4);
        assert!(match_blocks(&m, &n).is_err());
    }
}
