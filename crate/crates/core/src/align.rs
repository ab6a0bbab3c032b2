//! Affine alignment of reference exemplars: RANSAC fit over block
//! correspondences and inverse-mapped resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::features::FeatureMap;
use crate::frames::{sample_bicubic, Frame};
use crate::scalar::Real;

/// Smallest admissible |det| of the linear part.
pub const MIN_DET: f64 = 1e-6;

/// `T(x, y) = (a11·x + a12·y + tx, a21·x + a22·y + ty)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams<T> {
    pub a11: T,
    pub a12: T,
    pub a21: T,
    pub a22: T,
    pub tx: T,
    pub ty: T,
}

impl<T: Real> AffineParams<T> {
    pub fn identity() -> Self {
        Self::translation(T::zero(), T::zero())
    }

    pub fn translation(tx: T, ty: T) -> Self {
        Self {
            a11: T::one(),
            a12: T::zero(),
            a21: T::zero(),
            a22: T::one(),
            tx,
            ty,
        }
    }

    /// Rotation by `angle` radians and isotropic `scale`, then translation.
    pub fn similarity(angle: f64, scale: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            a11: T::lit(scale * c),
            a12: T::lit(-scale * s),
            a21: T::lit(scale * s),
            a22: T::lit(scale * c),
            tx: T::lit(tx),
            ty: T::lit(ty),
        }
    }

    #[inline]
    pub fn apply(&self, x: T, y: T) -> (T, T) {
        (
            self.a11 * x + self.a12 * y + self.tx,
            self.a21 * x + self.a22 * y + self.ty,
        )
    }

    pub fn det(&self) -> T {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a11, self.a12, self.a21, self.a22, self.tx, self.ty];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite affine parameter"));
        }
        if self.det().abs().as_f64() <= MIN_DET {
            return Err(invalid(format!("degenerate affine, det = {}", self.det())));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.validate()?;
        let d = self.det();
        let a11 = self.a22 / d;
        let a12 = -self.a12 / d;
        let a21 = -self.a21 / d;
        let a22 = self.a11 / d;
        Ok(Self {
            a11,
            a12,
            a21,
            a22,
            tx: -(a11 * self.tx + a12 * self.ty),
            ty: -(a21 * self.tx + a22 * self.ty),
        })
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Self) -> Self {
        Self {
            a11: self.a11 * inner.a11 + self.a12 * inner.a21,
            a12: self.a11 * inner.a12 + self.a12 * inner.a22,
            a21: self.a21 * inner.a11 + self.a22 * inner.a21,
            a22: self.a21 * inner.a12 + self.a22 * inner.a22,
            tx: self.a11 * inner.tx + self.a12 * inner.ty + self.tx,
            ty: self.a21 * inner.tx + self.a22 * inner.ty + self.ty,
        }
    }

    pub fn cast<U: Real>(&self) -> AffineParams<U> {
        AffineParams {
            a11: U::lit(self.a11.as_f64()),
            a12: U::lit(self.a12.as_f64()),
            a21: U::lit(self.a21.as_f64()),
            a22: U::lit(self.a22.as_f64()),
            tx: U::lit(self.tx.as_f64()),
            ty: U::lit(self.ty.as_f64()),
        }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        [
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
            self.tx - o.tx,
            self.ty - o.ty,
        ]
        .iter()
        .map(|v| v.abs().as_f64())
        .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier gate on ‖query − T(reference)‖, in correspondence units.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// Set per call by the pipeline; not part of configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 1.5,
            min_inliers: 8,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("ransac iterations must be >= 1"));
        }
        if self.min_inliers < 3 {
            return Err(invalid("ransac min_inliers must be >= 3"));
        }
        if !(self.inlier_threshold.is_finite() && self.inlier_threshold > 0.0) {
            return Err(invalid("ransac inlier_threshold must be positive"));
        }
        Ok(())
    }
}

/// A `(query point, reference point)` pair; the model maps reference to query.
pub type Correspondence<T> = ([T; 2], [T; 2]);

#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit<T> {
    pub params: AffineParams<T>,
    pub inliers: Vec<bool>,
}

impl<T> AffineFit<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }

    pub fn inlier_fraction(&self) -> f64 {
        self.inlier_count() as f64 / self.inliers.len().max(1) as f64
    }
}

type P64 = [[f64; 2]; 2];

/// Solves `m·x = b` by Gaussian elimination with partial pivoting; `None`
/// when the system is numerically singular.
pub(crate) fn solve_linear<const N: usize>(mut m: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for col in 0..N {
        let piv = (col..N).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            for k in col..N {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

fn model_from(rows: [[f64; 3]; 2]) -> AffineParams<f64> {
    AffineParams {
        a11: rows[0][0],
        a12: rows[0][1],
        tx: rows[0][2],
        a21: rows[1][0],
        a22: rows[1][1],
        ty: rows[1][2],
    }
}

/// Least-squares affine over `pairs` (centered for conditioning).
fn least_squares(pairs: &[P64]) -> Option<AffineParams<f64>> {
    let n = pairs.len() as f64;
    let mut cq = [0.0; 2];
    let mut cr = [0.0; 2];
    for [q, r] in pairs {
        for k in 0..2 {
            cq[k] += q[k] / n;
            cr[k] += r[k] / n;
        }
    }
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [[0.0; 3]; 2];
    for [q, r] in pairs {
        let row = [r[0] - cr[0], r[1] - cr[1], 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            for k in 0..2 {
                atb[k][i] += row[i] * (q[k] - cq[k]);
            }
        }
    }
    let x = solve_linear(ata, atb[0])?;
    let y = solve_linear(ata, atb[1])?;
    // Undo the centering: q = A (r − cr) + t' + cq.
    let tx = x[2] + cq[0] - x[0] * cr[0] - x[1] * cr[1];
    let ty = y[2] + cq[1] - y[0] * cr[0] - y[1] * cr[1];
    let m = model_from([[x[0], x[1], tx], [y[0], y[1], ty]]);
    m.validate().ok().map(|_| m)
}

fn residual(m: &AffineParams<f64>, [q, r]: &P64) -> f64 {
    let (x, y) = m.apply(r[0], r[1]);
    ((q[0] - x).powi(2) + (q[1] - y).powi(2)).sqrt()
}

/// Seeded RANSAC over minimal 3-point samples, followed by a least-squares
/// refit on the consensus set of the best sample model.
pub fn fit_affine_ransac<T: Real>(pairs: &[Correspondence<T>], cfg: &RansacConfig) -> Result<AffineFit<T>> {
    cfg.validate()?;
    let n = pairs.len();
    if n < 3 {
        return Err(Error::NoModel(format!("{n} correspondences, need 3")));
    }
    let pts: Vec<P64> = pairs
        .iter()
        .map(|(q, r)| [[q[0].as_f64(), q[1].as_f64()], [r[0].as_f64(), r[1].as_f64()]])
        .collect();
    let extent = pts
        .iter()
        .flat_map(|[_, r]| r.iter().map(|v| v.abs()))
        .fold(1.0f64, f64::max);
    let min_area = 1e-9 * extent * extent;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, AffineParams<f64>)> = None;
    for _ in 0..cfg.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let (a, b, c) = (pts[i], pts[j], pts[k]);
        let (u, v) = (
            [b[1][0] - a[1][0], b[1][1] - a[1][1]],
            [c[1][0] - a[1][0], c[1][1] - a[1][1]],
        );
        if (u[0] * v[1] - u[1] * v[0]).abs() <= min_area {
            continue;
        }
        let m = [
            [a[1][0], a[1][1], 1.0],
            [b[1][0], b[1][1], 1.0],
            [c[1][0], c[1][1], 1.0],
        ];
        let (Some(x), Some(y)) = (
            solve_linear(m, [a[0][0], b[0][0], c[0][0]]),
            solve_linear(m, [a[0][1], b[0][1], c[0][1]]),
        ) else {
            continue;
        };
        let model = model_from([x, y]);
        if model.validate().is_err() {
            continue;
        }
        let count = pts
            .iter()
            .filter(|p| residual(&model, p) <= cfg.inlier_threshold)
            .count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, model));
        }
    }
    let Some((count, model)) = best else {
        return Err(Error::NoModel("every sample was collinear".into()));
    };
    if count < cfg.min_inliers {
        return Err(Error::NoModel(format!(
            "best consensus {count} below min_inliers {}",
            cfg.min_inliers
        )));
    }
    let consensus: Vec<P64> = pts
        .iter()
        .copied()
        .filter(|p| residual(&model, p) <= cfg.inlier_threshold)
        .collect();
    let refit = least_squares(&consensus).unwrap_or(model);
    let inliers = pts
        .iter()
        .map(|p| residual(&refit, p) <= cfg.inlier_threshold)
        .collect();
    Ok(AffineFit {
        params: refit.cast(),
        inliers,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Pure translation by the per-axis median offset; identity without pairs.
pub fn median_translation<T: Real>(pairs: &[Correspondence<T>]) -> AffineParams<T> {
    if pairs.is_empty() {
        return AffineParams::identity();
    }
    let mut dx: Vec<f64> = pairs.iter().map(|(q, r)| (q[0] - r[0]).as_f64()).collect();
    let mut dy: Vec<f64> = pairs.iter().map(|(q, r)| (q[1] - r[1]).as_f64()).collect();
    let t = AffineParams::translation(T::lit(median(&mut dx)), T::lit(median(&mut dy)));
    if t.validate().is_ok() {
        t
    } else {
        AffineParams::identity()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignmentSource {
    Ransac,
    MedianTranslation,
}

/// RANSAC with the median-translation fallback; never fails.
pub fn fit_or_fallback<T: Real>(pairs: &[Correspondence<T>], cfg: &RansacConfig) -> (AffineFit<T>, AlignmentSource) {
    match fit_affine_ransac(pairs, cfg) {
        Ok(fit) => (fit, AlignmentSource::Ransac),
        Err(e) => {
            log::debug!("ransac fallback: {e}");
            let params = median_translation(pairs);
            let inliers = pairs
                .iter()
                .map(|(q, r)| {
                    let (x, y) = params.apply(r[0], r[1]);
                    let d = ((q[0] - x).powi(2) + (q[1] - y).powi(2)).sqrt();
                    d.as_f64() <= cfg.inlier_threshold
                })
                .collect();
            (AffineFit { params, inliers }, AlignmentSource::MedianTranslation)
        }
    }
}

/// Multi-channel sample grid that can be resampled.
pub trait Raster<T: Real>: Sized {
    fn raster_dims(&self) -> (usize, usize);
    fn raster_channels(&self) -> usize;
    fn raster_at(&self, x: usize, y: usize, c: usize) -> T;
    /// A raster of the same kind as `self` holding `data`.
    fn like(&self, width: usize, height: usize, data: Vec<T>) -> Self;
}

impl<T: Real> Raster<T> for Frame<T> {
    fn raster_dims(&self) -> (usize, usize) {
        self.dims()
    }
    fn raster_channels(&self) -> usize {
        self.channels()
    }
    fn raster_at(&self, x: usize, y: usize, c: usize) -> T {
        self.get(x, y, c)
    }
    fn like(&self, width: usize, height: usize, data: Vec<T>) -> Self {
        Frame::new(width, height, self.channels(), data)
            .expect("consistent raster")
            .with_index(self.index)
    }
}

impl<T: Real> Raster<T> for FeatureMap<T> {
    fn raster_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    fn raster_channels(&self) -> usize {
        self.channels
    }
    fn raster_at(&self, x: usize, y: usize, c: usize) -> T {
        self.get(x, y, c)
    }
    fn like(&self, width: usize, height: usize, data: Vec<T>) -> Self {
        FeatureMap {
            width,
            height,
            data,
            ..self.clone()
        }
    }
}

/// Resampled raster with its 0/1 validity mask (1 where the source point
/// fell inside the source grid).
#[derive(Clone, Debug, PartialEq)]
pub struct Warped<R, T> {
    pub image: R,
    pub valid: Frame<T>,
}

fn inside<T: Real>(x: T, y: T, w: usize, h: usize) -> bool {
    let tol = T::lit(1e-6);
    x >= -tol && y >= -tol && x <= T::from_usize_lossy(w - 1) + tol && y <= T::from_usize_lossy(h - 1) + tol
}

/// Bilinear inverse-mapped warp onto a grid of the source's size: output
/// `(x, y)` samples the source at `params⁻¹(x, y)`.
pub fn warp<T: Real, R: Raster<T>>(src: &R, params: &AffineParams<T>) -> Result<Warped<R, T>> {
    let (w, h) = src.raster_dims();
    warp_to(src, params, w, h)
}

/// [`warp`] onto an explicit `out_w`×`out_h` grid.
pub fn warp_to<T: Real, R: Raster<T>>(
    src: &R,
    params: &AffineParams<T>,
    out_w: usize,
    out_h: usize,
) -> Result<Warped<R, T>> {
    let inv = params.inverse()?;
    let (w, h) = src.raster_dims();
    let ch = src.raster_channels();
    let at = |x: isize, y: isize, c: usize| {
        src.raster_at(
            x.clamp(0, w as isize - 1) as usize,
            y.clamp(0, h as isize - 1) as usize,
            c,
        )
    };
    // a + f·(b − a) returns a exactly when a == b, so flat regions survive.
    let lerp = |a: T, b: T, f: T| a + f * (b - a);
    let mut data = Vec::with_capacity(out_w * out_h * ch);
    let mut valid = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(T::from_usize_lossy(x), T::from_usize_lossy(y));
            valid.push(if inside(sx, sy, w, h) { T::one() } else { T::zero() });
            let (xf, yf) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - xf, sy - yf);
            let (x0, y0) = (xf.to_isize().unwrap_or(0), yf.to_isize().unwrap_or(0));
            for c in 0..ch {
                let top = lerp(at(x0, y0, c), at(x0 + 1, y0, c), fx);
                let bottom = lerp(at(x0, y0 + 1, c), at(x0 + 1, y0 + 1, c), fx);
                data.push(lerp(top, bottom, fy));
            }
        }
    }
    Ok(Warped {
        image: src.like(out_w, out_h, data),
        valid: Frame::new(out_w, out_h, 1, valid)?,
    })
}

/// Interpolation kernel for [`warp_frame`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    Bicubic,
}

/// Inverse-mapped warp of an image onto an `out_w`×`out_h` grid with the
/// chosen kernel; samples are clamped to [0, 1].
pub fn warp_frame<T: Real>(
    src: &Frame<T>,
    params: &AffineParams<T>,
    out_w: usize,
    out_h: usize,
    interpolation: Interpolation,
) -> Result<Warped<Frame<T>, T>> {
    if interpolation == Interpolation::Bilinear {
        return warp_to(src, params, out_w, out_h);
    }
    let inv = params.inverse()?;
    let (w, h) = src.dims();
    let ch = src.channels();
    let mut data = vec![T::zero(); out_w * out_h * ch];
    let mut valid = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = inv.apply(T::from_usize_lossy(x), T::from_usize_lossy(y));
            valid.push(if inside(sx, sy, w, h) { T::one() } else { T::zero() });
            let px = &mut data[(y * out_w + x) * ch..(y * out_w + x + 1) * ch];
            sample_bicubic(src, sx, sy, px);
            px.iter_mut().for_each(|v| *v = v.clamp01());
        }
    }
    Ok(Warped {
        image: Frame::new(out_w, out_h, ch, data)?.with_index(src.index),
        valid: Frame::new(out_w, out_h, 1, valid)?,
    })
}
