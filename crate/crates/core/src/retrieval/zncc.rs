//! Zero-normalized cross-correlation template search.

use crate::error::{invalid, Result};
use crate::frames::{resample_bicubic, Frame};
use crate::scalar::Real;

/// Windows whose sample variance is below this are scored 0.
const VARIANCE_EPS: f64 = 1e-10;

/// Single-channel image with summed-area tables of values and squares.
#[derive(Clone, Debug)]
pub struct SearchImage<T> {
    pub(crate) image: Frame<T>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl<T: Real> SearchImage<T> {
    pub fn image(&self) -> &Frame<T> {
        &self.image
    }

    /// `image` must be single-channel.
    pub fn new(image: Frame<T>) -> Self {
        debug_assert_eq!(image.channels(), 1);
        let (w, h) = image.dims();
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sum_sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            let mut row_sq = 0.0;
            for x in 0..w {
                let v = image.get(x, y, 0).as_f64();
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        Self { image, sum, sum_sq }
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub(crate) fn bytes(&self) -> usize {
        self.image.data().len() * std::mem::size_of::<T>() + (self.sum.len() + self.sum_sq.len()) * 8
    }

    /// Sum of squared deviations from the mean over a `w`×`h` window.
    #[inline]
    fn window_energy(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.width() + 1;
        let rect = |t: &[f64]| t[(y + h) * s + x + w] - t[y * s + x + w] - t[(y + h) * s + x] + t[y * s + x];
        let n = (w * h) as f64;
        let sum = rect(&self.sum);
        (rect(&self.sum_sq) - sum * sum / n).max(0.0)
    }
}

/// Mean-free template with its norm.
#[derive(Clone, Debug)]
pub struct PreparedQuery<T> {
    width: usize,
    height: usize,
    centered: Vec<T>,
    norm: f64,
}

impl<T: Real> PreparedQuery<T> {
    pub fn new(query: &Frame<T>) -> Self {
        let q = query.luma();
        let n = q.data().len() as f64;
        let mean = q.data().iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let centered: Vec<T> = q.data().iter().map(|v| T::lit(v.as_f64() - mean)).collect();
        let energy: f64 = q.data().iter().map(|v| (v.as_f64() - mean).powi(2)).sum();
        Self {
            width: q.width(),
            height: q.height(),
            centered,
            norm: if energy / n > VARIANCE_EPS { energy.sqrt() } else { 0.0 },
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Best-scoring placement of a template.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit<T> {
    pub x: usize,
    pub y: usize,
    pub score: T,
}

/// Axis-aligned set of admissible top-left positions (inclusive bounds) with
/// an optional excluded box of window centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub exclude: Option<Exclusion>,
}

/// Rejects window placements whose center lies strictly within `radius`
/// (Chebyshev) of `center`. Coordinates are doubled to stay integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exclusion {
    pub center2: (i64, i64),
    pub radius2: i64,
    pub window: (usize, usize),
}

impl Exclusion {
    #[inline]
    fn rejects(&self, x: usize, y: usize) -> bool {
        let cx = 2 * x as i64 + self.window.0 as i64;
        let cy = 2 * y as i64 + self.window.1 as i64;
        (cx - self.center2.0).abs() < self.radius2 && (cy - self.center2.1).abs() < self.radius2
    }
}

impl Region {
    /// Number of placements, exclusions included.
    pub fn positions(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }

    /// Every placement of a `qw`×`qh` template inside a `w`×`h` image.
    pub fn full(w: usize, h: usize, qw: usize, qh: usize) -> Option<Self> {
        (qw <= w && qh <= h).then_some(Self {
            x0: 0,
            x1: w - qw,
            y0: 0,
            y1: h - qh,
            exclude: None,
        })
    }

    fn intersect(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> Option<Self> {
        let r = Self {
            x0: self.x0.max(x0),
            x1: self.x1.min(x1),
            y0: self.y0.max(y0),
            y1: self.y1.min(y1),
            exclude: self.exclude,
        };
        (r.x0 <= r.x1 && r.y0 <= r.y1).then_some(r)
    }
}

/// ZNCC at every admissible position; calls `visit(x, y, score)` in raster
/// order.
/// Regions at most this wide are scored one placement at a time, which
/// keeps the inner loop long enough to vectorize.
const NARROW_SPAN: usize = 32;

/// Dot product with eight independent partial sums.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] = lanes[k] + xa[k] * xb[k];
        }
    }
    let half = [
        lanes[0] + lanes[4],
        lanes[1] + lanes[5],
        lanes[2] + lanes[6],
        lanes[3] + lanes[7],
    ];
    (half[0] + half[2]) + (half[1] + half[3]) + tail
}

fn scan<T: Real>(
    img: &SearchImage<T>,
    q: &PreparedQuery<T>,
    region: &Region,
    exclusion_scale: usize,
    mut visit: impl FnMut(usize, usize, T),
) {
    let w = img.width();
    let data = img.image.data();
    let span = region.x1 - region.x0 + 1;
    let mut acc = vec![T::zero(); span];
    for y in region.y0..=region.y1 {
        if q.norm > 0.0 && span <= NARROW_SPAN {
            for (i, a) in acc.iter_mut().enumerate() {
                let x = region.x0 + i;
                *a = (0..q.height).fold(T::zero(), |sum, ty| {
                    let start = (y + ty) * w + x;
                    sum + dot(
                        &q.centered[ty * q.width..(ty + 1) * q.width],
                        &data[start..start + q.width],
                    )
                });
            }
        } else if q.norm > 0.0 {
            acc.iter_mut().for_each(|a| *a = T::zero());
            for ty in 0..q.height {
                let row = &data[(y + ty) * w..(y + ty + 1) * w];
                let qrow = &q.centered[ty * q.width..(ty + 1) * q.width];
                for (tx, &qv) in qrow.iter().enumerate() {
                    let src = &row[region.x0 + tx..region.x0 + tx + span];
                    for (a, &s) in acc.iter_mut().zip(src) {
                        *a = *a + qv * s;
                    }
                }
            }
        }
        for (i, &num) in acc.iter().enumerate() {
            let x = region.x0 + i;
            if let Some(ex) = &region.exclude {
                if ex.rejects(x * exclusion_scale, y * exclusion_scale) {
                    continue;
                }
            }
            let score = if q.norm > 0.0 {
                let energy = img.window_energy(x, y, q.width, q.height);
                if energy / ((q.width * q.height) as f64) > VARIANCE_EPS {
                    (num.as_f64() / (q.norm * energy.sqrt())).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            visit(x, y, T::lit(score));
        }
    }
}

/// Exhaustive best placement inside `region`; ties resolve to the smallest
/// `(y, x)`.
pub fn best_in_region<T: Real>(img: &SearchImage<T>, q: &PreparedQuery<T>, region: &Region) -> Option<Hit<T>> {
    let mut best: Option<Hit<T>> = None;
    scan(img, q, region, 1, |x, y, score| {
        if best.is_none_or(|b| score > b.score) {
            best = Some(Hit { x, y, score });
        }
    });
    best
}

/// Exhaustive template match of `query` over `target` (luma of both).
pub fn template_match<T: Real>(query: &Frame<T>, target: &Frame<T>) -> Result<Hit<T>> {
    if query.width() > target.width() || query.height() > target.height() {
        return Err(invalid(format!(
            "query {}x{} larger than target {}x{}",
            query.width(),
            query.height(),
            target.width(),
            target.height()
        )));
    }
    let img = SearchImage::new(target.luma());
    let q = PreparedQuery::new(query);
    let region = Region::full(img.width(), img.height(), q.width, q.height).expect("query fits");
    Ok(best_in_region(&img, &q, &region).expect("non-empty region"))
}

/// Full-resolution search image plus an optional reduced copy.
#[derive(Clone, Debug)]
pub struct SearchLevels<T> {
    pub full: SearchImage<T>,
    pub coarse: Option<SearchImage<T>>,
    pub factor: usize,
}

/// Coarse peaks always refined at full resolution.
const COARSE_PEAKS: usize = 4;
/// Further peaks scoring within this margin of the best coarse score are
/// refined too, as long as the full-resolution work stays below the cost of
/// the coarse scan itself. Weak, flat score surfaces are where the coarse
/// ranking is least reliable.
const COARSE_MARGIN: f64 = 0.3;
const MAX_COARSE_PEAKS: usize = 32;
/// Queries whose reduced copy would be narrower than this are searched at
/// full resolution only; a few coarse pixels cannot rank placements.
const MIN_COARSE_SIDE: usize = 8;

impl<T: Real> SearchLevels<T> {
    /// `image` must be single-channel; `factor` 1 disables the coarse level.
    pub fn new(image: Frame<T>, factor: usize) -> Self {
        let coarse = (factor > 1)
            .then(|| SearchImage::new(resample_bicubic(&image, 1.0 / factor as f64).expect("positive factor")));
        Self {
            full: SearchImage::new(image),
            coarse,
            factor: factor.max(1),
        }
    }

    pub(crate) fn bytes(&self) -> usize {
        self.full.bytes() + self.coarse.as_ref().map_or(0, |c| c.bytes())
    }

    /// Coarse-to-fine search: scan the reduced level, then rescan a
    /// ±`factor` full-resolution window around the best coarse peaks.
    pub fn search(&self, query: &Frame<T>, region: &Region) -> Option<Hit<T>> {
        let full_q = PreparedQuery::new(query);
        let f = self.factor;
        let Some(coarse) = &self.coarse else {
            return best_in_region(&self.full, &full_q, region);
        };
        if query.width().min(query.height()) < MIN_COARSE_SIDE * f {
            return best_in_region(&self.full, &full_q, region);
        }
        let cq = resample_bicubic(&query.luma(), 1.0 / f as f64).expect("positive factor");
        let cq = PreparedQuery::new(&cq);
        let Some(cregion) = Region::full(coarse.width(), coarse.height(), cq.width, cq.height).and_then(|r| {
            r.intersect(
                region.x0 / f,
                region.x1.div_ceil(f),
                region.y0 / f,
                region.y1.div_ceil(f),
            )
        }) else {
            return best_in_region(&self.full, &full_q, region);
        };

        let mut peaks: Vec<Hit<T>> = Vec::new();
        scan(coarse, &cq, &cregion, f, |x, y, score| {
            peaks.push(Hit { x, y, score });
        });
        if peaks.is_empty() {
            return best_in_region(&self.full, &full_q, region);
        }
        // Stable sort keeps raster order among equal scores.
        peaks.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        let top = peaks[0].score.as_f64();
        let floor = top - COARSE_MARGIN * (1.0 - top);
        let mut kept: Vec<Hit<T>> = Vec::with_capacity(COARSE_PEAKS);
        for p in peaks {
            if kept.len() >= COARSE_PEAKS && p.score.as_f64() < floor {
                break;
            }
            if kept.iter().all(|k| k.x.abs_diff(p.x) > 1 || k.y.abs_diff(p.y) > 1) {
                kept.push(p);
                if kept.len() == MAX_COARSE_PEAKS {
                    break;
                }
            }
        }

        let mut best: Option<Hit<T>> = None;
        for p in kept {
            let (cx, cy) = (p.x * f, p.y * f);
            let Some(win) = region.intersect(cx.saturating_sub(f), cx + f, cy.saturating_sub(f), cy + f) else {
                continue;
            };
            if let Some(h) = best_in_region(&self.full, &full_q, &win) {
                let better = match best {
                    None => true,
                    Some(b) => h.score > b.score || (h.score == b.score && (h.y, h.x) < (b.y, b.x)),
                };
                if better {
                    best = Some(h);
                }
            }
        }
        best.or_else(|| best_in_region(&self.full, &full_q, region))
    }
}

/// Coarse-to-fine template match of `query` over `target` with a reduction
/// `factor`.
pub fn template_match_pyramid<T: Real>(query: &Frame<T>, target: &Frame<T>, factor: usize) -> Result<Hit<T>> {
    if query.width() > target.width() || query.height() > target.height() {
        return Err(invalid("query larger than target"));
    }
    let levels = SearchLevels::new(target.luma(), factor);
    let region = Region::full(target.width(), target.height(), query.width(), query.height()).expect("fits");
    Ok(levels.search(query, &region).expect("non-empty region"))
}
