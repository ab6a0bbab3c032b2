//! Test fixtures and brute-force reference implementations.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selfx::features::{diagonal_sq, FeatureMap, FeatureSource, MatchMaps};
use selfx::frames::{resize_bicubic, Frame};
use selfx::Real;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform noise in [0, 1].
pub fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Frame<f64> {
    Frame::from_fn(w, h, ch, |_, _, _| rng.random::<f64>())
}

/// Smooth random texture with some fine detail, values kept inside (0, 1).
pub fn texture(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Frame<f64> {
    let coarse = noise(rng, w.div_ceil(4).max(2), h.div_ceil(4).max(2), ch);
    let smooth = resize_bicubic(&coarse, w, h).unwrap();
    let fine = noise(rng, w, h, ch);
    smooth.zip_map(&fine, |a, b| 0.1 + 0.6 * a + 0.3 * b)
}

pub fn random_features(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> FeatureMap<f64> {
    FeatureMap {
        width: w,
        height: h,
        channels: ch,
        data: (0..w * h * ch).map(|_| rng.random_range(-1.0..1.0)).collect(),
        stride: 1,
        source: FeatureSource::Query,
    }
}

/// ZNCC of `query` against the same-size window of `target` at `(x, y)`,
/// computed from scratch (single channel). Zero-variance windows score 0.
pub fn zncc_at(query: &Frame<f64>, target: &Frame<f64>, x: usize, y: usize) -> f64 {
    let (qw, qh) = query.dims();
    let n = (qw * qh) as f64;
    let mut qm = 0.0;
    let mut tm = 0.0;
    for j in 0..qh {
        for i in 0..qw {
            qm += query.get(i, j, 0);
            tm += target.get(x + i, y + j, 0);
        }
    }
    qm /= n;
    tm /= n;
    let (mut num, mut qq, mut tt) = (0.0, 0.0, 0.0);
    for j in 0..qh {
        for i in 0..qw {
            let a = query.get(i, j, 0) - qm;
            let b = target.get(x + i, y + j, 0) - tm;
            num += a * b;
            qq += a * a;
            tt += b * b;
        }
    }
    if qq / n <= 1e-12 || tt / n <= 1e-12 {
        0.0
    } else {
        num / (qq * tt).sqrt()
    }
}

/// Exhaustive scan; ties keep the first position in raster order.
pub fn brute_template_match(query: &Frame<f64>, target: &Frame<f64>) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for y in 0..=target.height() - query.height() {
        for x in 0..=target.width() - query.width() {
            let s = zncc_at(query, target, x, y);
            if s > best.2 {
                best = (x, y, s);
            }
        }
    }
    best
}

fn unit_block<T: Real>(map: &FeatureMap<T>, cx: usize, cy: usize) -> Vec<T> {
    let mut v = Vec::new();
    for y in cy - 1..=cy + 1 {
        for x in cx - 1..=cx + 1 {
            for c in 0..map.channels {
                v.push(map.get(x, y, c));
            }
        }
    }
    let norm = v.iter().fold(T::zero(), |s, &e| s + e * e).sqrt();
    if norm > T::zero() {
        for e in &mut v {
            *e = *e / norm;
        }
    }
    v
}

/// Quadratic scan over every (query block, reference block) pair.
pub fn brute_match_blocks<T: Real>(q: &FeatureMap<T>, r: &FeatureMap<T>) -> MatchMaps<T> {
    let (qbw, qbh) = (q.width - 2, q.height - 2);
    let (rbw, rbh) = (r.width - 2, r.height - 2);
    let refs: Vec<Vec<T>> = (0..rbw * rbh)
        .map(|h| unit_block(r, h % rbw + 1, h / rbw + 1))
        .collect();
    let diag2 = T::lit(diagonal_sq(q.width, q.height));
    let mut out = MatchMaps {
        width: qbw,
        height: qbh,
        similarity: vec![],
        distance: vec![],
        correspondences: vec![],
    };
    for g in 0..qbw * qbh {
        let (gx, gy) = (g % qbw + 1, g / qbw + 1);
        let qb = unit_block(q, gx, gy);
        let mut best = (0usize, T::neg_infinity());
        for (h, rb) in refs.iter().enumerate() {
            let s = qb.iter().zip(rb).fold(T::zero(), |s, (&a, &b)| s + a * b);
            if s > best.1 {
                best = (h, s);
            }
        }
        let (hx, hy) = (best.0 % rbw + 1, best.0 / rbw + 1);
        let dx = T::from_usize_lossy(gx) - T::from_usize_lossy(hx);
        let dy = T::from_usize_lossy(gy) - T::from_usize_lossy(hy);
        out.similarity.push(best.1);
        out.distance.push((dx * dx + dy * dy) / diag2);
        out.correspondences.push((hx, hy));
    }
    out
}

/// SSIM evaluated window by window with an explicit 2-D Gaussian.
pub fn ssim_per_window(a: &Frame<f64>, b: &Frame<f64>) -> f64 {
    const N: usize = 11;
    let sigma = 1.5f64;
    let g: Vec<f64> = (0..N)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut kernel = [[0.0; N]; N];
    let mut total = 0.0;
    for j in 0..N {
        for i in 0..N {
            kernel[j][i] = g[i] * g[j];
            total += kernel[j][i];
        }
    }
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let (w, h) = a.dims();
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - N {
        for x in 0..=w - N {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    let k = kernel[j][i] / total;
                    ma += k * a.get(x + i, y + j, 0);
                    mb += k * b.get(x + i, y + j, 0);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..N {
                for i in 0..N {
                    let k = kernel[j][i] / total;
                    let da = a.get(x + i, y + j, 0) - ma;
                    let db = b.get(x + i, y + j, 0) - mb;
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

pub fn max_abs_diff<T: Real>(a: &Frame<T>, b: &Frame<T>) -> f64 {
    assert!(a.same_shape(b), "shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).abs())
        .fold(0.0, f64::max)
}
