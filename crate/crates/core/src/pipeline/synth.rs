//! Seeded synthetic videos with known cross-scale recurrence.
//!
//! A static, low-contrast background is crossed by textured sprites. Each
//! sprite first appears small in a few early frames and later reappears
//! enlarged by its planted scale in the second half of the video. Frames are
//! rendered at high resolution with supersampled edges and reduced by the
//! antialiased bicubic resize to form the low-resolution input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::frames::{resize_bicubic, Frame, DEFAULT_SCALES};
use crate::scalar::Real;

pub const SYNTH_WIDTH: usize = 160;
pub const SYNTH_HEIGHT: usize = 120;
pub const SYNTH_UPSCALE: usize = 4;
/// Side of a small sprite instance, in low-resolution pixels.
pub const SPRITE_SIDE: f64 = 36.0;
const SPRITE_CELLS: usize = 12;
const SUPERSAMPLE: usize = 4;
/// Small instances are anchored so that the grid patch at one of these
/// origins lies inside the sprite throughout its appearance.
const ANCHORS: [(f64, f64); 3] = [(24.0, 24.0), (96.0, 48.0), (48.0, 72.0)];
const MAX_SPEED: f64 = 0.4;

/// One appearance of a sprite in one frame (low-resolution pixel units).
#[derive(Clone, Debug, PartialEq)]
pub struct SpriteInstance {
    pub sprite: usize,
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub side: f64,
    /// Size relative to the small instance (1 for the small appearances).
    pub scale: f64,
}

impl SpriteInstance {
    pub fn is_small(&self) -> bool {
        self.scale == 1.0
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticVideo<T> {
    pub lr: Vec<Frame<T>>,
    pub hr: Vec<Frame<T>>,
    /// High-resolution 0/1 masks of every sprite pixel, one per frame.
    pub masks: Vec<Frame<T>>,
    pub instances: Vec<SpriteInstance>,
}

impl<T: Real> SyntheticVideo<T> {
    /// Frames showing a sprite at its small size: the regions whose detail
    /// recurs later at a larger scale.
    pub fn planted_frames(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .instances
            .iter()
            .filter(|i| i.is_small())
            .map(|i| i.frame)
            .collect();
        v.dedup();
        v
    }

    /// Where the `size`×`size` window at `origin` of frame `t` lands in
    /// frame `f`, as `(x, y, side)`, when both frames show the same sprite
    /// and the window lies inside it.
    pub fn project(&self, t: usize, origin: (usize, usize), size: usize, f: usize) -> Option<(f64, f64, f64)> {
        let src = self.instances.iter().find(|i| i.frame == t)?;
        let dst = self.instances.iter().find(|i| i.frame == f && i.sprite == src.sprite)?;
        let (ox, oy, s) = (origin.0 as f64, origin.1 as f64, size as f64);
        if ox < src.x || oy < src.y || ox + s > src.x + src.side || oy + s > src.y + src.side {
            return None;
        }
        let k = dst.side / src.side;
        Some((dst.x + (ox - src.x) * k, dst.y + (oy - src.y) * k, s * k))
    }
}

struct Sprite {
    cells: Vec<[f64; 3]>,
}

impl Sprite {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let tint =
            |rng: &mut ChaCha8Rng, base: f64| [0, 1, 2].map(|_| (base + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0));
        let dark_level = rng.random_range(0.08..0.22);
        let dark = tint(rng, dark_level);
        let light_level = rng.random_range(0.78..0.92);
        let light = tint(rng, light_level);
        let accent = [0, 1, 2].map(|_| rng.random_range(0.2..0.8));
        let cells = (0..SPRITE_CELLS * SPRITE_CELLS)
            .map(|_| match rng.random_range(0..20) {
                0..=8 => dark,
                9..=17 => light,
                _ => accent,
            })
            .collect();
        Self { cells }
    }

    /// Color at normalized coordinates in [0, 1)².
    fn at(&self, u: f64, v: f64) -> [f64; 3] {
        let cx = ((u * SPRITE_CELLS as f64) as usize).min(SPRITE_CELLS - 1);
        let cy = ((v * SPRITE_CELLS as f64) as usize).min(SPRITE_CELLS - 1);
        self.cells[cy * SPRITE_CELLS + cx]
    }
}

/// Smooth value noise on a square lattice of `period` pixels.
struct ValueNoise {
    period: f64,
    cols: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, width: f64, height: f64, period: f64) -> Self {
        let cols = (width / period).ceil() as usize + 2;
        let rows = (height / period).ceil() as usize + 2;
        let values = (0..cols * rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { period, cols, values }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = (x / self.period, y / self.period);
        let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fx, fy) = (smooth(gx.fract()), smooth(gy.fract()));
        let v = |i: usize, j: usize| self.values[j * self.cols + i];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bottom = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

struct Background {
    base: [f64; 3],
    gradient: [[f64; 2]; 3],
    coarse: ValueNoise,
    fine: ValueNoise,
}

impl Background {
    fn random(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Self {
        Self {
            base: [0, 1, 2].map(|_| rng.random_range(0.4..0.6)),
            gradient: [0, 1, 2].map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]),
            coarse: ValueNoise::new(rng, w, h, 160.0),
            fine: ValueNoise::new(rng, w, h, 64.0),
        }
    }

    /// Color at high-resolution coordinates normalized by the frame size.
    fn at(&self, x: f64, y: f64, w: f64, h: f64) -> [f64; 3] {
        let n = 0.06 * self.coarse.at(x, y) + 0.03 * self.fine.at(x, y);
        let (u, v) = (x / w - 0.5, y / h - 0.5);
        [0, 1, 2].map(|c| self.base[c] + self.gradient[c][0] * u + self.gradient[c][1] * v + n)
    }
}

/// Builds a `frames`-long video with one sprite per planted scale.
///
/// The first half of the video shows sprite `j` small in its own block of
/// frames; the second half shows it enlarged by `planted_scales[j]`.
pub fn generate_synthetic<T: Real>(seed: u64, frames: usize, planted_scales: &[f64]) -> Result<SyntheticVideo<T>> {
    let n = planted_scales.len();
    if n == 0 || n > ANCHORS.len() {
        return Err(invalid(format!("need 1..={} planted scales, got {n}", ANCHORS.len())));
    }
    if planted_scales.iter().any(|s| !DEFAULT_SCALES.contains(s)) {
        return Err(invalid("planted scales must come from the default scale sequence"));
    }
    let block = frames / 2 / n;
    if block == 0 {
        return Err(invalid(format!("{frames} frames cannot hold {n} sprites twice")));
    }
    let (w, h) = (SYNTH_WIDTH as f64, SYNTH_HEIGHT as f64);
    if planted_scales.iter().any(|s| SPRITE_SIDE * s > h - 2.0) {
        return Err(invalid("planted scale too large for the frame"));
    }
    let up = SYNTH_UPSCALE as f64;
    let half = frames / 2;
    // Total drift over a block stays within the 2-pixel anchor slack.
    let speed = if block > 1 {
        MAX_SPEED.min(1.6 / (block - 1) as f64)
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Background::random(&mut rng, w * up, h * up);
    let sprites: Vec<Sprite> = (0..n).map(|_| Sprite::random(&mut rng)).collect();

    let mut instances = Vec::new();
    for (j, &scale) in planted_scales.iter().enumerate() {
        let mut velocity = || [0, 1].map(|_| speed * rng.random_range(-1.0..=1.0));
        let vs = velocity();
        let vl = velocity();
        let (ax, ay) = ANCHORS[j];
        let large = SPRITE_SIDE * scale;
        let margin = [(w - large) / 2.0, (h - large) / 2.0].map(|m| (m - speed * block as f64).max(0.0));
        let jitter = [
            rng.random_range(-1.0..=1.0) * margin[0],
            rng.random_range(-1.0..=1.0) * margin[1],
        ];
        for k in 0..block {
            let kf = k as f64;
            instances.push(SpriteInstance {
                sprite: j,
                frame: j * block + k,
                x: ax - 2.0 + vs[0] * kf + if vs[0] < 0.0 { speed * (block - 1) as f64 } else { 0.0 },
                y: ay - 2.0 + vs[1] * kf + if vs[1] < 0.0 { speed * (block - 1) as f64 } else { 0.0 },
                side: SPRITE_SIDE,
                scale: 1.0,
            });
            instances.push(SpriteInstance {
                sprite: j,
                frame: half + j * block + k,
                x: (w - large) / 2.0 + jitter[0] + vl[0] * kf,
                y: (h - large) / 2.0 + jitter[1] + vl[1] * kf,
                side: large,
                scale,
            });
        }
    }
    instances.sort_by_key(|i| (i.frame, i.sprite));

    let (hw, hh) = (SYNTH_WIDTH * SYNTH_UPSCALE, SYNTH_HEIGHT * SYNTH_UPSCALE);
    let mut lr = Vec::with_capacity(frames);
    let mut hr = Vec::with_capacity(frames);
    let mut masks = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut data = vec![0.0f64; hw * hh * 3];
        let mut mask = vec![T::zero(); hw * hh];
        for y in 0..hh {
            for x in 0..hw {
                let c = background.at(x as f64 + 0.5, y as f64 + 0.5, hw as f64, hh as f64);
                data[(y * hw + x) * 3..(y * hw + x + 1) * 3].copy_from_slice(&c);
            }
        }
        for inst in instances.iter().filter(|i| i.frame == t) {
            paint(&mut data, &mut mask, hw, hh, inst, &sprites[inst.sprite], &background);
        }
        let data = data.into_iter().map(|v| T::lit(v.clamp(0.0, 1.0))).collect();
        let hr_frame = Frame::new(hw, hh, 3, data)?.with_index(t);
        lr.push(resize_bicubic(&hr_frame, SYNTH_WIDTH, SYNTH_HEIGHT)?.with_index(t));
        hr.push(hr_frame);
        masks.push(Frame::new(hw, hh, 1, mask)?.with_index(t));
    }
    Ok(SyntheticVideo {
        lr,
        hr,
        masks,
        instances,
    })
}

fn paint<T: Real>(
    data: &mut [f64],
    mask: &mut [T],
    hw: usize,
    hh: usize,
    inst: &SpriteInstance,
    sprite: &Sprite,
    background: &Background,
) {
    let up = SYNTH_UPSCALE as f64;
    let (x0, y0, side) = (inst.x * up, inst.y * up, inst.side * up);
    let px0 = x0.floor().max(0.0) as usize;
    let py0 = y0.floor().max(0.0) as usize;
    let px1 = ((x0 + side).ceil() as usize).min(hw);
    let py1 = ((y0 + side).ceil() as usize).min(hh);
    let step = 1.0 / SUPERSAMPLE as f64;
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for y in py0..py1 {
        for x in px0..px1 {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let fx = x as f64 + (sx as f64 + 0.5) * step;
                    let fy = y as f64 + (sy as f64 + 0.5) * step;
                    let (u, v) = ((fx - x0) / side, (fy - y0) / side);
                    let c = if (0.0..1.0).contains(&u) && (0.0..1.0).contains(&v) {
                        sprite.at(u, v)
                    } else {
                        background.at(fx, fy, hw as f64, hh as f64)
                    };
                    (0..3).for_each(|k| acc[k] += c[k]);
                }
            }
            let i = (y * hw + x) * 3;
            (0..3).for_each(|k| data[i + k] = acc[k] / norm);
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            if cx >= x0 && cx < x0 + side && cy >= y0 && cy < y0 + side {
                mask[y * hw + x] = T::one();
            }
        }
    }
}
