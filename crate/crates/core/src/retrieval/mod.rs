//! Self-exemplar retrieval: cross-scale search over the whole sequence
//! (global) and same-scale search over neighboring frames (local).

mod store;
mod zncc;

pub use store::{FrameStore, OnceCache, DEFAULT_CACHE_BYTES};
pub use zncc::{
    best_in_region, template_match, template_match_pyramid, Exclusion, Hit, PreparedQuery, Region, SearchImage,
    SearchLevels,
};

use crate::error::{invalid, Result};
use crate::frames::{scaled_len, Frame, ScaleSequence};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub scales: ScaleSequence,
    pub patch_size: usize,
    pub stride: usize,
    /// Integer reduction of the coarse search level (1 disables it).
    pub search_downsample: usize,
    /// Local search uses frames `t ± 1 ..= t ± neighbor_radius`.
    pub neighbor_radius: usize,
    /// In the query's own frame, windows centered closer than this to the
    /// query center are skipped. 0 disables the exclusion.
    pub exclude_self_window: usize,
    /// Number of local exemplars kept.
    pub local_count: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            scales: ScaleSequence::default(),
            patch_size: 32,
            stride: 24,
            search_downsample: 2,
            neighbor_radius: 2,
            exclude_self_window: 16,
            local_count: 2,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.search_downsample < 1 {
            return Err(invalid("search_downsample must be >= 1"));
        }
        if self.neighbor_radius < 1 {
            return Err(invalid("neighbor_radius must be >= 1"));
        }
        if self.patch_size == 0 || self.stride == 0 || self.stride > self.patch_size {
            return Err(invalid("need 0 < stride <= patch_size"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExemplarKind {
    Global,
    Local,
}

/// A retrieved exemplar window.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarCandidate<T> {
    pub source_frame: usize,
    /// Scale relative to the query (1.0 for local exemplars).
    pub scale: f64,
    /// Top-left corner in source-frame pixels.
    pub location: (usize, usize),
    /// Side length in source-frame pixels.
    pub size: usize,
    pub score: T,
    pub kind: ExemplarKind,
}

/// Global candidates, one per searchable scale.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRetrieval<T> {
    pub candidates: Vec<ExemplarCandidate<T>>,
    /// Scales whose query did not fit in the frames.
    pub skipped: Vec<f64>,
}

pub(crate) fn check_origin<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    size: usize,
) -> Result<()> {
    if t >= store.len() {
        return Err(invalid(format!("frame {t} out of range (len {})", store.len())));
    }
    let (w, h) = store.dims();
    if origin.0 + size > w || origin.1 + size > h {
        return Err(invalid(format!("patch at {origin:?} leaves the {w}x{h} frame")));
    }
    Ok(())
}

/// The query window of scale `scale` for the patch at `origin`: a `size`×`size`
/// crop of the upsampled luma of frame `t` and its top-left corner there.
pub fn global_query<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    scale: f64,
    patch_size: usize,
) -> Result<(Frame<T>, (usize, usize))> {
    let size = scaled_len(patch_size, scale);
    let up = store.upsampled_luma(t, scale);
    if size > up.width() || size > up.height() {
        return Err(invalid(format!("scale {scale} query does not fit")));
    }
    let qx = ((origin.0 as f64 * scale).round() as usize).min(up.width() - size);
    let qy = ((origin.1 as f64 * scale).round() as usize).min(up.height() - size);
    Ok((up.crop(qx, qy, size, size)?, (qx, qy)))
}

/// For every scale `c`, searches the `c`-upsampled query patch over every
/// frame band-limited by `c` and keeps the best window across the sequence.
pub fn retrieve_global<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    cfg: &SearchConfig,
) -> Result<GlobalRetrieval<T>> {
    let p = cfg.patch_size;
    check_origin(store, t, origin, p)?;
    let (w, h) = store.dims();
    let mut out = GlobalRetrieval {
        candidates: Vec::new(),
        skipped: Vec::new(),
    };
    for &scale in cfg.scales.as_slice() {
        let size = scaled_len(p, scale);
        if size > w || size > h {
            out.skipped.push(scale);
            continue;
        }
        let (query, _) = global_query(store, t, origin, scale, p)?;
        let base = Region::full(w, h, size, size).expect("size checked");
        let mut best: Option<(usize, Hit<T>)> = None;
        for f in 0..store.len() {
            let mut region = base;
            if f == t && cfg.exclude_self_window > 0 {
                region.exclude = Some(Exclusion {
                    center2: ((2 * origin.0 + p) as i64, (2 * origin.1 + p) as i64),
                    radius2: 2 * cfg.exclude_self_window as i64,
                    window: (size, size),
                });
            }
            let levels = store.search_levels(f, scale, cfg.search_downsample);
            if let Some(hit) = levels.search(&query, &region) {
                if best.is_none_or(|(_, b)| hit.score > b.score) {
                    best = Some((f, hit));
                }
            }
        }
        match best {
            Some((f, hit)) => out.candidates.push(ExemplarCandidate {
                source_frame: f,
                scale,
                location: (hit.x, hit.y),
                size,
                score: hit.score,
                kind: ExemplarKind::Global,
            }),
            None => out.skipped.push(scale),
        }
    }
    Ok(out)
}

/// Neighbor frames of `t` within `radius`, in ascending order.
pub fn neighbor_frames(t: usize, len: usize, radius: usize) -> Vec<usize> {
    (t.saturating_sub(radius)..=(t + radius).min(len.saturating_sub(1)))
        .filter(|&f| f != t)
        .collect()
}

/// Best same-scale match in each neighboring frame, searched within
/// ±2·patch_size of the query origin. Returns the `local_count` best by score.
pub fn retrieve_local<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    cfg: &SearchConfig,
) -> Result<Vec<ExemplarCandidate<T>>> {
    let p = cfg.patch_size;
    check_origin(store, t, origin, p)?;
    let (w, h) = store.dims();
    let query = store.luma(t).crop(origin.0, origin.1, p, p)?;
    let reach = 2 * p;
    let region = Region {
        x0: origin.0.saturating_sub(reach),
        x1: (origin.0 + reach).min(w - p),
        y0: origin.1.saturating_sub(reach),
        y1: (origin.1 + reach).min(h - p),
        exclude: None,
    };
    let mut found: Vec<ExemplarCandidate<T>> = neighbor_frames(t, store.len(), cfg.neighbor_radius)
        .into_iter()
        .filter_map(|f| {
            let levels = store.search_levels(f, 1.0, cfg.search_downsample);
            levels.search(&query, &region).map(|hit| ExemplarCandidate {
                source_frame: f,
                scale: 1.0,
                location: (hit.x, hit.y),
                size: p,
                score: hit.score,
                kind: ExemplarKind::Local,
            })
        })
        .collect();
    // Stable: equal scores keep ascending frame order.
    found.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    found.truncate(cfg.local_count);
    Ok(found)
}
