use std::time::{Duration, Instant};

use crate::align::{fit_or_fallback, warp_frame, AffineParams, AlignmentSource, Interpolation, RansacConfig, Warped};
use crate::error::{Error, Result};
use crate::features::{
    extract_features_strided, match_blocks, refine_correspondences, FeatureMap, FeatureSource, MatchMaps,
};
use crate::frames::{band_limit, resample_bicubic, sample_bicubic, scaled_len, Frame};
use crate::fusion::{compute_weights, fuse_global, reconstruct_patch, WeightInput};
use crate::retrieval::{global_query, retrieve_local, ExemplarCandidate, FrameStore};
use crate::scalar::Real;
use crate::selection::{select, ScoredCandidate};

use super::config::{AlignMode, PipelineConfig};
use super::register::refine_affine;

/// Wall-clock time spent per stage, summed over patches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub retrieval: Duration,
    pub matching: Duration,
    pub alignment: Duration,
    pub fusion: Duration,
}

impl StageTimings {
    pub fn add(&mut self, o: &StageTimings) {
        self.retrieval += o.retrieval;
        self.matching += o.matching;
        self.alignment += o.alignment;
        self.fusion += o.fusion;
    }
}

/// What happened to one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDiagnostics {
    pub frame: usize,
    pub patch: usize,
    pub origin: (usize, usize),
    /// Global candidates that reached selection.
    pub candidates: usize,
    pub selected_scales: Vec<f64>,
    pub mean_distance: Vec<f64>,
    pub fill_count: usize,
    pub padded: usize,
    /// RANSAC inlier fraction per selected reference (0 in swap mode).
    pub inlier_fraction: Vec<f64>,
    /// References aligned by the median-translation fallback.
    pub fallbacks: usize,
    pub local_refs: usize,
    /// Fraction of output pixels covered by at least one valid reference.
    pub coverage: f64,
    /// Mean largest fusion weight over covered pixels.
    pub confidence: f64,
}

/// A global candidate with its match maps and the geometry needed to align it.
pub(crate) struct Scored<T> {
    pub candidate: ExemplarCandidate<T>,
    pub maps: MatchMaps<T>,
    pub query: FeatureMap<T>,
    pub reference: FeatureMap<T>,
    /// Query window corner in the upsampled frame.
    pub query_corner: (usize, usize),
    /// Actual per-axis upsampling of the query frame.
    pub query_scale: (f64, f64),
    /// Query-window luma (for photometric refinement).
    pub query_image: Frame<T>,
}

/// Feature matching of a candidate against its query window.
pub(crate) fn score_candidate<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    candidate: &ExemplarCandidate<T>,
    cfg: &PipelineConfig,
) -> Result<Scored<T>> {
    let (query_image, query_corner) = global_query(store, t, origin, candidate.scale, cfg.search.patch_size)?;
    let levels = store.search_levels(candidate.source_frame, candidate.scale, cfg.search.search_downsample);
    let (x, y) = candidate.location;
    let reference = levels.full.image().crop(x, y, candidate.size, candidate.size)?;
    let stride = candidate.size.div_ceil(cfg.align.match_cells);
    let query = extract_features_strided(&query_image, stride)?;
    let reference =
        extract_features_strided(&reference, stride)?.with_source(FeatureSource::Reference(candidate.source_frame));
    let maps = match_blocks(&query, &reference)?;
    let (w, h) = store.dims();
    let query_scale = (
        scaled_len(w, candidate.scale) as f64 / w as f64,
        scaled_len(h, candidate.scale) as f64 / h as f64,
    );
    Ok(Scored {
        candidate: candidate.clone(),
        maps,
        query,
        reference,
        query_corner,
        query_scale,
        query_image,
    })
}

/// Scores every candidate, dropping the ones too small to describe.
pub(crate) fn score_all<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    origin: (usize, usize),
    candidates: &[ExemplarCandidate<T>],
    cfg: &PipelineConfig,
) -> Result<Vec<Scored<T>>> {
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        match score_candidate(store, t, origin, c, cfg) {
            Ok(s) => out.push(s),
            Err(Error::InvalidArgument(msg)) => log::debug!("candidate at scale {} skipped: {msg}", c.scale),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn diag<T: Real>(a: T, b: T, tx: T, ty: T) -> AffineParams<T> {
    AffineParams {
        a11: a,
        a12: T::zero(),
        a21: T::zero(),
        a22: b,
        tx,
        ty,
    }
}

impl<T: Real> Scored<T> {
    fn stride(&self) -> f64 {
        self.query.stride as f64
    }

    /// Query-window pixels to output-patch pixels.
    fn query_to_output(&self, origin: (usize, usize), upscale: usize) -> AffineParams<f64> {
        let u = upscale as f64;
        let (sx, sy) = self.query_scale;
        let (qx, qy) = (self.query_corner.0 as f64, self.query_corner.1 as f64);
        diag(
            u / sx,
            u / sy,
            u * ((qx + 0.5) / sx - origin.0 as f64) - 0.5,
            u * ((qy + 0.5) / sy - origin.1 as f64) - 0.5,
        )
    }

    /// Feature cells to pixels of the window they were pooled from.
    fn cell_to_pixel(&self) -> AffineParams<f64> {
        let s = self.stride();
        let o = (s - 1.0) / 2.0;
        diag(s, s, o, o)
    }
}

/// SplitMix64 finalizer; decorrelates per-patch RANSAC seeds.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn ransac_seed(seed: u64, t: usize, patch: usize, reference: usize) -> u64 {
    let mut h = mix(seed ^ 0x5eed);
    for v in [t, patch, reference] {
        h = mix(h ^ v as u64);
    }
    h
}

struct AlignedRef<T> {
    warped: Warped<Frame<T>, T>,
    similarity: Frame<T>,
    mean_distance: f64,
    inlier_fraction: f64,
    fallback: bool,
}

/// Affine alignment: RANSAC on block correspondences, optional photometric
/// refinement, then a bicubic render of the source frame onto the output grid.
fn align_affine<T: Real>(
    store: &FrameStore<T>,
    s: &Scored<T>,
    origin: (usize, usize),
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(Warped<Frame<T>, T>, f64, bool)> {
    let mut pairs = s.maps.pairs();
    if cfg.align.subcell {
        let refined = refine_correspondences(&s.query, &s.reference, &s.maps)?;
        for (p, r) in pairs.iter_mut().zip(refined) {
            p.1 = r;
        }
    }
    let rc = RansacConfig {
        seed,
        ..cfg.ransac.clone()
    };
    let (fit, source) = fit_or_fallback(&pairs, &rc);
    let to_px = s.cell_to_pixel();
    let (lx, ly) = (s.candidate.location.0 as f64, s.candidate.location.1 as f64);
    // Reference-frame pixels to query-window pixels.
    let mut frame_to_query = to_px
        .compose(&fit.params.cast())
        .compose(&to_px.inverse()?)
        .compose(&AffineParams::translation(-lx, -ly));
    if cfg.align.refine_iterations > 0 {
        let levels = store.search_levels(
            s.candidate.source_frame,
            s.candidate.scale,
            cfg.search.search_downsample,
        );
        if let Some(better) = refine_affine(
            &s.query_image,
            levels.full.image(),
            &frame_to_query,
            cfg.align.refine_iterations,
        ) {
            frame_to_query = better;
        }
    }
    let to_out = s.query_to_output(origin, cfg.upscale).compose(&frame_to_query);
    let side = cfg.search.patch_size * cfg.upscale;
    let warped = warp_frame(
        store.frame(s.candidate.source_frame),
        &to_out.cast(),
        side,
        side,
        Interpolation::Bicubic,
    )?;
    Ok((
        warped,
        fit.inlier_fraction(),
        source == AlignmentSource::MedianTranslation,
    ))
}

/// Feature-swap alignment: every query block receives the reference block
/// it matched, displaced rigidly; overlapping blocks are averaged.
fn align_swap<T: Real>(
    store: &FrameStore<T>,
    s: &Scored<T>,
    origin: (usize, usize),
    cfg: &PipelineConfig,
) -> Result<Warped<Frame<T>, T>> {
    let side = cfg.search.patch_size * cfg.upscale;
    let src = store.frame(s.candidate.source_frame);
    let ch = src.channels();
    let to_out = s.query_to_output(origin, cfg.upscale);
    let from_out = to_out.inverse()?;
    let sigma = s.stride();
    let (lx, ly) = (s.candidate.location.0 as f64, s.candidate.location.1 as f64);
    let mut acc = vec![0.0f64; side * side * ch];
    let mut count = vec![0u32; side * side];
    let mut px = vec![T::zero(); ch];
    for (g, &(hx, hy)) in s.maps.correspondences.iter().enumerate() {
        let (gx, gy) = s.maps.query_center(g);
        // Query-window pixel extent of the 3×3-cell block, as pixel edges.
        let (u0, u1) = (sigma * (gx as f64 - 1.0), sigma * (gx as f64 + 2.0));
        let (v0, v1) = (sigma * (gy as f64 - 1.0), sigma * (gy as f64 + 2.0));
        let (dx, dy) = (
            sigma * (hx as f64 - gx as f64) + lx,
            sigma * (hy as f64 - gy as f64) + ly,
        );
        let (ox0, oy0) = to_out.apply(u0 - 0.5, v0 - 0.5);
        let (ox1, oy1) = to_out.apply(u1 - 0.5, v1 - 0.5);
        let xr = (ox0.floor().max(0.0) as usize)..((ox1.ceil() + 1.0).clamp(0.0, side as f64) as usize);
        let yr = (oy0.floor().max(0.0) as usize)..((oy1.ceil() + 1.0).clamp(0.0, side as f64) as usize);
        for oy in yr {
            for ox in xr.clone() {
                let (u, v) = from_out.apply(ox as f64, oy as f64);
                if u + 0.5 < u0 || u + 0.5 >= u1 || v + 0.5 < v0 || v + 0.5 >= v1 {
                    continue;
                }
                sample_bicubic(src, T::lit(u + dx), T::lit(v + dy), &mut px);
                let i = oy * side + ox;
                for c in 0..ch {
                    acc[i * ch + c] += px[c].clamp01().as_f64();
                }
                count[i] += 1;
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let n = count[i / ch];
            T::lit(if n > 0 { a / n as f64 } else { 0.0 })
        })
        .collect();
    let valid = count
        .iter()
        .map(|&n| if n > 0 { T::one() } else { T::zero() })
        .collect();
    Ok(Warped {
        image: Frame::new(side, side, ch, data)?,
        valid: Frame::new(side, side, 1, valid)?,
    })
}

/// Block similarities interpolated onto the output grid.
fn similarity_on_output<T: Real>(s: &Scored<T>, origin: (usize, usize), cfg: &PipelineConfig) -> Result<Frame<T>> {
    let side = cfg.search.patch_size * cfg.upscale;
    let to_cells = s
        .cell_to_pixel()
        .inverse()?
        .compose(&s.query_to_output(origin, cfg.upscale).inverse()?);
    let (bw, bh) = (s.maps.width, s.maps.height);
    let at = |x: usize, y: usize| s.maps.similarity[y * bw + x].as_f64();
    Ok(Frame::from_fn(side, side, 1, |x, y, _| {
        let (cx, cy) = to_cells.apply(x as f64, y as f64);
        // Block g is centered on cell g + 1.
        let gx = (cx - 1.0).clamp(0.0, (bw - 1) as f64);
        let gy = (cy - 1.0).clamp(0.0, (bh - 1) as f64);
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(bw - 1), (y0 + 1).min(bh - 1));
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        T::lit(top * (1.0 - fy) + bottom * fy)
    }))
}

/// Summed-area table of `f(x, y)` over a `w`×`h` grid.
fn integral(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let stride = w + 1;
    let mut table = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(x, y);
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    table
}

/// Clears validity where the reference's low band strays from the bicubic
/// base. Over a `(2r+1)²` box, the mean absolute luma difference must stay
/// within `tolerance + relative · std(base)`.
fn gate_validity<T: Real>(
    warped: &mut Warped<Frame<T>, T>,
    base: &Frame<T>,
    upscale: usize,
    tolerance: f64,
    relative: f64,
) -> Result<()> {
    let low = band_limit(&warped.image, upscale as f64)?.luma();
    let base = base.luma();
    let (w, h) = base.dims();
    let b = |x: usize, y: usize| base.get(x, y, 0).as_f64();
    let err = integral(w, h, |x, y| (low.get(x, y, 0).as_f64() - b(x, y)).abs());
    let sum = integral(w, h, b);
    let sum_sq = integral(w, h, |x, y| b(x, y) * b(x, y));
    let stride = w + 1;
    let r = upscale;
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            let boxed =
                |t: &[f64]| t[y1 * stride + x1] - t[y0 * stride + x1] - t[y1 * stride + x0] + t[y0 * stride + x0];
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mean = boxed(&sum) / n;
            let std = (boxed(&sum_sq) / n - mean * mean).max(0.0).sqrt();
            if boxed(&err) / n > tolerance + relative * std {
                warped.valid.set(x, y, 0, T::zero());
            }
        }
    }
    Ok(())
}

fn align_reference<T: Real>(
    store: &FrameStore<T>,
    s: &Scored<T>,
    origin: (usize, usize),
    base: &Frame<T>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<AlignedRef<T>> {
    let (mut warped, inlier_fraction, fallback) = match cfg.align.mode {
        AlignMode::Affine => align_affine(store, s, origin, cfg, seed)?,
        AlignMode::Swap => (align_swap(store, s, origin, cfg)?, 0.0, false),
    };
    gate_validity(&mut warped, base, cfg.upscale, cfg.align.gate, cfg.align.gate_relative)?;
    Ok(AlignedRef {
        warped,
        similarity: similarity_on_output(s, origin, cfg)?,
        mean_distance: s.maps.mean_distance(),
        inlier_fraction,
        fallback,
    })
}

/// Output patch, diagnostics and stage timings for the patch at `origin`.
pub(crate) fn process_patch<T: Real>(
    store: &FrameStore<T>,
    t: usize,
    index: usize,
    origin: (usize, usize),
    cfg: &PipelineConfig,
) -> Result<(Frame<T>, PatchDiagnostics, StageTimings)> {
    let p = cfg.search.patch_size;
    let mut timings = StageTimings::default();
    let mut diag = PatchDiagnostics {
        frame: t,
        patch: index,
        origin,
        candidates: 0,
        selected_scales: Vec::new(),
        mean_distance: Vec::new(),
        fill_count: 0,
        padded: 0,
        inlier_fraction: Vec::new(),
        fallbacks: 0,
        local_refs: 0,
        coverage: 0.0,
        confidence: 0.0,
    };
    let lr = store.frame(t).crop(origin.0, origin.1, p, p)?;

    let clock = Instant::now();
    let locals = retrieve_local(store, t, origin, &cfg.search)?;
    let local_patches = locals
        .iter()
        .map(|c| store.frame(c.source_frame).crop(c.location.0, c.location.1, p, p))
        .collect::<Result<Vec<_>>>()?;
    diag.local_refs = local_patches.len();
    let global = if cfg.selection.k > 0 {
        Some(store.global_retrieval(t, origin, &cfg.search)?)
    } else {
        None
    };
    timings.retrieval = clock.elapsed();

    let mut fused = None;
    if let Some(global) = global.filter(|g| !g.candidates.is_empty()) {
        let clock = Instant::now();
        let scored = score_all(store, t, origin, &global.candidates, cfg)?;
        diag.candidates = scored.len();
        let selection = if scored.is_empty() {
            None
        } else {
            let pairs: Vec<ScoredCandidate<T>> = scored.iter().map(|s| (s.candidate.clone(), s.maps.clone())).collect();
            Some(select(&pairs, &cfg.selection)?)
        };
        timings.matching = clock.elapsed();

        if let Some(sel) = selection {
            let clock = Instant::now();
            diag.fill_count = sel.fill_count;
            diag.padded = sel.padded;
            let base = resample_bicubic(&lr, cfg.upscale as f64)?;
            let mut aligned: Vec<AlignedRef<T>> = Vec::with_capacity(sel.refs.len());
            for (ri, (cand, _)) in sel.refs.iter().enumerate() {
                let s = scored
                    .iter()
                    .find(|s| s.candidate == *cand)
                    .expect("selected from scored");
                let a = align_reference(store, s, origin, &base, cfg, ransac_seed(cfg.seed, t, index, ri))?;
                diag.selected_scales.push(cand.scale);
                diag.mean_distance.push(a.mean_distance);
                diag.inlier_fraction.push(a.inlier_fraction);
                diag.fallbacks += usize::from(a.fallback);
                aligned.push(a);
            }
            timings.alignment = clock.elapsed();

            let clock = Instant::now();
            let inputs: Vec<WeightInput<'_, T>> = aligned
                .iter()
                .map(|a| WeightInput {
                    similarity: &a.similarity,
                    mean_distance: a.mean_distance,
                    valid: &a.warped.valid,
                })
                .collect();
            let weights = compute_weights(&inputs, cfg.fusion.temperature)?;
            let fallback = weights.fallback.data();
            diag.coverage = 1.0 - fallback.iter().map(|v| v.as_f64()).sum::<f64>() / fallback.len() as f64;
            diag.confidence = weights.confidence();
            let warped: Vec<Warped<Frame<T>, T>> = aligned.into_iter().map(|a| a.warped).collect();
            fused = Some(fuse_global(&warped, &weights.weights)?);
            timings.fusion = clock.elapsed();
        }
    }

    let clock = Instant::now();
    let out = reconstruct_patch(&lr, fused.as_ref(), &local_patches, cfg.upscale, cfg.fusion.gains())?;
    timings.fusion += clock.elapsed();
    Ok((out, diag, timings))
}
