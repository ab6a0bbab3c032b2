//! End-to-end super-resolution: tile, retrieve, match, select, align, fuse,
//! reconstruct and splice, plus the synthetic corpus and study harnesses.

mod config;
mod patch;
mod register;
mod study;
mod synth;

use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{parse_override, AlignConfig, AlignMode, FusionConfig, PipelineConfig};
pub use patch::{PatchDiagnostics, StageTimings};
pub use study::{analyze_recurrence, sweep_references, RecurrenceRow, SweepRow};
pub use synth::{
    generate_synthetic, SpriteInstance, SyntheticVideo, SPRITE_SIDE, SYNTH_HEIGHT, SYNTH_UPSCALE, SYNTH_WIDTH,
};

use crate::error::{invalid, Error, Result};
use crate::frames::{make_grid, resample_bicubic, splice, Frame};
use crate::metrics::MetricReport;
use crate::retrieval::FrameStore;
use crate::scalar::Real;

/// Output of one frame.
#[derive(Clone, Debug)]
pub struct FrameResult<T> {
    pub image: Frame<T>,
    pub diagnostics: Vec<PatchDiagnostics>,
    pub timings: StageTimings,
}

/// Super-resolves frame `t` of `store`.
///
/// Frames smaller than one patch are upscaled bicubically.
pub fn super_resolve_frame<T: Real>(store: &FrameStore<T>, t: usize, cfg: &PipelineConfig) -> Result<FrameResult<T>> {
    cfg.validate()?;
    if t >= store.len() {
        return Err(invalid(format!("frame {t} out of range (len {})", store.len())));
    }
    let (w, h) = store.dims();
    let p = cfg.search.patch_size;
    let u = cfg.upscale;
    if w < p || h < p {
        return Ok(FrameResult {
            image: resample_bicubic(store.frame(t), u as f64)?.with_index(t),
            diagnostics: Vec::new(),
            timings: StageTimings::default(),
        });
    }
    let grid = make_grid(w, h, p, cfg.search.stride)?;
    let results: Vec<_> = grid
        .origins
        .par_iter()
        .enumerate()
        .map(|(i, &origin)| patch::process_patch(store, t, i, origin, cfg))
        .collect();
    let mut patches = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    let mut timings = StageTimings::default();
    for (r, &(x, y)) in results.into_iter().zip(&grid.origins) {
        let (img, d, tm) = r?;
        patches.push(((x * u, y * u), img));
        diagnostics.push(d);
        timings.add(&tm);
    }
    let image = splice(&patches, w * u, h * u)?.with_index(t);
    Ok(FrameResult {
        image,
        diagnostics,
        timings,
    })
}

/// Diagnostics and timings of a run, with metrics when ground truth was given.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub diagnostics: Vec<PatchDiagnostics>,
    pub timings: StageTimings,
    pub total_time: Duration,
    pub metrics: Option<MetricReport>,
}

#[derive(Serialize)]
struct DiagnosticsRow {
    frame: usize,
    patch: usize,
    x: usize,
    y: usize,
    candidates: usize,
    scales: String,
    mean_distance: String,
    fill_count: usize,
    padded: usize,
    inlier_fraction: String,
    fallbacks: usize,
    local_refs: usize,
    coverage: String,
    confidence: String,
}

fn join(v: &[f64], prec: usize) -> String {
    v.iter().map(|x| format!("{x:.prec$}")).collect::<Vec<_>>().join(";")
}

impl RunReport {
    /// Per-patch diagnostics as CSV. Timings are left out so the file is
    /// reproducible.
    pub fn diagnostics_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for d in &self.diagnostics {
            w.serialize(DiagnosticsRow {
                frame: d.frame,
                patch: d.patch,
                x: d.origin.0,
                y: d.origin.1,
                candidates: d.candidates,
                scales: join(&d.selected_scales, 2),
                mean_distance: join(&d.mean_distance, 6),
                fill_count: d.fill_count,
                padded: d.padded,
                inlier_fraction: join(&d.inlier_fraction, 4),
                fallbacks: d.fallbacks,
                local_refs: d.local_refs,
                coverage: format!("{:.6}", d.coverage),
                confidence: format!("{:.6}", d.confidence),
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// Runs `f` on a pool of `workers` threads (0 = all cores).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Super-resolves `frames` of `store` in order on `cfg.workers` threads.
/// When `gt` is given (one high-resolution frame per entry of `frames`)
/// the report carries per-frame metrics.
pub fn super_resolve_video<T: Real>(
    store: &FrameStore<T>,
    frames: &[usize],
    cfg: &PipelineConfig,
    gt: Option<&[Frame<T>]>,
) -> Result<(Vec<Frame<T>>, RunReport)> {
    cfg.validate()?;
    if let Some(gt) = gt {
        if gt.len() != frames.len() {
            return Err(invalid(format!(
                "{} ground-truth frames for {} outputs",
                gt.len(),
                frames.len()
            )));
        }
    }
    let start = std::time::Instant::now();
    let mut outputs = Vec::with_capacity(frames.len());
    let mut report = RunReport::default();
    with_workers(cfg.workers, || -> Result<()> {
        for &t in frames {
            let r = super_resolve_frame(store, t, cfg)?;
            log::info!("frame {t}: {} patches", r.diagnostics.len());
            report.diagnostics.extend(r.diagnostics);
            report.timings.add(&r.timings);
            outputs.push(r.image);
        }
        Ok(())
    })??;
    if let Some(gt) = gt {
        report.metrics = Some(MetricReport::evaluate(&outputs, gt)?);
    }
    report.total_time = start.elapsed();
    Ok((outputs, report))
}
