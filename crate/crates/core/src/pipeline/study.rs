use serde::Serialize;

use crate::error::{invalid, Result};
use crate::frames::{make_grid, Frame};
use crate::retrieval::FrameStore;
use crate::scalar::Real;

use super::config::PipelineConfig;
use super::patch::score_all;
use super::{super_resolve_video, with_workers};

/// One `(K, V)` setting of a reference-count sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub v: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// PSNR change relative to the first row.
    pub delta_psnr: f64,
}

#[derive(Serialize)]
struct SweepCsv {
    k: usize,
    v: usize,
    psnr: String,
    ssim: String,
    delta_psnr: String,
}

impl SweepRow {
    pub fn csv(rows: &[SweepRow]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(SweepCsv {
                k: r.k,
                v: r.v,
                psnr: format!("{:.4}", r.psnr),
                ssim: format!("{:.6}", r.ssim),
                delta_psnr: format!("{:+.4}", r.delta_psnr),
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// Runs the pipeline for every `(K, V)` in `k_values × v_values` (first
/// occurrence order, duplicates dropped) and scores `frames` against `gt`.
pub fn sweep_references<T: Real>(
    store: &FrameStore<T>,
    frames: &[usize],
    gt: &[Frame<T>],
    cfg: &PipelineConfig,
    k_values: &[usize],
    v_values: &[usize],
) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() || v_values.is_empty() {
        return Err(invalid("sweep needs at least one K and one V"));
    }
    let mut settings: Vec<(usize, usize)> = Vec::new();
    for &k in k_values {
        for &v in v_values {
            if !settings.contains(&(k, v)) {
                settings.push((k, v));
            }
        }
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(settings.len());
    for (k, v) in settings {
        let mut c = cfg.clone();
        c.selection.k = k;
        c.search.local_count = v;
        let (_, report) = super_resolve_video(store, frames, &c, Some(gt))?;
        let m = report.metrics.expect("ground truth supplied");
        let delta = rows.first().map_or(0.0, |r| m.psnr - r.psnr);
        log::info!("sweep K={k} V={v}: {:.4} dB", m.psnr);
        rows.push(SweepRow {
            k,
            v,
            psnr: m.psnr,
            ssim: m.ssim,
            delta_psnr: delta,
        });
    }
    Ok(rows)
}

/// Fraction of a frame's patches whose candidate at `scale` passes the
/// distance threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecurrenceRow {
    pub frame: usize,
    pub scale: f64,
    pub patches: usize,
    pub passing: usize,
    pub fraction: f64,
}

impl RecurrenceRow {
    pub fn csv(rows: &[RecurrenceRow]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize((
                r.frame,
                format!("{}", r.scale),
                r.patches,
                r.passing,
                format!("{:.4}", r.fraction),
            ))
            .expect("in-memory csv");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
        format!("frame,scale,patches,passing,fraction\n{body}")
    }
}

/// Cross-scale recurrence statistics: for every frame and scale, how many
/// patches found an exemplar with mean(D) within `cfg.selection.delta`.
/// Scales whose window does not fit count as not passing.
pub fn analyze_recurrence<T: Real>(
    store: &FrameStore<T>,
    frames: &[usize],
    cfg: &PipelineConfig,
) -> Result<Vec<RecurrenceRow>> {
    cfg.validate()?;
    let (w, h) = store.dims();
    let grid = make_grid(w, h, cfg.search.patch_size, cfg.search.stride)?;
    let scales = cfg.search.scales.as_slice();
    with_workers(cfg.workers, || {
        use rayon::prelude::*;
        let mut rows = Vec::new();
        for &t in frames {
            if t >= store.len() {
                return Err(invalid(format!("frame {t} out of range")));
            }
            let per_patch: Vec<Result<Vec<f64>>> = grid
                .origins
                .par_iter()
                .map(|&origin| {
                    let g = store.global_retrieval(t, origin, &cfg.search)?;
                    let scored = score_all(store, t, origin, &g.candidates, cfg)?;
                    Ok(scored
                        .iter()
                        .filter(|s| s.maps.mean_distance() <= cfg.selection.delta)
                        .map(|s| s.candidate.scale)
                        .collect())
                })
                .collect();
            let per_patch = per_patch.into_iter().collect::<Result<Vec<_>>>()?;
            for &scale in scales {
                let passing = per_patch.iter().filter(|p| p.contains(&scale)).count();
                rows.push(RecurrenceRow {
                    frame: t,
                    scale,
                    patches: grid.n(),
                    passing,
                    fraction: passing as f64 / grid.n() as f64,
                });
            }
        }
        Ok(rows)
    })?
}
