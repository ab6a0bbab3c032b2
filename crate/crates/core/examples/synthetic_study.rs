//! Runs the pipeline on the seeded synthetic corpus and prints planted-region
//! and full-frame PSNR against bicubic for a few configurations.
//!
//! `cargo run --release -p selfx --example synthetic_study -- [key=value ...]`

use std::time::Instant;

use selfx::frames::resample_bicubic;
use selfx::metrics::{psnr, psnr_masked};
use selfx::pipeline::{generate_synthetic, parse_override, super_resolve_video, PipelineConfig};
use selfx::retrieval::FrameStore;

fn main() -> selfx::Result<()> {
    let overrides = std::env::args()
        .skip(1)
        .map(|a| parse_override(&a))
        .collect::<selfx::Result<Vec<_>>>()?;
    let video = generate_synthetic::<f32>(7, 24, &[1.7, 2.1, 2.9])?;
    let frames = video.planted_frames();
    let store = FrameStore::new(video.lr.clone())?;
    let base = PipelineConfig::parse("", &overrides)?;
    let only: Option<String> = std::env::var("ONLY").ok();
    let variants: [(&str, &[(&str, &str)]); 3] = [
        ("K=3", &[]),
        ("K=0", &[("selection.k", "0")]),
        ("swap", &[("align.mode", "swap")]),
    ];
    for (name, sets) in variants {
        if only.as_deref().is_some_and(|o| o != name) {
            continue;
        }
        let mut cfg = base.clone();
        for (k, v) in sets {
            cfg.set(k, v)?;
        }
        let clock = Instant::now();
        let (out, report) = super_resolve_video(&store, &frames, &cfg, None)?;
        let mut gains = Vec::new();
        let mut full = Vec::new();
        let mut bg = Vec::new();
        for (o, &t) in out.iter().zip(&frames) {
            let bic = resample_bicubic(&video.lr[t], 4.0)?;
            let gt = &video.hr[t];
            let m = &video.masks[t];
            gains.push(psnr_masked(o, gt, m)? - psnr_masked(&bic, gt, m)?);
            full.push(psnr(o, gt)? - psnr(&bic, gt)?);
            let inv = m.map(|v| 1.0 - v);
            bg.push(psnr_masked(o, gt, &inv)? - psnr_masked(&bic, gt, &inv)?);
        }
        let mut sorted = gains.clone();
        sorted.sort_by(f64::total_cmp);
        let fb: usize = report.diagnostics.iter().map(|d| d.fallbacks).sum();
        let cov: f64 = report.diagnostics.iter().map(|d| d.coverage).sum::<f64>() / report.diagnostics.len() as f64;
        println!(
            "{name}: median planted gain {:+.3} dB, full-frame {:+.3} dB (min {:+.3}), fallbacks {fb}, coverage {cov:.3}, {:.1}s",
            sorted[sorted.len() / 2],
            full.iter().sum::<f64>() / full.len() as f64,
            full.iter().cloned().fold(f64::INFINITY, f64::min),
            clock.elapsed().as_secs_f64()
        );
        println!(
            "  background gains: {}",
            bg.iter().map(|g| format!("{g:+.2}")).collect::<Vec<_>>().join(" ")
        );
        println!(
            "  planted gains: {}",
            gains.iter().map(|g| format!("{g:+.2}")).collect::<Vec<_>>().join(" ")
        );
        println!("  timings: {:?}", report.timings);
    }
    Ok(())
}
