//! Numbered 8-bit PNG sequences (`frame_%06d.png`).

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::frames::Frame;
use crate::scalar::Real;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn read_png<T: Real>(path: &Path) -> Result<Frame<T>> {
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    let scale = T::lit(1.0 / 255.0);
    let frame = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            Frame::new(
                w as usize,
                h as usize,
                1,
                g.into_raw()
                    .into_iter()
                    .map(|v| T::from_u8(v).unwrap() * scale)
                    .collect(),
            )?
        }
        _ => {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            Frame::new(
                w as usize,
                h as usize,
                3,
                rgb.into_raw()
                    .into_iter()
                    .map(|v| T::from_u8(v).unwrap() * scale)
                    .collect(),
            )?
        }
    };
    Ok(frame)
}

/// Quantizes `[0, 1]` samples to 8 bits (round to nearest).
pub fn to_bytes<T: Real>(frame: &Frame<T>) -> Vec<u8> {
    frame
        .data()
        .iter()
        .map(|v| (v.clamp01().as_f64() * 255.0).round() as u8)
        .collect()
}

pub fn write_png<T: Real>(frame: &Frame<T>, path: &Path) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let bytes = to_bytes(frame);
    let res = if frame.channels() == 1 {
        GrayImage::from_raw(w, h, bytes).map(|i| i.save(path))
    } else {
        RgbImage::from_raw(w, h, bytes).map(|i| i.save(path))
    };
    match res {
        Some(r) => r.map_err(|e| io_err(path, e)),
        None => Err(io_err(path, "buffer size mismatch")),
    }
}

/// PNG files of `dir` in filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every PNG of `dir`; frame indices follow filename sort order.
pub fn read_sequence<T: Real>(dir: &Path) -> Result<Vec<Frame<T>>> {
    list_frames(dir)?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            read_png(p).map(|f| f.with_index(i)).map_err(|e| Error::FrameIo {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn write_sequence<T: Real>(frames: &[Frame<T>], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for f in frames {
        write_png(f, &dir.join(frame_file_name(f.index)))?;
    }
    Ok(())
}
