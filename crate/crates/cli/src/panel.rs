//! Labeled comparison grids.

use font8x8::UnicodeFonts;
use selfx::frames::Frame;

/// Height of the label strip above each tile.
pub const LABEL_HEIGHT: usize = 10;
const GLYPH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for Crop {
    type Err = String;

    /// `x,y,width,height`.
    fn from_str(s: &str) -> Result<Self, String> {
        let v: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("crop {s:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match v[..] {
            [x, y, width, height] if width > 0 && height > 0 => Ok(Crop { x, y, width, height }),
            _ => Err(format!("crop {s:?} must be x,y,width,height with a positive size")),
        }
    }
}

/// Columns and rows of the most square grid holding `n` tiles.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let cols = (1..=n).find(|c| c * c >= n).unwrap_or(1);
    (cols, n.div_ceil(cols))
}

/// Lays `images` out row-major, each tile topped by its label. All images
/// must share one size; `crop` is applied to every image first.
pub fn render_panel(images: &[(String, Frame<f32>)], crop: Option<Crop>) -> Result<Frame<f32>, String> {
    if images.len() < 2 {
        return Err("a panel needs at least two images".into());
    }
    let (w0, h0) = images[0].1.dims();
    if let Some((label, _)) = images.iter().find(|(_, f)| f.dims() != (w0, h0)) {
        return Err(format!("image {label:?} differs in size from {:?}", images[0].0));
    }
    let tiles: Vec<Frame<f32>> = images
        .iter()
        .map(|(_, f)| {
            let f = f.to_rgb();
            match crop {
                Some(c) => f.crop(c.x, c.y, c.width, c.height).map_err(|_| {
                    format!(
                        "crop {},{},{},{} outside the {w0}x{h0} images",
                        c.x, c.y, c.width, c.height
                    )
                }),
                None => Ok(f),
            }
        })
        .collect::<Result<_, _>>()?;
    let (tw, th) = tiles[0].dims();
    let (cols, rows) = grid_shape(tiles.len());
    let cell_h = th + LABEL_HEIGHT;
    let mut out = Frame::filled(cols * tw, rows * cell_h, 3, 1.0f32);
    for (i, (tile, (label, _))) in tiles.iter().zip(images).enumerate() {
        let (ox, oy) = ((i % cols) * tw, (i / cols) * cell_h);
        draw_text(&mut out, label, ox + 1, oy + 1, tw.saturating_sub(2));
        for y in 0..th {
            for x in 0..tw {
                for c in 0..3 {
                    out.set(ox + x, oy + LABEL_HEIGHT + y, c, tile.get(x, y, c));
                }
            }
        }
    }
    Ok(out)
}

/// Black 8×8 glyphs; text beyond `max_width` pixels is cut off.
fn draw_text(out: &mut Frame<f32>, text: &str, x0: usize, y0: usize, max_width: usize) {
    for (k, ch) in text.chars().enumerate() {
        let gx = x0 + k * GLYPH;
        if (k + 1) * GLYPH > max_width {
            break;
        }
        let Some(rows) = font8x8::BASIC_FONTS.get(ch).or_else(|| font8x8::BASIC_FONTS.get('?')) else {
            continue;
        };
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH {
                if bits & (1 << dx) != 0 {
                    for c in 0..3 {
                        out.set(gx + dx, y0 + dy, c, 0.0);
                    }
                }
            }
        }
    }
}
