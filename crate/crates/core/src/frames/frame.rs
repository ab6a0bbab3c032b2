use crate::error::{invalid, Result};
use crate::scalar::Real;

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Planar-interleaved float image: samples are stored row-major with the
/// channels of one pixel adjacent (`data[(y * width + x) * channels + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
    /// Timestamp of the frame inside its sequence.
    pub index: usize,
}

impl<T: Real> Frame<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("empty frame {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            index: 0,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            index: 0,
        }
    }

    /// Builds a frame by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        assert!(width > 0 && height > 0 && (channels == 1 || channels == 3));
        Self {
            width,
            height,
            channels,
            data,
            index: 0,
        }
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Sample with coordinates clamped to the frame (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    /// Single-channel luma view. Returns a copy for 1-channel frames.
    pub fn luma(&self) -> Frame<T> {
        if self.channels == 1 {
            return self.clone();
        }
        let [wr, wg, wb] = LUMA_WEIGHTS.map(T::lit);
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| wr * px[0] + wg * px[1] + wb * px[2])
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            index: self.index,
        }
    }

    pub fn channel(&self, c: usize) -> Frame<T> {
        assert!(c < self.channels);
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
            index: self.index,
        }
    }

    /// Copies the `w`×`h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Frame<T>> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(invalid(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(w * h * ch);
        for row in y..y + h {
            let start = (row * self.width + x) * ch;
            data.extend_from_slice(&self.data[start..start + w * ch]);
        }
        Ok(Frame {
            width: w,
            height: h,
            channels: ch,
            data,
            index: self.index,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Frame<T> {
        Frame {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Combines two same-shaped frames sample by sample.
    pub fn zip_map(&self, other: &Frame<T>, f: impl Fn(T, T) -> T) -> Frame<T> {
        assert!(self.same_shape(other), "zip_map on mismatched frames");
        Frame {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        }
    }

    /// Converts the sample type.
    pub fn cast<U: Real>(&self) -> Frame<U> {
        Frame {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            index: self.index,
        }
    }

    pub fn same_shape(&self, other: &Frame<T>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Population variance of each channel.
    pub fn channel_variances(&self) -> Vec<f64> {
        let n = (self.width * self.height) as f64;
        (0..self.channels)
            .map(|c| {
                let vals = self.data.iter().skip(c).step_by(self.channels);
                let mean = vals.clone().map(|v| v.as_f64()).sum::<f64>() / n;
                vals.map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n
            })
            .collect()
    }

    pub fn clamp01(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.clamp01());
        self
    }

    /// Replicates a luma frame into three identical channels.
    pub fn to_rgb(&self) -> Frame<T> {
        if self.channels == 3 {
            return self.clone();
        }
        Frame {
            width: self.width,
            height: self.height,
            channels: 3,
            data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            index: self.index,
        }
    }

    /// Rotates the frame 90° counter-clockwise.
    pub fn rotate90(&self) -> Frame<T> {
        let (w, h) = (self.width, self.height);
        Frame::from_fn(h, w, self.channels, |x, y, c| self.get(w - 1 - y, x, c)).with_index(self.index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length() {
        assert!(Frame::<f32>::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Frame::<f32>::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(Frame::<f32>::new(2, 2, 1, vec![0.0, f32::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn luma_of_gray_rgb_is_gray() {
        let f = Frame::<f64>::filled(3, 2, 3, 0.25);
        let l = f.luma();
        assert_eq!(l.channels(), 1);
        for v in l.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn crop_and_rotate() {
        let f = Frame::<f32>::from_fn(4, 3, 1, |x, y, _| (y * 4 + x) as f32);
        let c = f.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(f.crop(3, 0, 2, 1).is_err());
        let r = f.rotate90();
        assert_eq!(r.dims(), (3, 4));
        assert_eq!(r.get(0, 0, 0), 3.0);
        assert_eq!(r.rotate90().rotate90().rotate90(), f);
    }
}
