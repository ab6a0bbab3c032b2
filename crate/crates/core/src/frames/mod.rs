//! Frames, bicubic resampling, frequency-band matching and patch tiling.

mod frame;
mod grid;
pub mod io;
mod resample;

pub use frame::{Frame, LUMA_WEIGHTS};
pub use grid::{hann, make_grid, splice, PatchGrid};
pub use resample::{
    band_limit, cubic_kernel, resample_bicubic, resize_bicubic, sample_bicubic, sample_bilinear, scaled_len, BICUBIC_A,
};

/// Default global-search scale sequence.
pub const DEFAULT_SCALES: [f64; 7] = [1.2, 1.4, 1.7, 2.1, 2.5, 2.9, 3.5];

/// Strictly increasing list of scale factors, each greater than one.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSequence(Vec<f64>);

impl TryFrom<Vec<f64>> for ScaleSequence {
    type Error = crate::Error;

    fn try_from(v: Vec<f64>) -> crate::Result<Self> {
        Self::new(v)
    }
}

impl From<ScaleSequence> for Vec<f64> {
    fn from(s: ScaleSequence) -> Self {
        s.0
    }
}

impl ScaleSequence {
    pub fn new(scales: Vec<f64>) -> crate::Result<Self> {
        if scales.iter().any(|&s| !(s.is_finite() && s > 1.0)) {
            return Err(crate::error::invalid("every scale must be finite and > 1"));
        }
        if scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::invalid("scales must be strictly increasing"));
        }
        Ok(Self(scales))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ScaleSequence {
    fn default() -> Self {
        Self(DEFAULT_SCALES.to_vec())
    }
}
