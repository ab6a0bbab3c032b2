//! Multi-reference fusion and high-frequency transfer.

use crate::align::Warped;
use crate::error::{invalid, Result};
use crate::frames::{band_limit, resample_bicubic, Frame};
use crate::scalar::Real;

/// Per-reference input to [`compute_weights`], all on the output pixel grid.
#[derive(Clone, Copy, Debug)]
pub struct WeightInput<'a, T> {
    /// Similarity map resampled to pixels (1 channel).
    pub similarity: &'a Frame<T>,
    pub mean_distance: f64,
    /// 0/1 validity of the aligned reference (1 channel).
    pub valid: &'a Frame<T>,
}

/// Softmax weights, one map per reference, plus a 0/1 map of pixels where no
/// reference was valid.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMaps<T> {
    pub weights: Vec<Frame<T>>,
    pub fallback: Frame<T>,
}

impl<T: Real> WeightMaps<T> {
    /// Mean of the largest weight over pixels with at least one valid reference.
    pub fn confidence(&self) -> f64 {
        let n = self.fallback.data().len();
        let mut total = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if self.fallback.data()[i] == T::zero() {
                total += self.weights.iter().map(|w| w.data()[i].as_f64()).fold(0.0, f64::max);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

/// Penalty applied to mean(D) inside the logits.
pub const DISTANCE_PENALTY: f64 = 1.0;

/// `w_r(x) = softmax_r((S_r(x) − mean(D_r)) / temperature)` over the
/// references valid at `x`; invalid references get weight 0.
pub fn compute_weights<T: Real>(inputs: &[WeightInput<'_, T>], temperature: f64) -> Result<WeightMaps<T>> {
    let Some(first) = inputs.first() else {
        return Err(invalid("need at least one reference"));
    };
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    let (w, h) = first.similarity.dims();
    if inputs
        .iter()
        .any(|i| i.similarity.dims() != (w, h) || i.valid.dims() != (w, h))
    {
        return Err(invalid("weight inputs disagree in size"));
    }
    let n = w * h;
    let k = inputs.len();
    let mut weights = vec![vec![T::zero(); n]; k];
    let mut fallback = vec![T::zero(); n];
    let mut logits = vec![0.0f64; k];
    for px in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (r, inp) in inputs.iter().enumerate() {
            if inp.valid.data()[px] > T::zero() {
                let l = (inp.similarity.data()[px].as_f64() - DISTANCE_PENALTY * inp.mean_distance) / temperature;
                logits[r] = l;
                max = max.max(l);
            } else {
                logits[r] = f64::NEG_INFINITY;
            }
        }
        if max == f64::NEG_INFINITY {
            fallback[px] = T::one();
            continue;
        }
        let total: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        for r in 0..k {
            weights[r][px] = T::lit((logits[r] - max).exp() / total);
        }
    }
    Ok(WeightMaps {
        weights: weights
            .into_iter()
            .map(|d| Frame::new(w, h, 1, d))
            .collect::<Result<_>>()?,
        fallback: Frame::new(w, h, 1, fallback)?,
    })
}

/// `Σ_r w_r · ref_r` per sample; validity is the union of the inputs'.
pub fn fuse_global<T: Real>(refs: &[Warped<Frame<T>, T>], weights: &[Frame<T>]) -> Result<Warped<Frame<T>, T>> {
    let Some(first) = refs.first() else {
        return Err(invalid("no references to fuse"));
    };
    if refs.len() != weights.len() {
        return Err(invalid(format!(
            "{} references but {} weight maps",
            refs.len(),
            weights.len()
        )));
    }
    let (w, h) = first.image.dims();
    let ch = first.image.channels();
    for (r, wt) in refs.iter().zip(weights) {
        if !r.image.same_shape(&first.image) || r.valid.dims() != (w, h) || wt.dims() != (w, h) || wt.channels() != 1 {
            return Err(invalid("reference, validity and weight shapes disagree"));
        }
    }
    let mut data = vec![T::zero(); w * h * ch];
    let mut valid = vec![T::zero(); w * h];
    for (r, wt) in refs.iter().zip(weights) {
        for px in 0..w * h {
            let wv = wt.data()[px];
            for c in 0..ch {
                let i = px * ch + c;
                data[i] = data[i] + wv * r.image.data()[i];
            }
            if r.valid.data()[px] > T::zero() {
                valid[px] = T::one();
            }
        }
    }
    Ok(Warped {
        image: Frame::new(w, h, ch, data)?,
        valid: Frame::new(w, h, 1, valid)?,
    })
}

/// Long-term (`alpha`) and short-term (`beta`) detail gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferGains {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TransferGains {
    fn default() -> Self {
        Self { alpha: 0.8, beta: 0.2 }
    }
}

/// Detail band of an image: the image minus its `factor` band-limited copy.
pub fn detail_band<T: Real>(image: &Frame<T>, factor: f64) -> Result<Frame<T>> {
    let low = band_limit(image, factor)?;
    Ok(image.zip_map(&low, |a, b| a - b))
}

/// Bicubic base plus transferred detail:
/// `base + α·detail(fused)·v + β·mean(detail(local))·(1 − v·[α > 0])`,
/// clamped to [0, 1]. Without a fused reference, `v` is 0 everywhere.
/// Pixels of `fused_global` outside its validity are replaced by the base
/// before the detail band is taken.
pub fn reconstruct_patch<T: Real>(
    lr_patch: &Frame<T>,
    fused_global: Option<&Warped<Frame<T>, T>>,
    local_refs: &[Frame<T>],
    upscale: usize,
    gains: TransferGains,
) -> Result<Frame<T>> {
    if !(2..=4).contains(&upscale) {
        return Err(invalid(format!("upscale {upscale} not in 2..=4")));
    }
    let u = upscale as f64;
    let mut out = resample_bicubic(lr_patch, u)?;
    let (w, h) = out.dims();
    let ch = out.channels();
    let alpha = T::lit(gains.alpha);
    let beta = T::lit(gains.beta);

    let mut local_weight = vec![T::one(); w * h];
    if let Some(fused) = fused_global {
        if !fused.image.same_shape(&out) || fused.valid.dims() != (w, h) {
            return Err(invalid("fused reference does not match the output patch"));
        }
        // Uncovered pixels take the base so that their detail is zero and
        // no ringing leaks across coverage boundaries.
        let mut filled = fused.image.clone();
        for px in 0..w * h {
            if fused.valid.data()[px] <= T::zero() {
                let i = px * ch;
                filled.data_mut()[i..i + ch].copy_from_slice(&out.data()[i..i + ch]);
            }
        }
        let detail = detail_band(&filled, u)?;
        let gate_local = gains.alpha > 0.0;
        for px in 0..w * h {
            let v = fused.valid.data()[px];
            for c in 0..ch {
                let i = px * ch + c;
                out.data_mut()[i] = out.data()[i] + alpha * detail.data()[i] * v;
            }
            if gate_local {
                local_weight[px] = T::one() - v;
            }
        }
    }

    if !local_refs.is_empty() {
        let inv = T::lit(1.0 / local_refs.len() as f64);
        let mut local = vec![T::zero(); w * h * ch];
        for r in local_refs {
            if r.dims() != lr_patch.dims() || r.channels() != ch {
                return Err(invalid("local reference does not match the LR patch"));
            }
            let d = detail_band(&resample_bicubic(r, u)?, u)?;
            for (a, &b) in local.iter_mut().zip(d.data()) {
                *a = *a + b * inv;
            }
        }
        for px in 0..w * h {
            for c in 0..ch {
                let i = px * ch + c;
                out.data_mut()[i] = out.data()[i] + beta * local[i] * local_weight[px];
            }
        }
    }
    Ok(out.clamp01())
}
