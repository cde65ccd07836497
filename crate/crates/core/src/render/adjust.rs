use crate::doc::{AdjustmentParams, BlendMode};
use crate::raster::Raster;

use super::blend::blend_unchecked;
use super::buffer::{Buffer, Px};

#[inline]
pub(crate) fn adjust_channel(params: &AdjustmentParams, c: f64) -> f64 {
    match *params {
        AdjustmentParams::Invert => 1.0 - c,
        AdjustmentParams::BrightnessContrast {
            brightness,
            contrast,
        } => ((c - 0.5) * (1.0 + contrast as f64 / 100.0) + 0.5 + brightness as f64 / 200.0).clamp(0.0, 1.0),
    }
}

/// Moves the color of `px` toward its adjusted color by `k`; alpha is kept.
#[inline]
pub(crate) fn adjust_pixel(params: &AdjustmentParams, mode: BlendMode, px: &mut Px, k: f64) {
    if k <= 0.0 {
        return;
    }
    for v in px.iter_mut().take(3) {
        let target = blend_unchecked(mode, *v, adjust_channel(params, *v));
        *v += (target - *v) * k;
    }
}

/// Applies an adjustment to every pixel of `backdrop`, weighted by the alpha
/// of `region_alpha` when given (which must match the backdrop size).
pub fn apply_adjustment(backdrop: &Raster, params: &AdjustmentParams, region_alpha: Option<&Raster>) -> Raster {
    let mut buf = Buffer::from_raster(backdrop, 0, 0);
    for (i, px) in buf.px.iter_mut().enumerate() {
        let k = match region_alpha {
            Some(r) => r.pixels().get(i * 4 + 3).copied().unwrap_or(0) as f64 / 255.0,
            None => 1.0,
        };
        adjust_pixel(params, BlendMode::Normal, px, k);
    }
    // keep the backdrop's transparent pixels byte-identical
    let mut out = buf.to_raster();
    for (o, b) in out.pixels_mut().chunks_exact_mut(4).zip(backdrop.pixels().chunks_exact(4)) {
        if b[3] == 0 {
            o.copy_from_slice(b);
        }
    }
    out
}
