use crate::doc::BlendMode;

use super::RenderError;

/// Separable blend function `B(backdrop, source)` on unit floats.
pub fn blend_channel(mode: BlendMode, backdrop: f64, source: f64) -> Result<f64, RenderError> {
    if mode == BlendMode::PassThrough {
        return Err(RenderError::PassThroughNotAChannelMode);
    }
    Ok(blend_unchecked(mode, backdrop, source))
}

#[inline]
pub(crate) fn blend_unchecked(mode: BlendMode, b: f64, s: f64) -> f64 {
    match mode {
        BlendMode::Normal | BlendMode::PassThrough => s,
        BlendMode::Multiply => b * s,
        BlendMode::Screen => 1.0 - (1.0 - b) * (1.0 - s),
        BlendMode::Overlay => {
            if b <= 0.5 {
                2.0 * b * s
            } else {
                1.0 - 2.0 * (1.0 - b) * (1.0 - s)
            }
        }
        BlendMode::Darken => b.min(s),
        BlendMode::Lighten => b.max(s),
        BlendMode::LinearDodge => (b + s).min(1.0),
        BlendMode::Difference => (b - s).abs(),
    }
}

/// Source-over of straight-alpha `src` onto `dst`, with `src` alpha scaled by
/// `alpha_scale` and colors mixed through `mode`. A fully transparent source
/// leaves `dst` bit-for-bit unchanged.
#[inline]
pub(crate) fn over(mode: BlendMode, dst: &mut [f64; 4], src: &[f64; 4], alpha_scale: f64) {
    let a_s = src[3] * alpha_scale;
    if a_s <= 0.0 {
        return;
    }
    let a_b = dst[3];
    let a_o = a_s + a_b * (1.0 - a_s);
    for c in 0..3 {
        let blended = blend_unchecked(mode, dst[c], src[c]);
        dst[c] = ((1.0 - a_b) * a_s * src[c] + a_b * a_s * blended + (1.0 - a_s) * a_b * dst[c]) / a_o;
    }
    dst[3] = a_o;
}

/// Round-half-up to a byte.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_spot_values() {
        assert_eq!(blend_channel(BlendMode::Screen, 0.5, 0.5).unwrap(), 0.75);
        assert_eq!(blend_channel(BlendMode::Darken, 0.2, 0.9).unwrap(), 0.2);
        assert_eq!(blend_channel(BlendMode::Lighten, 0.2, 0.9).unwrap(), 0.9);
        assert_eq!(blend_channel(BlendMode::LinearDodge, 0.7, 0.6).unwrap(), 1.0);
        assert!(matches!(
            blend_channel(BlendMode::PassThrough, 0.1, 0.1),
            Err(RenderError::PassThroughNotAChannelMode)
        ));
    }

    #[test]
    fn overlay_branches_agree_at_half() {
        for x in [0.0, 0.25, 1.0] {
            let low = 2.0 * 0.5 * x;
            let high = 1.0 - 2.0 * (1.0 - 0.5) * (1.0 - x);
            assert_eq!(low, x);
            assert_eq!(high, x);
            assert_eq!(blend_channel(BlendMode::Overlay, 0.5, x).unwrap(), x);
        }
    }

    #[test]
    fn multiply_of_halves_quantizes_to_64() {
        let mut dst = [0.5, 0.5, 0.5, 1.0];
        over(BlendMode::Multiply, &mut dst, &[0.5, 0.5, 0.5, 1.0], 1.0);
        assert_eq!(dst[0], 0.25);
        assert_eq!(quantize(dst[0]), 64);
    }

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(0.49 / 255.0), 0);
        assert_eq!(quantize(1.2), 255);
        assert_eq!(quantize(-0.1), 0);
    }

    #[test]
    fn transparent_source_is_exact_identity() {
        let before = [0.1234, 0.5, 0.9, 0.3];
        let mut dst = before;
        over(BlendMode::Overlay, &mut dst, &[1.0, 1.0, 1.0, 0.0], 1.0);
        assert_eq!(dst, before);
        over(BlendMode::Normal, &mut dst, &[1.0, 1.0, 1.0, 1.0], 0.0);
        assert_eq!(dst, before);
    }
}
