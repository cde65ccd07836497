//! Layer effects on float buffers.
//!
//! Effects are stacked in a fixed order regardless of how they are listed on
//! the layer: inner glow and color overlay paint over the content, then the
//! stroke and finally the drop shadow are placed underneath.

use crate::doc::{BlendMode, Effect, Rgb};
use crate::raster::Raster;

use super::blend::over;
use super::buffer::{Buffer, Px};

/// Exact Gaussian blur of a single plane. The kernel is truncated at 3 sigma
/// and renormalized; samples outside the plane count as zero.
pub(crate) fn gaussian_blur(plane: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || plane.is_empty() {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sx = x as i64 + k as i64 - radius;
                if sx >= 0 && (sx as usize) < w {
                    acc += weight * plane[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                let sy = y as i64 + k as i64 - radius;
                if sy >= 0 && (sy as usize) < h {
                    acc += weight * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn sigma(blur: u32) -> f64 {
    blur as f64 / 2.0
}

fn blur_radius(blur: u32) -> usize {
    (3.0 * sigma(blur)).ceil() as usize
}

/// Integer pixel offset of a drop shadow.
pub(crate) fn shadow_offset(angle: i32, distance: u32) -> (i64, i64) {
    let theta = (angle as f64).to_radians();
    let d = distance as f64;
    ((d * theta.cos()).round() as i64, (d * theta.sin()).round() as i64)
}

/// How far an effect can paint outside the content bounds.
pub(crate) fn extent(effect: &Effect) -> usize {
    match *effect {
        Effect::DropShadow {
            angle,
            distance,
            blur,
            ..
        } => {
            let (dx, dy) = shadow_offset(angle, distance);
            dx.unsigned_abs().max(dy.unsigned_abs()) as usize + blur_radius(blur)
        }
        Effect::Stroke { width, .. } => width as usize,
        Effect::InnerGlow { .. } | Effect::ColorOverlay { .. } => 0,
    }
}

fn rank(effect: &Effect) -> u8 {
    match effect {
        Effect::InnerGlow { .. } => 0,
        Effect::ColorOverlay { .. } => 1,
        Effect::Stroke { .. } => 2,
        Effect::DropShadow { .. } => 3,
    }
}

fn rgb_unit(c: Rgb) -> [f64; 3] {
    [c.r as f64 / 255.0, c.g as f64 / 255.0, c.b as f64 / 255.0]
}

/// `content` over a solid-color layer whose alpha is `coverage`.
fn under(content: &mut Buffer, color: Rgb, coverage: &[f64]) {
    let [r, g, b] = rgb_unit(color);
    for (px, &a) in content.px.iter_mut().zip(coverage) {
        let mut base: Px = [r, g, b, a];
        if a <= 0.0 {
            continue;
        }
        over(BlendMode::Normal, &mut base, px, 1.0);
        *px = base;
    }
}

fn tint(content: &mut Buffer, color: Rgb, amount: impl Fn(usize) -> f64) {
    let rgb = rgb_unit(color);
    for (i, px) in content.px.iter_mut().enumerate() {
        if px[3] <= 0.0 {
            continue;
        }
        let k = amount(i);
        if k <= 0.0 {
            continue;
        }
        for c in 0..3 {
            px[c] = px[c] * (1.0 - k) + rgb[c] * k;
        }
    }
}

pub(crate) fn apply(buf: &mut Buffer, effect: &Effect) {
    let (w, h) = (buf.w, buf.h);
    match *effect {
        Effect::DropShadow {
            color,
            opacity,
            angle,
            distance,
            blur,
        } => {
            let (dx, dy) = shadow_offset(angle, distance);
            let alpha = buf.alpha();
            let mut moved = vec![0.0; w * h];
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (sx, sy) = (x - dx, y - dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                        moved[y as usize * w + x as usize] = alpha[sy as usize * w + sx as usize];
                    }
                }
            }
            let scale = opacity as f64 / 255.0;
            let shadow: Vec<f64> = gaussian_blur(&moved, w, h, sigma(blur))
                .into_iter()
                .map(|a| a * scale)
                .collect();
            under(buf, color, &shadow);
        }
        Effect::Stroke { color, width } => {
            let r = width as i64;
            let disc: Vec<(i64, i64)> = (-r..=r)
                .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
                .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
                .collect();
            let alpha = buf.alpha();
            let mut coverage = vec![0.0; w * h];
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let hit = disc.iter().any(|&(dx, dy)| {
                        let (sx, sy) = (x + dx, y + dy);
                        sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h && alpha[sy as usize * w + sx as usize] > 0.0
                    });
                    if hit {
                        coverage[y as usize * w + x as usize] = 1.0;
                    }
                }
            }
            under(buf, color, &coverage);
        }
        Effect::InnerGlow { color, opacity, blur } => {
            let inverse: Vec<f64> = buf.px.iter().map(|p| 1.0 - p[3]).collect();
            let glow = gaussian_blur(&inverse, w, h, sigma(blur));
            let scale = opacity as f64 / 255.0;
            tint(buf, color, |i| glow[i] * scale);
        }
        Effect::ColorOverlay { color, opacity } => {
            let k = opacity as f64 / 255.0;
            tint(buf, color, |_| k);
        }
    }
}

/// Pads `content` so nothing is cut off, then applies all effects in stacking order.
pub(crate) fn apply_all(content: &Buffer, effects: &[Effect]) -> Buffer {
    if effects.is_empty() {
        return content.clone();
    }
    let pad = effects.iter().map(extent).max().unwrap_or(0);
    let mut buf = content.padded(pad);
    let mut ordered: Vec<&Effect> = effects.iter().collect();
    ordered.sort_by_key(|e| rank(e));
    for e in ordered {
        apply(&mut buf, e);
    }
    buf
}

/// Applies one effect to `content` in place of the same size; anything the
/// effect paints outside the raster bounds is dropped.
pub fn apply_effect(content: &Raster, effect: &Effect) -> Raster {
    let mut buf = Buffer::from_raster(content, 0, 0);
    apply(&mut buf, effect);
    buf.to_raster()
}
