use crate::raster::Raster;

use super::blend::quantize;

/// Straight-alpha float pixels in [0, 1].
pub(crate) type Px = [f64; 4];

/// Float working buffer placed on the canvas with its top-left at `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Buffer {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
    pub px: Vec<Px>,
}

impl Buffer {
    pub fn transparent(x: i64, y: i64, w: usize, h: usize) -> Self {
        Buffer {
            x,
            y,
            w,
            h,
            px: vec![[0.0; 4]; w * h],
        }
    }

    pub fn from_raster(r: &Raster, x: i64, y: i64) -> Self {
        let px = r
            .pixels()
            .chunks_exact(4)
            .map(|p| {
                [
                    p[0] as f64 / 255.0,
                    p[1] as f64 / 255.0,
                    p[2] as f64 / 255.0,
                    p[3] as f64 / 255.0,
                ]
            })
            .collect();
        Buffer {
            x,
            y,
            w: r.width() as usize,
            h: r.height() as usize,
            px,
        }
    }

    /// Copy of `self` grown by `pad` transparent pixels on every side.
    pub fn padded(&self, pad: usize) -> Buffer {
        if pad == 0 {
            return self.clone();
        }
        let mut out = Buffer::transparent(self.x - pad as i64, self.y - pad as i64, self.w + 2 * pad, self.h + 2 * pad);
        for row in 0..self.h {
            let src = &self.px[row * self.w..(row + 1) * self.w];
            let start = (row + pad) * out.w + pad;
            out.px[start..start + self.w].copy_from_slice(src);
        }
        out
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.px.iter().map(|p| p[3]).collect()
    }

    /// Quantizes to 8-bit; pixels whose alpha rounds to zero become all-zero.
    pub fn to_raster(&self) -> Raster {
        let mut bytes = Vec::with_capacity(self.px.len() * 4);
        for p in &self.px {
            let a = quantize(p[3]);
            if a == 0 {
                bytes.extend_from_slice(&[0, 0, 0, 0]);
            } else {
                bytes.extend_from_slice(&[quantize(p[0]), quantize(p[1]), quantize(p[2]), a]);
            }
        }
        Raster::from_pixels(self.w as u32, self.h as u32, bytes).expect("buffer dimensions are consistent")
    }
}
