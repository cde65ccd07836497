//! Deterministic compositor.
//!
//! All math runs on straight-alpha `f64` channels in [0, 1]; quantization to
//! 8 bits (round half up) happens once, on the final canvas. Output bytes do
//! not depend on [`RenderOptions::tile_rows`].
//!
//! Per leaf: content at its position, effects, layer mask (255 outside the
//! mask bitmap), clip-base alpha, then source-over with the layer's blend
//! mode and opacity. Groups other than pass-through render into an isolated
//! transparent buffer that is then blended as a single layer. Adjustment
//! leaves recolor what is already in their group's buffer.

mod adjust;
mod blend;
mod buffer;
mod effects;

use rayon::prelude::*;
use thiserror::Error;

use crate::doc::{AssetPayload, BlendMode, DocError, Document, GroupNode, LayerKind, LayerPath, LeafLayer, Mask, Node, Violation};
use crate::raster::Raster;

pub use adjust::apply_adjustment;
pub use blend::{blend_channel, quantize};
pub use effects::apply_effect;

use buffer::{Buffer, Px};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("document is invalid: {} violation(s), first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidDocument(Vec<Violation>),
    #[error("step {step} out of range for {leaf_count} leaves")]
    StepOutOfRange { step: usize, leaf_count: usize },
    #[error("pass_through is not a per-channel blend mode")]
    PassThroughNotAChannelMode,
    #[error(transparent)]
    Path(#[from] DocError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Rows per parallel tile; 0 renders on the calling thread.
    pub tile_rows: usize,
}

pub fn composite(doc: &Document) -> Result<Raster, RenderError> {
    composite_with(doc, &RenderOptions::default())
}

pub fn composite_with(doc: &Document, opts: &RenderOptions) -> Result<Raster, RenderError> {
    composite_filtered(doc, opts, |_| true)
}

/// Renders with every leaf whose traversal step fails `include` treated as hidden.
pub fn composite_filtered<F>(doc: &Document, opts: &RenderOptions, include: F) -> Result<Raster, RenderError>
where
    F: Fn(usize) -> bool,
{
    let violations = doc.validate();
    if !violations.is_empty() {
        return Err(RenderError::InvalidDocument(violations));
    }
    let (w, h) = (doc.canvas_width as usize, doc.canvas_height as usize);
    let mut ctx = Ctx {
        doc,
        include: &include,
        step: 0,
        opts,
        w,
        h,
    };
    let mut canvas = Buffer::transparent(0, 0, w, h);
    ctx.render_group(&doc.root, &mut canvas);
    Ok(canvas.to_raster())
}

/// Render of the first `step` leaves in traversal order.
pub fn composite_prefix(doc: &Document, step: usize) -> Result<Raster, RenderError> {
    composite_prefix_with(doc, step, &RenderOptions::default())
}

pub fn composite_prefix_with(doc: &Document, step: usize, opts: &RenderOptions) -> Result<Raster, RenderError> {
    let leaf_count = doc.leaf_count();
    if step > leaf_count {
        return Err(RenderError::StepOutOfRange { step, leaf_count });
    }
    composite_filtered(doc, opts, |s| s < step)
}

/// Render of everything below the group at `group`: the prefix up to the
/// group's first leaf.
pub fn group_backdrop(doc: &Document, group: &LayerPath) -> Result<Raster, RenderError> {
    doc.resolve_group(group)?;
    composite_prefix(doc, doc.leaves_before(group))
}

struct Ctx<'a> {
    doc: &'a Document,
    include: &'a dyn Fn(usize) -> bool,
    step: usize,
    opts: &'a RenderOptions,
    w: usize,
    h: usize,
}

#[inline]
fn mask_value(mask: Option<&Mask>, x: i64, y: i64) -> f64 {
    match mask {
        Some(m) if m.enabled => {
            let (mx, my) = (x - m.x as i64, y - m.y as i64);
            if mx >= 0 && my >= 0 && (mx as u32) < m.bitmap.width() && (my as u32) < m.bitmap.height() {
                m.bitmap.get(mx as u32, my as u32) as f64 / 255.0
            } else {
                1.0
            }
        }
        _ => 1.0,
    }
}

impl Ctx<'_> {
    fn each_row<F>(&self, dst: &mut Buffer, f: F)
    where
        F: Fn(usize, &mut [Px]) + Sync + Send,
    {
        let w = dst.w;
        if w == 0 {
            return;
        }
        match self.opts.tile_rows {
            0 => dst.px.chunks_mut(w).enumerate().for_each(|(y, row)| f(y, row)),
            tile => dst
                .px
                .par_chunks_mut(w * tile)
                .enumerate()
                .for_each(|(t, chunk)| {
                    for (r, row) in chunk.chunks_mut(w).enumerate() {
                        f(t * tile + r, row);
                    }
                }),
        }
    }

    fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.w * self.h]
    }

    fn content(&self, leaf: &LeafLayer) -> Option<Buffer> {
        let asset = self.doc.asset(leaf.asset_ref.as_deref()?)?;
        match &asset.payload {
            AssetPayload::Raster(r) => Some(Buffer::from_raster(r, leaf.x as i64, leaf.y as i64)),
            AssetPayload::Text(_) => None,
        }
    }

    /// Alpha a clipped sibling is restricted to: content alpha times mask,
    /// without effects or opacity.
    fn leaf_coverage(&self, leaf: &LeafLayer) -> Vec<f64> {
        let mut cov = self.zeros();
        if leaf.kind == LayerKind::Adjustment {
            for y in 0..self.h {
                for x in 0..self.w {
                    cov[y * self.w + x] = mask_value(leaf.mask.as_ref(), x as i64, y as i64);
                }
            }
            return cov;
        }
        let Some(buf) = self.content(leaf) else { return cov };
        for by in 0..buf.h {
            let cy = buf.y + by as i64;
            if cy < 0 || cy >= self.h as i64 {
                continue;
            }
            for bx in 0..buf.w {
                let cx = buf.x + bx as i64;
                if cx < 0 || cx >= self.w as i64 {
                    continue;
                }
                cov[cy as usize * self.w + cx as usize] = buf.px[by * buf.w + bx][3] * mask_value(leaf.mask.as_ref(), cx, cy);
            }
        }
        cov
    }

    fn group_coverage(&self, buf: &Buffer, mask: Option<&Mask>) -> Vec<f64> {
        let mut cov = buf.alpha();
        for y in 0..self.h {
            for x in 0..self.w {
                cov[y * self.w + x] *= mask_value(mask, x as i64, y as i64);
            }
        }
        cov
    }

    fn render_group(&mut self, group: &GroupNode, dst: &mut Buffer) {
        let mut clip: Option<Vec<f64>> = None;
        for (i, child) in group.children.iter().enumerate() {
            let base_for_next = group.children.get(i + 1).is_some_and(Node::clipped);
            match child {
                Node::Leaf(leaf) => {
                    let step = self.step;
                    self.step += 1;
                    let active = leaf.visible && (self.include)(step);
                    if leaf.clipped {
                        if active {
                            if let Some(cov) = &clip {
                                self.draw_leaf(leaf, dst, Some(cov));
                            }
                        }
                        continue;
                    }
                    clip = base_for_next.then(|| if active { self.leaf_coverage(leaf) } else { self.zeros() });
                    if active {
                        self.draw_leaf(leaf, dst, None);
                    }
                }
                Node::Group(g) => {
                    if !g.visible {
                        self.step += child.leaf_count();
                        clip = base_for_next.then(|| self.zeros());
                        continue;
                    }
                    if g.blend != BlendMode::PassThrough {
                        let mut buf = Buffer::transparent(0, 0, self.w, self.h);
                        self.render_group(g, &mut buf);
                        clip = base_for_next.then(|| self.group_coverage(&buf, g.mask.as_ref()));
                        self.place(&buf, dst, g.blend, g.opacity, g.mask.as_ref(), None);
                        continue;
                    }
                    clip = base_for_next.then(|| {
                        let start = self.step;
                        let mut iso = Buffer::transparent(0, 0, self.w, self.h);
                        self.render_group(g, &mut iso);
                        self.step = start;
                        self.group_coverage(&iso, g.mask.as_ref())
                    });
                    if g.opacity == 255 && g.mask.is_none() {
                        self.render_group(g, dst);
                    } else {
                        let mut inner = dst.clone();
                        self.render_group(g, &mut inner);
                        self.mix(dst, &inner, g.opacity, g.mask.as_ref());
                    }
                }
            }
        }
    }

    fn draw_leaf(&self, leaf: &LeafLayer, dst: &mut Buffer, clip: Option<&Vec<f64>>) {
        let opacity = leaf.opacity as f64 / 255.0;
        let w = self.w;
        if let Some(params) = leaf.adjustment.filter(|_| leaf.kind == LayerKind::Adjustment) {
            let mask = leaf.mask.as_ref();
            let mode = leaf.blend;
            self.each_row(dst, |y, row| {
                for (x, px) in row.iter_mut().enumerate() {
                    let mut k = opacity * mask_value(mask, x as i64, y as i64);
                    if let Some(c) = clip {
                        k *= c[y * w + x];
                    }
                    adjust::adjust_pixel(&params, mode, px, k);
                }
            });
            return;
        }
        let Some(content) = self.content(leaf) else { return };
        let layer = effects::apply_all(&content, &leaf.effects);
        self.place(&layer, dst, leaf.blend, leaf.opacity, leaf.mask.as_ref(), clip);
    }

    /// Source-over of a positioned buffer onto the canvas-sized `dst`.
    fn place(&self, src: &Buffer, dst: &mut Buffer, mode: BlendMode, opacity: u16, mask: Option<&Mask>, clip: Option<&Vec<f64>>) {
        let opacity = opacity as f64 / 255.0;
        let w = self.w;
        self.each_row(dst, |y, row| {
            let sy = y as i64 - src.y;
            if sy < 0 || sy >= src.h as i64 {
                return;
            }
            let x0 = src.x.max(0);
            let x1 = (src.x + src.w as i64).min(w as i64);
            for x in x0..x1 {
                let s = &src.px[sy as usize * src.w + (x - src.x) as usize];
                if s[3] <= 0.0 {
                    continue;
                }
                let mut scale = opacity * mask_value(mask, x, y as i64);
                if let Some(c) = clip {
                    scale *= c[y * w + x as usize];
                }
                blend::over(mode, &mut row[x as usize], s, scale);
            }
        });
    }

    /// Pass-through group with partial opacity or a mask: interpolate between
    /// the backdrop and the group rendered directly onto it.
    fn mix(&self, dst: &mut Buffer, inner: &Buffer, opacity: u16, mask: Option<&Mask>) {
        let opacity = opacity as f64 / 255.0;
        let w = self.w;
        self.each_row(dst, |y, row| {
            for (x, px) in row.iter_mut().enumerate() {
                let b = inner.px[y * w + x];
                if b == *px {
                    continue;
                }
                let t = opacity * mask_value(mask, x as i64, y as i64);
                if t <= 0.0 {
                    continue;
                }
                let a = *px;
                let alpha = a[3] + (b[3] - a[3]) * t;
                if alpha <= 0.0 {
                    *px = [0.0; 4];
                    continue;
                }
                for c in 0..3 {
                    let pa = a[c] * a[3];
                    let pb = b[c] * b[3];
                    px[c] = (pa + (pb - pa) * t) / alpha;
                }
                px[3] = alpha;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::{AdjustmentParams, AssetRef, Effect, Rgb};

    fn solid(w: u32, h: u32, rgba: [u8; 4]) -> Raster {
        Raster::filled(w, h, rgba)
    }

    fn doc_with(layers: Vec<(LeafLayer, Raster)>) -> Document {
        let mut doc = Document::new(4, 4);
        for (i, (mut leaf, r)) in layers.into_iter().enumerate() {
            let id = format!("a{i}");
            if leaf.kind.has_asset() {
                doc = doc.with_asset(AssetRef::raster(&id, r));
                leaf.asset_ref = Some(id);
            }
            doc.root.children.push(leaf.into());
        }
        doc
    }

    #[test]
    fn opaque_cover_replaces_canvas() {
        let px = [12, 34, 56, 255];
        let doc = doc_with(vec![(LeafLayer::pixel("p", "", 0, 0), solid(4, 4, px))]);
        assert_eq!(composite(&doc).unwrap(), solid(4, 4, px));
    }

    #[test]
    fn opacity_zero_layer_is_invisible() {
        let base = (LeafLayer::pixel("b", "", 0, 0), solid(4, 4, [100, 120, 140, 200]));
        let mut hidden = LeafLayer::pixel("h", "", 1, 1);
        hidden.opacity = 0;
        hidden.blend = BlendMode::Difference;
        let with = doc_with(vec![base.clone(), (hidden, solid(2, 2, [255, 0, 0, 255]))]);
        let without = doc_with(vec![base]);
        assert_eq!(composite(&with).unwrap(), composite(&without).unwrap());
    }

    #[test]
    fn multiply_half_over_half() {
        let mut top = LeafLayer::pixel("t", "", 0, 0);
        top.blend = BlendMode::Multiply;
        let doc = doc_with(vec![
            (LeafLayer::pixel("b", "", 0, 0), solid(4, 4, [128, 128, 128, 255])),
            (top, solid(4, 4, [128, 128, 128, 255])),
        ]);
        // per-pixel scalar oracle
        let c = 128.0 / 255.0;
        let expected = quantize(c * c);
        let out = composite(&doc).unwrap();
        assert_eq!(out.get(2, 2), [expected, expected, expected, 255]);
        assert!(expected == 64 || expected == 63);
    }

    #[test]
    fn prefix_bounds_and_identity() {
        let doc = doc_with(vec![
            (LeafLayer::pixel("a", "", 0, 0), solid(2, 2, [255, 0, 0, 255])),
            (LeafLayer::pixel("b", "", 1, 1), solid(2, 2, [0, 255, 0, 128])),
            (LeafLayer::pixel("c", "", 2, 2), solid(2, 2, [0, 0, 255, 255])),
        ]);
        assert!(composite_prefix(&doc, 0).unwrap().is_transparent());
        assert_eq!(composite_prefix(&doc, 3).unwrap(), composite(&doc).unwrap());
        assert!(matches!(
            composite_prefix(&doc, 4),
            Err(RenderError::StepOutOfRange { step: 4, leaf_count: 3 })
        ));
        let mut reduced = doc.clone();
        reduced.root.children.truncate(2);
        assert_eq!(composite_prefix(&doc, 2).unwrap(), composite(&reduced).unwrap());
    }

    #[test]
    fn backdrop_of_group_is_render_below_it() {
        let mut doc = Document::new(4, 4)
            .with_asset(AssetRef::raster("a", solid(4, 4, [255, 0, 0, 255])))
            .with_asset(AssetRef::raster("b", solid(2, 2, [0, 0, 255, 255])));
        doc.root.children = vec![
            LeafLayer::pixel("A", "a", 0, 0).into(),
            GroupNode::new("g")
                .with_children(vec![
                    LeafLayer::pixel("B", "b", 0, 0).into(),
                    LeafLayer::pixel("C", "b", 2, 2).into(),
                ])
                .into(),
        ];
        let g = group_backdrop(&doc, &LayerPath(vec![1])).unwrap();
        assert_eq!(g, composite_prefix(&doc, 1).unwrap());
        assert!(group_backdrop(&doc, &LayerPath::root()).unwrap().is_transparent());
        assert!(matches!(group_backdrop(&doc, &LayerPath(vec![0])), Err(RenderError::Path(DocError::NotAGroup(_)))));
    }

    #[test]
    fn clipped_layer_limited_to_base() {
        let mut clipped = LeafLayer::pixel("c", "", 0, 0);
        clipped.clipped = true;
        let doc = doc_with(vec![
            (LeafLayer::pixel("base", "", 0, 0), solid(2, 2, [0, 0, 0, 255])),
            (clipped, solid(4, 4, [255, 255, 255, 255])),
        ]);
        let out = composite(&doc).unwrap();
        assert_eq!(out.get(0, 0), [255, 255, 255, 255]);
        assert_eq!(out.get(3, 3), [0, 0, 0, 0]);
    }

    #[test]
    fn isolated_group_blends_as_unit() {
        let mut doc = Document::new(2, 1)
            .with_asset(AssetRef::raster("w", solid(2, 1, [200, 200, 200, 255])))
            .with_asset(AssetRef::raster("g", solid(2, 1, [100, 100, 100, 255])));
        let mut inner = LeafLayer::pixel("in", "g", 0, 0);
        inner.blend = BlendMode::Multiply;
        let mut group = GroupNode::new("iso").with_children(vec![inner.into()]);
        group.blend = BlendMode::Normal;
        doc.root.children = vec![LeafLayer::pixel("bg", "w", 0, 0).into(), group.clone().into()];
        // isolated: multiply has no backdrop inside the group, so the gray shows as-is
        assert_eq!(composite(&doc).unwrap().get(0, 0), [100, 100, 100, 255]);
        group.blend = BlendMode::PassThrough;
        doc.root.children[1] = group.into();
        let expect = quantize((200.0 / 255.0) * (100.0 / 255.0));
        assert_eq!(composite(&doc).unwrap().get(0, 0), [expect, expect, expect, 255]);
    }

    #[test]
    fn adjustment_recolors_below() {
        let doc = doc_with(vec![
            (LeafLayer::pixel("p", "", 0, 0), solid(4, 4, [0, 100, 255, 255])),
            (LeafLayer::adjustment("inv", AdjustmentParams::Invert), solid(1, 1, [0; 4])),
        ]);
        assert_eq!(composite(&doc).unwrap().get(0, 0), [255, 155, 0, 255]);
    }

    #[test]
    fn effects_extend_past_content() {
        let mut leaf = LeafLayer::pixel("p", "", 1, 1);
        leaf.effects = vec![Effect::Stroke {
            color: Rgb::new(0, 255, 0),
            width: 1,
        }];
        let doc = doc_with(vec![(leaf, solid(1, 1, [255, 0, 0, 255]))]);
        let out = composite(&doc).unwrap();
        assert_eq!(out.get(1, 1), [255, 0, 0, 255]);
        assert_eq!(out.get(0, 1), [0, 255, 0, 255]);
    }

    #[test]
    fn tiling_does_not_change_bytes() {
        let mut top = LeafLayer::pixel("t", "", 1, 0);
        top.blend = BlendMode::Overlay;
        top.opacity = 77;
        let doc = doc_with(vec![
            (LeafLayer::pixel("b", "", 0, 0), solid(4, 4, [10, 100, 200, 180])),
            (top, solid(3, 4, [200, 50, 25, 230])),
        ]);
        let base = composite(&doc).unwrap();
        for tile_rows in [1, 2, 3, 64] {
            assert_eq!(composite_with(&doc, &RenderOptions { tile_rows }).unwrap(), base);
        }
    }
}
