//! Deterministic synthetic corpus used by tests, the acceptance run and
//! `gen-fixtures`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::doc::{AdjustmentParams, AssetRef, BlendMode, Document, Effect, EffectKind, GroupNode, LayerKind, LeafLayer, Mask, Node, Rgb};
use crate::raster::{Plane, Raster};

/// Fixture families; each stresses a different part of the model.
pub const CLASSES: [&str; 6] = ["flat", "nested", "effects", "masked", "mixed", "large"];
pub const DOCS_PER_CLASS: usize = 5;
const CORPUS_SEED: u64 = 0x5eed_1a7e;

struct Gen {
    rng: ChaCha8Rng,
    doc: Document,
    next_asset: usize,
    class: &'static str,
    /// Leaves made so far; drives the blend and effect sweeps.
    leaves: usize,
}

fn color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.gen(), rng.gen(), rng.gen()]
}

impl Gen {
    fn asset(&mut self, raster: Raster) -> String {
        let id = format!("a{:03}", self.next_asset);
        self.next_asset += 1;
        self.doc = self.doc.with_asset(AssetRef::raster(id.clone(), raster));
        id
    }

    fn pattern(&mut self, w: u32, h: u32) -> Raster {
        let [r, g, b] = color(&mut self.rng);
        let alpha = if self.rng.gen_bool(0.7) { 255 } else { self.rng.gen_range(90..=255) };
        let mut out = Raster::new(w, h);
        let shape = self.rng.gen_range(0..4);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        for y in 0..h {
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                let px = match shape {
                    0 => [r, g, b, alpha],
                    1 => {
                        let d = (((fx - cx) / (cx + 0.5)).powi(2) + ((fy - cy) / (cy + 0.5)).powi(2)).sqrt();
                        let a = ((1.0 - d) * 3.0).clamp(0.0, 1.0);
                        [r, g, b, (a * alpha as f64).round() as u8]
                    }
                    2 => {
                        let t = fx / (w.max(2) - 1) as f64;
                        [(r as f64 * t) as u8, g, (b as f64 * (1.0 - t)) as u8, alpha]
                    }
                    _ => {
                        if (x / 2 + y / 2) % 2 == 0 {
                            [r, g, b, alpha]
                        } else {
                            [g, b, r, alpha / 2]
                        }
                    }
                };
                out.put(x, y, px);
            }
        }
        out
    }

    fn mask(&mut self) -> Mask {
        let (cw, ch) = (self.doc.canvas_width, self.doc.canvas_height);
        let (w, h) = (self.rng.gen_range(cw / 4..=cw), self.rng.gen_range(ch / 4..=ch));
        let mut r = Raster::new(w, h);
        let horizontal = self.rng.gen_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let t = if horizontal { x as f64 / w as f64 } else { y as f64 / h as f64 };
                r.put(x, y, [(t * 255.0) as u8, 0, 0, 255]);
            }
        }
        let bitmap = Arc::new(Plane::from_red_channel(&r));
        let id = self.asset(r);
        Mask {
            x: self.rng.gen_range(-(w as i32) / 4..=(cw - w) as i32 / 2 + 1),
            y: self.rng.gen_range(-(h as i32) / 4..=(ch - h) as i32 / 2 + 1),
            bitmap,
            enabled: true,
            source_asset: Some(id),
        }
    }

    fn effect(&mut self, kind: EffectKind) -> Effect {
        let c = color(&mut self.rng);
        let color = Rgb::new(c[0], c[1], c[2]);
        let opacity = self.rng.gen_range(60..=255);
        match kind {
            EffectKind::DropShadow => Effect::DropShadow {
                color,
                opacity,
                angle: self.rng.gen_range(0..=360),
                distance: self.rng.gen_range(0..=6),
                blur: self.rng.gen_range(0..=3),
            },
            EffectKind::InnerGlow => Effect::InnerGlow {
                color,
                opacity,
                blur: self.rng.gen_range(0..=3),
            },
            EffectKind::ColorOverlay => Effect::ColorOverlay { color, opacity },
            EffectKind::Stroke => Effect::Stroke {
                color,
                width: self.rng.gen_range(1..=3),
            },
        }
    }

    fn leaf(&mut self, clip_base: bool) -> LeafLayer {
        let n = self.leaves;
        self.leaves += 1;
        let (cw, ch) = (self.doc.canvas_width, self.doc.canvas_height);
        let adjust_p = match self.class {
            "mixed" => 0.2,
            "flat" | "effects" => 0.0,
            _ => 0.06,
        };
        let mut leaf = if n > 0 && self.rng.gen_bool(adjust_p) {
            let params = if self.rng.gen_bool(0.5) {
                AdjustmentParams::Invert
            } else {
                AdjustmentParams::BrightnessContrast {
                    brightness: self.rng.gen_range(-60..=60),
                    contrast: self.rng.gen_range(-60..=60),
                }
            };
            LeafLayer::adjustment(format!("adj{n}"), params)
        } else {
            let kind = *[LayerKind::Pixel, LayerKind::Pixel, LayerKind::Shape, LayerKind::Text, LayerKind::SmartObject]
                .choose(&mut self.rng)
                .expect("non-empty");
            let (w, h) = (self.rng.gen_range(4..=cw * 2 / 3), self.rng.gen_range(3..=ch * 2 / 3));
            let raster = self.pattern(w, h);
            let id = self.asset(raster);
            let x = self.rng.gen_range(-(w as i32) / 3..=cw as i32 - w as i32 * 2 / 3);
            let y = self.rng.gen_range(-(h as i32) / 3..=ch as i32 - h as i32 * 2 / 3);
            let mut l = LeafLayer::with_asset(id.clone(), kind, id, x, y);
            if kind == LayerKind::Text {
                l.text_content = Some(format!("Caption {n}"));
            }
            l
        };
        let is_adj = leaf.kind == LayerKind::Adjustment;

        let sweep = matches!(self.class, "flat" | "large");
        leaf.blend = if sweep {
            BlendMode::LAYER_MODES[n % BlendMode::LAYER_MODES.len()]
        } else if self.rng.gen_bool(0.45) {
            *BlendMode::LAYER_MODES.choose(&mut self.rng).expect("non-empty")
        } else {
            BlendMode::Normal
        };
        if self.rng.gen_bool(0.35) {
            leaf.opacity = self.rng.gen_range(40..=254);
        }
        if n > 0 && self.rng.gen_bool(0.07) {
            leaf.visible = false;
        }
        if !is_adj {
            let effect_p = if self.class == "effects" { 0.9 } else { 0.25 };
            if self.class == "effects" {
                // Cycle so every kind appears in every document.
                let k = EffectKind::ALL[n % EffectKind::ALL.len()];
                let e = self.effect(k);
                leaf.effects.push(e);
            }
            for k in EffectKind::ALL {
                if leaf.effect(k).is_none() && self.rng.gen_bool(effect_p / 3.0) {
                    let e = self.effect(k);
                    leaf.effects.push(e);
                }
            }
        }
        let mask_p = if self.class == "masked" { 0.4 } else { 0.08 };
        if self.rng.gen_bool(mask_p) {
            leaf.mask = Some(self.mask());
        }
        let clip_p = if self.class == "masked" { 0.4 } else { 0.12 };
        if clip_base && self.rng.gen_bool(clip_p) {
            leaf.clipped = true;
        }
        leaf
    }

    /// Children holding exactly `budget` leaves.
    fn children(&mut self, budget: usize, depth: usize) -> Vec<Node> {
        let max_depth = match self.class {
            "flat" => 0,
            "nested" => 5,
            "large" => 3,
            _ => 2,
        };
        let mut out: Vec<Node> = Vec::new();
        let mut left = budget;
        while left > 0 {
            let group_p = if self.class == "nested" { 0.45 } else { 0.2 };
            if depth < max_depth && left >= 2 && self.rng.gen_bool(group_p) {
                let take = self.rng.gen_range(1..=left.min(12));
                let g = self.group(take, depth + 1);
                out.push(g.into());
                left -= take;
            } else {
                let base = out.iter().any(|c| !c.clipped());
                let l = self.leaf(base);
                out.push(l.into());
                left -= 1;
            }
        }
        out
    }

    fn group(&mut self, budget: usize, depth: usize) -> GroupNode {
        let name = format!("group{}", self.leaves);
        let children = self.children(budget, depth);
        let mut g = GroupNode::new(name).with_children(children);
        if self.rng.gen_bool(0.5) {
            g.blend = *BlendMode::ALL.choose(&mut self.rng).expect("non-empty");
        }
        if self.rng.gen_bool(0.3) {
            g.opacity = self.rng.gen_range(60..=254);
        }
        if self.rng.gen_bool(0.05) {
            g.visible = false;
        }
        let mask_p = if self.class == "masked" { 0.4 } else { 0.1 };
        if self.rng.gen_bool(mask_p) {
            g.mask = Some(self.mask());
        }
        g
    }
}

/// Fixture `index` of `class`.
pub fn fixture(class: &'static str, index: usize) -> Document {
    let id = format!("{class}-{index:02}");
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&CORPUS_SEED.to_le_bytes());
    for (i, b) in id.bytes().enumerate() {
        seed[8 + i % 24] ^= b;
    }
    build(class, ChaCha8Rng::from_seed(seed))
}

/// A random valid document in the style of `class`.
pub fn generate(class: &'static str, seed: u64) -> Document {
    build(class, ChaCha8Rng::seed_from_u64(seed))
}

fn build(class: &'static str, mut rng: ChaCha8Rng) -> Document {
    let (w, h) = (rng.gen_range(40..=72), rng.gen_range(30..=56));
    let leaves = match class {
        "large" => rng.gen_range(30..=40),
        "flat" => rng.gen_range(3..=10),
        _ => rng.gen_range(6..=16),
    };
    let mut g = Gen {
        rng,
        doc: Document::new(w, h),
        next_asset: 0,
        class,
        leaves: 0,
    };
    let children = g.children(leaves, 0);
    g.doc.root.children = children;
    g.doc
}

/// `doc` reduced to what the PSD subset carries: pixel layers without
/// effects, masks or text, and no adjustment layers.
pub fn psd_subset(doc: &Document) -> Document {
    fn strip(g: &mut GroupNode) {
        g.mask = None;
        g.children.retain(|c| !matches!(c, Node::Leaf(l) if l.kind == LayerKind::Adjustment));
        let mut base = false;
        for c in &mut g.children {
            match c {
                Node::Group(sub) => {
                    strip(sub);
                    base = true;
                }
                Node::Leaf(l) => {
                    l.kind = LayerKind::Pixel;
                    l.effects.clear();
                    l.mask = None;
                    l.text_content = None;
                    l.clipped &= base;
                    base |= !l.clipped;
                }
            }
        }
    }
    let mut out = doc.clone();
    strip(&mut out.root);
    out
}

/// The whole corpus keyed by `<class>-<NN>`.
pub fn corpus() -> BTreeMap<String, Document> {
    CLASSES
        .iter()
        .flat_map(|c| (0..DOCS_PER_CLASS).map(move |i| (format!("{c}-{i:02}"), fixture(c, i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn walk<'a>(nodes: &'a [Node], out: &mut Vec<&'a Node>) {
        for n in nodes {
            out.push(n);
            if let Node::Group(g) = n {
                walk(&g.children, out);
            }
        }
    }

    #[test]
    fn corpus_shape_and_coverage() {
        let docs = corpus();
        assert!(docs.len() >= 25);
        let (mut blends, mut effects, mut kinds) = (BTreeSet::new(), BTreeSet::new(), BTreeSet::new());
        let (mut clipped, mut masked, mut hidden, mut nested) = (0, 0, 0, 0);
        for (id, d) in &docs {
            assert!(d.validate().is_empty(), "{id}: {:?}", d.validate());
            assert!((3..=40).contains(&d.leaf_count()), "{id} has {} leaves", d.leaf_count());
            let mut nodes = Vec::new();
            walk(&d.root.children, &mut nodes);
            for n in nodes {
                blends.insert(n.blend());
                clipped += n.clipped() as usize;
                masked += n.mask().is_some() as usize;
                hidden += !n.visible() as usize;
                match n {
                    Node::Leaf(l) => {
                        kinds.insert(l.kind);
                        effects.extend(l.effects.iter().map(Effect::kind));
                    }
                    Node::Group(g) => nested += g.children.iter().any(|c| matches!(c, Node::Group(_))) as usize,
                }
            }
        }
        assert_eq!(blends.len(), BlendMode::ALL.len());
        assert_eq!(effects.len(), EffectKind::ALL.len());
        assert_eq!(kinds.len(), LayerKind::ALL.len());
        assert!(clipped > 0 && masked > 0 && hidden > 0 && nested > 0);
    }

    #[test]
    fn deterministic() {
        assert_eq!(fixture("mixed", 3), fixture("mixed", 3));
        assert_ne!(fixture("mixed", 3), fixture("mixed", 4));
    }
}
