use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{BlendMode, Document, Effect, LayerKind, LayerPath, Node};
use crate::render;
use crate::tools::{effect_call, ToolCall};

use super::{sub_seed, DatasetError};

/// Attribute families a distortion may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Position,
    Opacity,
    Blend,
    Visibility,
    Effect,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Position,
        Attribute::Opacity,
        Attribute::Blend,
        Attribute::Visibility,
        Attribute::Effect,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionConfig {
    /// Upper bound on (layer, attribute) pairs changed at once.
    pub max_edits: usize,
    /// Minimum Euclidean length of a position offset, in pixels.
    pub min_offset: u32,
    /// Offsets are drawn per axis from +-(fraction x canvas size).
    pub max_offset_fraction: f64,
    /// Minimum opacity change, on the 0..=255 scale. At most 127.
    pub min_opacity_delta: u16,
    pub attributes: Vec<Attribute>,
    /// Redraws allowed when a draw leaves the render unchanged.
    pub max_attempts: usize,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        DistortionConfig {
            max_edits: 2,
            min_offset: 8,
            max_offset_fraction: 0.25,
            min_opacity_delta: 40,
            attributes: Attribute::ALL.to_vec(),
            max_attempts: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrValue {
    Position { x: i32, y: i32 },
    Opacity(u16),
    Blend(BlendMode),
    Visibility(bool),
    Effect(Effect),
}

impl AttrValue {
    /// `position`, `opacity`, `blend`, `visibility` or `effect:<kind>`.
    pub fn attribute_name(&self) -> String {
        match self {
            AttrValue::Position { .. } => "position".into(),
            AttrValue::Opacity(_) => "opacity".into(),
            AttrValue::Blend(_) => "blend".into(),
            AttrValue::Visibility(_) => "visibility".into(),
            AttrValue::Effect(e) => format!("effect:{}", e.kind().name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionEntry {
    pub path: LayerPath,
    pub attribute: String,
    pub original_value: AttrValue,
    pub distorted_value: AttrValue,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionRecord {
    /// Sorted by (path, attribute).
    pub entries: Vec<DistortionEntry>,
    /// Draws made, including the accepted one.
    pub attempts: usize,
}

fn opacity_away(rng: &mut ChaCha8Rng, o: u16, min_delta: u16) -> u16 {
    let o = o.min(255);
    let mut sides = Vec::with_capacity(2);
    if o + min_delta <= 255 {
        sides.push((o + min_delta, 255));
    }
    if o >= min_delta {
        sides.push((0, o - min_delta));
    }
    let &(lo, hi) = sides.choose(rng).expect("min_opacity_delta <= 127 leaves a side");
    rng.gen_range(lo..=hi)
}

struct Draw<'a> {
    doc: &'a Document,
    cfg: &'a DistortionConfig,
}

impl Draw<'_> {
    fn offset_range(&self) -> (i64, i64) {
        let f = self.cfg.max_offset_fraction;
        (
            (self.doc.canvas_width as f64 * f).floor() as i64,
            (self.doc.canvas_height as f64 * f).floor() as i64,
        )
    }

    fn position_feasible(&self) -> bool {
        let (rx, ry) = self.offset_range();
        let min = self.cfg.min_offset as i64;
        rx * rx + ry * ry >= min * min
    }

    fn value(&self, rng: &mut ChaCha8Rng, original: &AttrValue) -> AttrValue {
        let min_delta = self.cfg.min_opacity_delta;
        match *original {
            AttrValue::Position { x, y } => {
                let (rx, ry) = self.offset_range();
                let min = self.cfg.min_offset as i64;
                let (mut dx, mut dy) = (rx, ry);
                for _ in 0..64 {
                    let (cx, cy) = (rng.gen_range(-rx..=rx), rng.gen_range(-ry..=ry));
                    if cx * cx + cy * cy >= min * min {
                        (dx, dy) = (cx, cy);
                        break;
                    }
                }
                AttrValue::Position {
                    x: (x as i64 + dx).clamp(i32::MIN as i64, i32::MAX as i64) as i32,
                    y: (y as i64 + dy).clamp(i32::MIN as i64, i32::MAX as i64) as i32,
                }
            }
            AttrValue::Opacity(o) => AttrValue::Opacity(opacity_away(rng, o, min_delta)),
            AttrValue::Blend(b) => {
                let others: Vec<BlendMode> = BlendMode::LAYER_MODES.iter().copied().filter(|m| *m != b).collect();
                AttrValue::Blend(*others.choose(rng).expect("several layer modes"))
            }
            AttrValue::Visibility(v) => AttrValue::Visibility(!v),
            AttrValue::Effect(e) => AttrValue::Effect(match e {
                Effect::DropShadow {
                    color,
                    opacity,
                    angle,
                    distance,
                    blur,
                } => Effect::DropShadow {
                    color,
                    opacity: opacity_away(rng, opacity, min_delta),
                    angle,
                    distance,
                    blur,
                },
                Effect::InnerGlow { color, opacity, blur } => Effect::InnerGlow {
                    color,
                    opacity: opacity_away(rng, opacity, min_delta),
                    blur,
                },
                Effect::ColorOverlay { color, opacity } => Effect::ColorOverlay {
                    color,
                    opacity: opacity_away(rng, opacity, min_delta),
                },
                Effect::Stroke { color, width } => {
                    let hi = (width + 10).clamp(20, 100);
                    let mut w = rng.gen_range(1..=hi - 1);
                    if w >= width {
                        w += 1;
                    }
                    Effect::Stroke { color, width: w }
                }
            }),
        }
    }
}

/// Candidate (path, current value) pairs: the leaf and its earlier leaf
/// siblings in the same group.
fn candidates(doc: &Document, leaf: &LayerPath, draw: &Draw) -> Result<Vec<(LayerPath, AttrValue)>, DatasetError> {
    let (parent, index) = leaf.split_last().ok_or_else(|| DatasetError::PathNotALeaf(leaf.clone()))?;
    doc.resolve_leaf(leaf)?;
    let group = doc.resolve_group(&parent)?;
    let on = |a: Attribute| draw.cfg.attributes.contains(&a);
    let mut out = Vec::new();
    for (i, child) in group.children.iter().enumerate().take(index + 1) {
        let Node::Leaf(l) = child else { continue };
        let path = parent.child(i);
        if on(Attribute::Position) && l.kind != LayerKind::Adjustment && draw.position_feasible() {
            out.push((path.clone(), AttrValue::Position { x: l.x, y: l.y }));
        }
        if on(Attribute::Opacity) {
            out.push((path.clone(), AttrValue::Opacity(l.opacity)));
        }
        if on(Attribute::Blend) {
            out.push((path.clone(), AttrValue::Blend(l.blend)));
        }
        if on(Attribute::Visibility) {
            out.push((path.clone(), AttrValue::Visibility(l.visible)));
        }
        if on(Attribute::Effect) {
            out.extend(l.effects.iter().map(|e| (path.clone(), AttrValue::Effect(*e))));
        }
    }
    Ok(out)
}

fn set(doc: &Document, path: &LayerPath, value: &AttrValue) -> Result<Document, DatasetError> {
    Ok(doc.update_node(path, |n| {
        let Node::Leaf(l) = n else { unreachable!("candidates are leaves") };
        match value {
            AttrValue::Position { x, y } => (l.x, l.y) = (*x, *y),
            AttrValue::Opacity(o) => l.opacity = *o,
            AttrValue::Blend(b) => l.blend = *b,
            AttrValue::Visibility(v) => l.visible = *v,
            AttrValue::Effect(e) => {
                if let Some(slot) = l.effects.iter_mut().find(|x| x.kind() == e.kind()) {
                    *slot = *e;
                }
            }
        }
        Ok(())
    })?)
}

/// Seeded perturbation of `leaf` and its earlier siblings. Draws that leave
/// the render through `leaf` unchanged are discarded and redrawn, up to
/// `config.max_attempts` times.
pub fn distort(doc: &Document, leaf: &LayerPath, seed: u64, config: &DistortionConfig) -> Result<(Document, DistortionRecord), DatasetError> {
    let draw = Draw { doc, cfg: config };
    let pool = candidates(doc, leaf, &draw)?;
    if pool.is_empty() || config.max_edits == 0 {
        return Err(DatasetError::NothingToDistort(leaf.clone()));
    }
    let path_bytes: Vec<u8> = leaf.0.iter().flat_map(|i| (*i as u64).to_le_bytes()).collect();
    let mut rng = ChaCha8Rng::from_seed(sub_seed(seed, &[&path_bytes]));
    let step = doc.step_of(leaf).expect("leaf resolved");
    let before = render::composite_prefix(doc, step + 1)?;

    for attempt in 1..=config.max_attempts.max(1) {
        let n = rng.gen_range(1..=config.max_edits.min(pool.len()));
        let mut picked: Vec<&(LayerPath, AttrValue)> = pool.choose_multiple(&mut rng, n).collect();
        picked.sort_by(|a, b| (&a.0, a.1.attribute_name()).cmp(&(&b.0, b.1.attribute_name())));
        let mut out = doc.clone();
        let mut entries = Vec::with_capacity(n);
        for (path, original) in picked {
            let distorted = draw.value(&mut rng, original);
            out = set(&out, path, &distorted)?;
            entries.push(DistortionEntry {
                path: path.clone(),
                attribute: original.attribute_name(),
                original_value: original.clone(),
                distorted_value: distorted,
            });
        }
        if render::composite_prefix(&out, step + 1)? != before {
            return Ok((out, DistortionRecord { entries, attempts: attempt }));
        }
    }
    Err(DatasetError::NothingToDistort(leaf.clone()))
}

/// One absolute-set call per entry restoring its original value, ordered
/// by (path, attribute).
pub fn derive_edt_calls(record: &DistortionRecord) -> Result<Vec<ToolCall>, DatasetError> {
    let mut entries: Vec<&DistortionEntry> = record.entries.iter().collect();
    entries.sort_by(|a, b| (&a.path, &a.attribute).cmp(&(&b.path, &b.attribute)));
    Ok(entries
        .into_iter()
        .map(|e| {
            let layer = e.path.clone();
            match &e.original_value {
                AttrValue::Position { x, y } => ToolCall::new("set_position").with("layer", layer).with("x", *x).with("y", *y),
                AttrValue::Opacity(o) => ToolCall::new("set_opacity").with("layer", layer).with("value", *o),
                AttrValue::Blend(b) => ToolCall::new("set_blend_mode").with("layer", layer).with_enum("mode", b.name()),
                AttrValue::Visibility(v) => ToolCall::new("set_visibility").with("layer", layer).with("flag", *v),
                AttrValue::Effect(eff) => effect_call(&layer, eff),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::{AssetRef, LeafLayer, Rgb};
    use crate::raster::Raster;

    fn doc() -> Document {
        let mut d = Document::new(64, 48)
            .with_asset(AssetRef::raster("a", Raster::filled(10, 10, [250, 0, 0, 255])))
            .with_asset(AssetRef::raster("b", Raster::filled(8, 12, [0, 0, 250, 200])));
        let mut b = LeafLayer::pixel("b", "b", 20, 10);
        b.effects.push(Effect::Stroke { color: Rgb::BLACK, width: 3 });
        d.root.children = vec![LeafLayer::pixel("a", "a", 5, 5).into(), b.into()];
        d
    }

    #[test]
    fn deterministic_per_seed() {
        let d = doc();
        let leaf = LayerPath(vec![1]);
        let cfg = DistortionConfig::default();
        assert_eq!(distort(&d, &leaf, 7, &cfg).unwrap(), distort(&d, &leaf, 7, &cfg).unwrap());
    }

    #[test]
    fn floors_hold() {
        let d = doc();
        let cfg = DistortionConfig::default();
        for seed in 0..200 {
            let (_, rec) = distort(&d, &LayerPath(vec![1]), seed, &cfg).unwrap();
            assert!((1..=2).contains(&rec.entries.len()));
            for e in &rec.entries {
                assert_ne!(e.original_value, e.distorted_value);
                match (&e.original_value, &e.distorted_value) {
                    (AttrValue::Position { x, y }, AttrValue::Position { x: x2, y: y2 }) => {
                        let (dx, dy) = ((x2 - x) as i64, (y2 - y) as i64);
                        assert!(dx * dx + dy * dy >= 64);
                        assert!(dx.abs() <= 16 && dy.abs() <= 12);
                    }
                    (AttrValue::Opacity(a), AttrValue::Opacity(b)) => assert!(a.abs_diff(*b) >= 40),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn position_only_recovers_with_one_call() {
        let d = doc();
        let cfg = DistortionConfig {
            attributes: vec![Attribute::Position],
            max_edits: 1,
            ..Default::default()
        };
        let (_, rec) = distort(&d, &LayerPath(vec![0]), 3, &cfg).unwrap();
        let calls = derive_edt_calls(&rec).unwrap();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].tool, "set_position");
        assert_eq!(calls[0].get("x"), Some(&crate::tools::ParamValue::Int(5)));
        assert!(derive_edt_calls(&DistortionRecord::default()).unwrap().is_empty());
    }

    #[test]
    fn nothing_to_distort() {
        let d = doc();
        let cfg = DistortionConfig {
            attributes: vec![],
            ..Default::default()
        };
        assert!(matches!(distort(&d, &LayerPath(vec![1]), 0, &cfg), Err(DatasetError::NothingToDistort(_))));
    }
}
