use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    AdjustmentParams, AssetPayload, Document, Effect, GroupNode, LayerKind, LayerPath, LeafLayer,
    Mask, Node,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    CanvasSize,
    RootAttributes,
    OpacityRange,
    PassThroughOnLeaf,
    KindFieldMismatch,
    DanglingAsset,
    AssetKindMismatch,
    AssetIdMismatch,
    EmptyRaster,
    NoClipBase,
    EffectRange,
    DuplicateEffect,
    EffectsOnAdjustment,
    AdjustmentRange,
    EmptyMask,
    UnknownTool,
    MissingParam,
    UnexpectedParam,
    ParamType,
    ParamRange,
    BadPath,
    WrongTarget,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::CanvasSize => "canvas_size",
            Rule::RootAttributes => "root_attributes",
            Rule::OpacityRange => "opacity_range",
            Rule::PassThroughOnLeaf => "pass_through_on_leaf",
            Rule::KindFieldMismatch => "kind_field_mismatch",
            Rule::DanglingAsset => "dangling_asset",
            Rule::AssetKindMismatch => "asset_kind_mismatch",
            Rule::AssetIdMismatch => "asset_id_mismatch",
            Rule::EmptyRaster => "empty_raster",
            Rule::NoClipBase => "no_clip_base",
            Rule::EffectRange => "effect_range",
            Rule::DuplicateEffect => "duplicate_effect",
            Rule::EffectsOnAdjustment => "effects_on_adjustment",
            Rule::AdjustmentRange => "adjustment_range",
            Rule::EmptyMask => "empty_mask",
            Rule::UnknownTool => "unknown_tool",
            Rule::MissingParam => "missing_param",
            Rule::UnexpectedParam => "unexpected_param",
            Rule::ParamType => "param_type",
            Rule::ParamRange => "param_range",
            Rule::BadPath => "bad_path",
            Rule::WrongTarget => "wrong_target",
        }
    }
}

/// A broken document invariant: which node, which field, which rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: LayerPath,
    pub field: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {}.{}: {}",
            self.rule.name(),
            self.path,
            self.field,
            self.detail
        )
    }
}

pub(crate) fn summarize(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

struct Checker<'a> {
    doc: &'a Document,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn push(&mut self, path: &LayerPath, field: &str, rule: Rule, detail: impl Into<String>) {
        self.out.push(Violation {
            path: path.clone(),
            field: field.to_string(),
            rule,
            detail: detail.into(),
        });
    }

    fn opacity(&mut self, path: &LayerPath, field: &str, value: u16) {
        if value > 255 {
            self.push(path, field, Rule::OpacityRange, format!("{value} exceeds 255"));
        }
    }

    fn raster_asset(&mut self, path: &LayerPath, field: &str, id: &str) {
        match self.doc.asset(id) {
            None => self.push(path, field, Rule::DanglingAsset, format!("asset {id:?} not in asset table")),
            Some(a) if a.as_raster().is_none() => self.push(
                path,
                field,
                Rule::AssetKindMismatch,
                format!("asset {id:?} is not a raster"),
            ),
            Some(_) => {}
        }
    }

    fn mask(&mut self, path: &LayerPath, mask: &Mask) {
        if mask.bitmap.is_empty() {
            self.push(path, "mask", Rule::EmptyMask, "mask bitmap is empty");
        }
        if let Some(id) = &mask.source_asset {
            self.raster_asset(path, "mask.source_asset", id);
        }
    }

    fn effect(&mut self, path: &LayerPath, i: usize, effect: &Effect) {
        let field = format!("effects[{i}]");
        let mut bad = |what: String| self.push(path, &field, Rule::EffectRange, what);
        match *effect {
            Effect::DropShadow { opacity, angle, .. } => {
                if opacity > 255 {
                    bad(format!("opacity {opacity} exceeds 255"));
                }
                if !(0..=360).contains(&angle) {
                    bad(format!("angle {angle} outside 0..=360"));
                }
            }
            Effect::InnerGlow { opacity, .. } | Effect::ColorOverlay { opacity, .. } => {
                if opacity > 255 {
                    bad(format!("opacity {opacity} exceeds 255"));
                }
            }
            Effect::Stroke { width, .. } => {
                if width < 1 {
                    bad("stroke width must be at least 1".into());
                }
            }
        }
    }

    fn leaf(&mut self, path: &LayerPath, leaf: &LeafLayer) {
        self.opacity(path, "opacity", leaf.opacity);
        if leaf.blend == super::BlendMode::PassThrough {
            self.push(path, "blend", Rule::PassThroughOnLeaf, "pass_through is only legal on groups");
        }
        if leaf.kind.has_asset() {
            match &leaf.asset_ref {
                None => self.push(
                    path,
                    "asset_ref",
                    Rule::KindFieldMismatch,
                    format!("{} layer needs an asset", leaf.kind.name()),
                ),
                Some(id) => self.raster_asset(path, "asset_ref", id),
            }
            if leaf.adjustment.is_some() {
                self.push(
                    path,
                    "adjustment",
                    Rule::KindFieldMismatch,
                    "adjustment parameters on a non-adjustment layer",
                );
            }
        } else {
            if leaf.asset_ref.is_some() {
                self.push(path, "asset_ref", Rule::KindFieldMismatch, "adjustment layer carries an asset");
            }
            match leaf.adjustment {
                None => self.push(path, "adjustment", Rule::KindFieldMismatch, "adjustment layer without parameters"),
                Some(AdjustmentParams::BrightnessContrast {
                    brightness,
                    contrast,
                }) => {
                    if !(-100..=100).contains(&brightness) || !(-100..=100).contains(&contrast) {
                        self.push(
                            path,
                            "adjustment",
                            Rule::AdjustmentRange,
                            format!("brightness {brightness} / contrast {contrast} outside -100..=100"),
                        );
                    }
                }
                Some(AdjustmentParams::Invert) => {}
            }
            if !leaf.effects.is_empty() {
                self.push(path, "effects", Rule::EffectsOnAdjustment, "adjustment layers carry no effects");
            }
        }
        if leaf.text_content.is_some() && leaf.kind != LayerKind::Text {
            self.push(path, "text_content", Rule::KindFieldMismatch, "text content on a non-text layer");
        }
        for (i, e) in leaf.effects.iter().enumerate() {
            self.effect(path, i, e);
            if leaf.effects[..i].iter().any(|p| p.kind() == e.kind()) {
                self.push(
                    path,
                    &format!("effects[{i}]"),
                    Rule::DuplicateEffect,
                    format!("second {} effect", e.kind().name()),
                );
            }
        }
        if let Some(m) = &leaf.mask {
            self.mask(path, m);
        }
    }

    fn group(&mut self, path: &LayerPath, group: &GroupNode) {
        self.opacity(path, "opacity", group.opacity);
        if let Some(m) = &group.mask {
            self.mask(path, m);
        }
        let mut base_seen = false;
        for (i, child) in group.children.iter().enumerate() {
            let child_path = path.child(i);
            if child.clipped() {
                if !base_seen {
                    self.push(
                        &child_path,
                        "clipped",
                        Rule::NoClipBase,
                        "no unclipped layer below in the same group",
                    );
                }
            } else {
                base_seen = true;
            }
            match child {
                Node::Leaf(l) => self.leaf(&child_path, l),
                Node::Group(g) => self.group(&child_path, g),
            }
        }
    }
}

pub(super) fn validate(doc: &Document) -> Vec<Violation> {
    let mut c = Checker {
        doc,
        out: Vec::new(),
    };
    let root = LayerPath::root();
    if doc.canvas_width == 0 || doc.canvas_height == 0 {
        c.push(
            &root,
            "canvas",
            Rule::CanvasSize,
            format!("{}x{} canvas", doc.canvas_width, doc.canvas_height),
        );
    }
    if doc.root.blend != super::BlendMode::PassThrough || doc.root.opacity != 255 || doc.root.mask.is_some() {
        c.push(&root, "root", Rule::RootAttributes, "root must be pass_through, opacity 255, unmasked");
    }
    c.group(&root, &doc.root);
    for (key, asset) in &doc.assets {
        if key != &asset.asset_id {
            c.push(
                &root,
                &format!("assets[{key}]"),
                Rule::AssetIdMismatch,
                format!("stored under {key:?} but named {:?}", asset.asset_id),
            );
        }
        if let AssetPayload::Raster(r) = &asset.payload {
            if r.is_empty() {
                c.push(&root, &format!("assets[{key}]"), Rule::EmptyRaster, "raster asset has no pixels");
            }
        }
    }
    c.out
}
