//! The layered document model.
//!
//! A [`Document`] is an immutable value: every edit returns a new document.
//! Children are stored bottom-most first, so `children[0]` is composited
//! first. Leaves and groups are addressed by [`LayerPath`], a list of child
//! indices from the root.

mod edit;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{Plane, Raster};

pub use validate::{Rule, Violation};

/// Bits per channel. Only 8-bit documents are modeled.
pub const DEPTH: u8 = 8;
/// Only RGB documents are modeled.
pub const COLOR_SPACE: &str = "rgb";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocError {
    #[error("path {0} is out of bounds")]
    PathOutOfBounds(LayerPath),
    #[error("node at {0} is not a group")]
    NotAGroup(LayerPath),
    #[error("node at {0} is not a leaf layer")]
    NotALeaf(LayerPath),
    #[error("the root group cannot be removed")]
    CannotRemoveRoot,
    #[error("edit would break document invariants: {}", validate::summarize(.0))]
    InvariantViolation(Vec<Violation>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    Normal,
    Multiply,
    Screen,
    Overlay,
    Darken,
    Lighten,
    LinearDodge,
    Difference,
    PassThrough,
}

impl BlendMode {
    pub const ALL: [BlendMode; 9] = [
        BlendMode::Normal,
        BlendMode::Multiply,
        BlendMode::Screen,
        BlendMode::Overlay,
        BlendMode::Darken,
        BlendMode::Lighten,
        BlendMode::LinearDodge,
        BlendMode::Difference,
        BlendMode::PassThrough,
    ];

    /// Modes legal on leaf layers (everything except pass-through).
    pub const LAYER_MODES: [BlendMode; 8] = [
        BlendMode::Normal,
        BlendMode::Multiply,
        BlendMode::Screen,
        BlendMode::Overlay,
        BlendMode::Darken,
        BlendMode::Lighten,
        BlendMode::LinearDodge,
        BlendMode::Difference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlendMode::Normal => "normal",
            BlendMode::Multiply => "multiply",
            BlendMode::Screen => "screen",
            BlendMode::Overlay => "overlay",
            BlendMode::Darken => "darken",
            BlendMode::Lighten => "lighten",
            BlendMode::LinearDodge => "linear_dodge",
            BlendMode::Difference => "difference",
            BlendMode::PassThrough => "pass_through",
        }
    }

    pub fn from_name(name: &str) -> Option<BlendMode> {
        BlendMode::ALL.into_iter().find(|m| m.name() == name)
    }
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 24-bit color, written as `#RRGGBB`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub fn to_hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }

    pub fn parse_hex(s: &str) -> Option<Rgb> {
        let hex = s.strip_prefix('#')?;
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
        Some(Rgb::new(channel(0)?, channel(2)?, channel(4)?))
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Rgb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Rgb::parse_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("expected #RRGGBB color, got {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    DropShadow,
    InnerGlow,
    ColorOverlay,
    Stroke,
}

impl EffectKind {
    pub const ALL: [EffectKind; 4] = [
        EffectKind::DropShadow,
        EffectKind::InnerGlow,
        EffectKind::ColorOverlay,
        EffectKind::Stroke,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EffectKind::DropShadow => "drop_shadow",
            EffectKind::InnerGlow => "inner_glow",
            EffectKind::ColorOverlay => "color_overlay",
            EffectKind::Stroke => "stroke",
        }
    }
}

/// Layer effect. A layer carries at most one effect of each kind.
///
/// `opacity` is on the 0..=255 byte scale, `angle` in whole degrees measured
/// clockwise from +x in raster coordinates, `distance`/`blur`/`width` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    DropShadow {
        color: Rgb,
        opacity: u16,
        angle: i32,
        distance: u32,
        blur: u32,
    },
    InnerGlow {
        color: Rgb,
        opacity: u16,
        blur: u32,
    },
    ColorOverlay {
        color: Rgb,
        opacity: u16,
    },
    Stroke {
        color: Rgb,
        width: u32,
    },
}

impl Effect {
    pub fn kind(&self) -> EffectKind {
        match self {
            Effect::DropShadow { .. } => EffectKind::DropShadow,
            Effect::InnerGlow { .. } => EffectKind::InnerGlow,
            Effect::ColorOverlay { .. } => EffectKind::ColorOverlay,
            Effect::Stroke { .. } => EffectKind::Stroke,
        }
    }
}

/// Layer mask placed on the canvas at `(x, y)`. Outside its bitmap the mask
/// reveals fully. `source_asset` names the raster asset the bitmap was taken
/// from, when known, so the mask can be re-attached by tool call.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    pub x: i32,
    pub y: i32,
    pub bitmap: Arc<Plane>,
    pub enabled: bool,
    pub source_asset: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdjustmentParams {
    BrightnessContrast { brightness: i32, contrast: i32 },
    Invert,
}

impl AdjustmentParams {
    pub fn kind_name(&self) -> &'static str {
        match self {
            AdjustmentParams::BrightnessContrast { .. } => "brightness_contrast",
            AdjustmentParams::Invert => "invert",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Pixel,
    Text,
    Shape,
    Adjustment,
    SmartObject,
}

impl LayerKind {
    pub const ALL: [LayerKind; 5] = [
        LayerKind::Pixel,
        LayerKind::Text,
        LayerKind::Shape,
        LayerKind::Adjustment,
        LayerKind::SmartObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Pixel => "pixel",
            LayerKind::Text => "text",
            LayerKind::Shape => "shape",
            LayerKind::Adjustment => "adjustment",
            LayerKind::SmartObject => "smart_object",
        }
    }

    /// Kinds rendered from a raster asset.
    pub fn has_asset(self) -> bool {
        self != LayerKind::Adjustment
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LeafLayer {
    pub name: String,
    pub kind: LayerKind,
    pub x: i32,
    pub y: i32,
    pub asset_ref: Option<String>,
    pub text_content: Option<String>,
    pub adjustment: Option<AdjustmentParams>,
    pub opacity: u16,
    pub blend: BlendMode,
    pub visible: bool,
    pub clipped: bool,
    pub mask: Option<Mask>,
    pub effects: Vec<Effect>,
}

impl LeafLayer {
    /// A visible, fully opaque, normal-blend layer of `kind` referencing `asset_id`.
    pub fn with_asset(name: impl Into<String>, kind: LayerKind, asset_id: impl Into<String>, x: i32, y: i32) -> Self {
        LeafLayer {
            name: name.into(),
            kind,
            x,
            y,
            asset_ref: Some(asset_id.into()),
            text_content: None,
            adjustment: None,
            opacity: 255,
            blend: BlendMode::Normal,
            visible: true,
            clipped: false,
            mask: None,
            effects: Vec::new(),
        }
    }

    pub fn pixel(name: impl Into<String>, asset_id: impl Into<String>, x: i32, y: i32) -> Self {
        LeafLayer::with_asset(name, LayerKind::Pixel, asset_id, x, y)
    }

    pub fn adjustment(name: impl Into<String>, params: AdjustmentParams) -> Self {
        LeafLayer {
            name: name.into(),
            kind: LayerKind::Adjustment,
            x: 0,
            y: 0,
            asset_ref: None,
            text_content: None,
            adjustment: Some(params),
            opacity: 255,
            blend: BlendMode::Normal,
            visible: true,
            clipped: false,
            mask: None,
            effects: Vec::new(),
        }
    }

    pub fn effect(&self, kind: EffectKind) -> Option<&Effect> {
        self.effects.iter().find(|e| e.kind() == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupNode {
    pub name: String,
    pub children: Vec<Node>,
    pub blend: BlendMode,
    pub opacity: u16,
    pub visible: bool,
    pub mask: Option<Mask>,
}

impl GroupNode {
    /// Empty pass-through group at full opacity.
    pub fn new(name: impl Into<String>) -> Self {
        GroupNode {
            name: name.into(),
            children: Vec::new(),
            blend: BlendMode::PassThrough,
            opacity: 255,
            visible: true,
            mask: None,
        }
    }

    pub fn with_children(mut self, children: Vec<Node>) -> Self {
        self.children = children;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Group(GroupNode),
    Leaf(LeafLayer),
}

impl Node {
    pub fn name(&self) -> &str {
        match self {
            Node::Group(g) => &g.name,
            Node::Leaf(l) => &l.name,
        }
    }

    pub fn opacity(&self) -> u16 {
        match self {
            Node::Group(g) => g.opacity,
            Node::Leaf(l) => l.opacity,
        }
    }

    pub fn blend(&self) -> BlendMode {
        match self {
            Node::Group(g) => g.blend,
            Node::Leaf(l) => l.blend,
        }
    }

    pub fn visible(&self) -> bool {
        match self {
            Node::Group(g) => g.visible,
            Node::Leaf(l) => l.visible,
        }
    }

    pub fn mask(&self) -> Option<&Mask> {
        match self {
            Node::Group(g) => g.mask.as_ref(),
            Node::Leaf(l) => l.mask.as_ref(),
        }
    }

    /// Groups never carry a clip flag.
    pub fn clipped(&self) -> bool {
        matches!(self, Node::Leaf(l) if l.clipped)
    }

    pub fn as_group(&self) -> Option<&GroupNode> {
        match self {
            Node::Group(g) => Some(g),
            Node::Leaf(_) => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&LeafLayer> {
        match self {
            Node::Leaf(l) => Some(l),
            Node::Group(_) => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::Group(g) => g.children.iter().map(Node::leaf_count).sum(),
        }
    }
}

impl From<LeafLayer> for Node {
    fn from(l: LeafLayer) -> Self {
        Node::Leaf(l)
    }
}

impl From<GroupNode> for Node {
    fn from(g: GroupNode) -> Self {
        Node::Group(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    Raster,
    Text,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AssetPayload {
    Raster(Raster),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AssetRef {
    pub asset_id: String,
    pub payload: AssetPayload,
    pub source_uri: Option<String>,
}

impl AssetRef {
    pub fn raster(asset_id: impl Into<String>, raster: Raster) -> Self {
        AssetRef {
            asset_id: asset_id.into(),
            payload: AssetPayload::Raster(raster),
            source_uri: None,
        }
    }

    pub fn text(asset_id: impl Into<String>, text: impl Into<String>) -> Self {
        AssetRef {
            asset_id: asset_id.into(),
            payload: AssetPayload::Text(text.into()),
            source_uri: None,
        }
    }

    pub fn kind(&self) -> AssetKind {
        match self.payload {
            AssetPayload::Raster(_) => AssetKind::Raster,
            AssetPayload::Text(_) => AssetKind::Text,
        }
    }

    pub fn as_raster(&self) -> Option<&Raster> {
        match &self.payload {
            AssetPayload::Raster(r) => Some(r),
            AssetPayload::Text(_) => None,
        }
    }
}

/// Child indices from the root. The empty path addresses the root group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerPath(pub Vec<usize>);

impl LayerPath {
    pub fn root() -> Self {
        LayerPath(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn child(&self, index: usize) -> LayerPath {
        let mut v = self.0.clone();
        v.push(index);
        LayerPath(v)
    }

    /// Parent path and index within the parent; `None` for the root.
    pub fn split_last(&self) -> Option<(LayerPath, usize)> {
        let (&last, rest) = self.0.split_last()?;
        Some((LayerPath(rest.to_vec()), last))
    }

    pub fn parent(&self) -> Option<LayerPath> {
        self.split_last().map(|(p, _)| p)
    }

    pub fn starts_with(&self, prefix: &LayerPath) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl From<Vec<usize>> for LayerPath {
    fn from(v: Vec<usize>) -> Self {
        LayerPath(v)
    }
}

impl fmt::Display for LayerPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub root: GroupNode,
    pub assets: BTreeMap<String, Arc<AssetRef>>,
}

impl Document {
    /// Empty document: pass-through root, no assets.
    pub fn new(canvas_width: u32, canvas_height: u32) -> Self {
        Document {
            canvas_width,
            canvas_height,
            root: GroupNode::new("root"),
            assets: BTreeMap::new(),
        }
    }

    pub fn asset(&self, id: &str) -> Option<&AssetRef> {
        self.assets.get(id).map(|a| a.as_ref())
    }

    /// Returns a document whose asset table also holds `asset`, replacing any
    /// asset with the same id.
    pub fn with_asset(&self, asset: AssetRef) -> Document {
        let mut doc = self.clone();
        doc.assets.insert(asset.asset_id.clone(), Arc::new(asset));
        doc
    }

    pub fn leaf_count(&self) -> usize {
        self.root.children.iter().map(Node::leaf_count).sum()
    }

    /// The root addressed as a node.
    pub fn root_node(&self) -> Node {
        Node::Group(self.root.clone())
    }

    pub fn resolve(&self, path: &LayerPath) -> Result<NodeRef<'_>, DocError> {
        let mut group = &self.root;
        let mut node: Option<&Node> = None;
        for (depth, &i) in path.0.iter().enumerate() {
            if depth > 0 {
                group = match node {
                    Some(Node::Group(g)) => g,
                    _ => return Err(DocError::PathOutOfBounds(path.clone())),
                };
            }
            node = Some(
                group
                    .children
                    .get(i)
                    .ok_or_else(|| DocError::PathOutOfBounds(path.clone()))?,
            );
        }
        Ok(match node {
            None => NodeRef::Group(&self.root),
            Some(Node::Group(g)) => NodeRef::Group(g),
            Some(Node::Leaf(l)) => NodeRef::Leaf(l),
        })
    }

    pub fn resolve_group(&self, path: &LayerPath) -> Result<&GroupNode, DocError> {
        match self.resolve(path)? {
            NodeRef::Group(g) => Ok(g),
            NodeRef::Leaf(_) => Err(DocError::NotAGroup(path.clone())),
        }
    }

    pub fn resolve_leaf(&self, path: &LayerPath) -> Result<&LeafLayer, DocError> {
        match self.resolve(path)? {
            NodeRef::Leaf(l) => Ok(l),
            NodeRef::Group(_) => Err(DocError::NotALeaf(path.clone())),
        }
    }

    /// Leaf paths in render order: depth-first from the bottom child upward,
    /// descending into each group before moving to its next sibling.
    pub fn traversal_order(&self) -> Vec<LayerPath> {
        fn walk(group: &GroupNode, prefix: &mut Vec<usize>, out: &mut Vec<LayerPath>) {
            for (i, child) in group.children.iter().enumerate() {
                prefix.push(i);
                match child {
                    Node::Leaf(_) => out.push(LayerPath(prefix.clone())),
                    Node::Group(g) => walk(g, prefix, out),
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Position of `leaf` in [`Document::traversal_order`].
    pub fn step_of(&self, leaf: &LayerPath) -> Option<usize> {
        self.traversal_order().iter().position(|p| p == leaf)
    }

    /// Number of leaves that precede the subtree at `path` in traversal order.
    pub fn leaves_before(&self, path: &LayerPath) -> usize {
        self.traversal_order()
            .iter()
            .take_while(|p| !p.starts_with(path) && p < &path)
            .count()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate::validate(self)
    }

    /// Structural equality that compares referenced assets by payload rather
    /// than by id. Asset tables themselves are not compared.
    pub fn content_eq(&self, other: &Document) -> bool {
        fn leaf_eq(a: &LeafLayer, da: &Document, b: &LeafLayer, db: &Document) -> bool {
            let asset_eq = match (&a.asset_ref, &b.asset_ref) {
                (None, None) => true,
                (Some(x), Some(y)) => match (da.asset(x), db.asset(y)) {
                    (Some(ax), Some(ay)) => ax.payload == ay.payload,
                    _ => false,
                },
                _ => false,
            };
            asset_eq
                && a.name == b.name
                && a.kind == b.kind
                && a.x == b.x
                && a.y == b.y
                && a.text_content == b.text_content
                && a.adjustment == b.adjustment
                && a.opacity == b.opacity
                && a.blend == b.blend
                && a.visible == b.visible
                && a.clipped == b.clipped
                && a.mask == b.mask
                && a.effects == b.effects
        }
        fn group_eq(a: &GroupNode, da: &Document, b: &GroupNode, db: &Document) -> bool {
            a.name == b.name
                && a.blend == b.blend
                && a.opacity == b.opacity
                && a.visible == b.visible
                && a.mask == b.mask
                && a.children.len() == b.children.len()
                && a.children.iter().zip(&b.children).all(|pair| match pair {
                    (Node::Group(x), Node::Group(y)) => group_eq(x, da, y, db),
                    (Node::Leaf(x), Node::Leaf(y)) => leaf_eq(x, da, y, db),
                    _ => false,
                })
        }
        self.canvas_width == other.canvas_width
            && self.canvas_height == other.canvas_height
            && group_eq(&self.root, self, &other.root, other)
    }

    /// SHA-256 over every field of the document, including asset payloads.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"layerkit-doc-v1");
        h.update(self.canvas_width.to_be_bytes());
        h.update(self.canvas_height.to_be_bytes());
        feed_group(&mut h, &self.root);
        h.update((self.assets.len() as u64).to_be_bytes());
        for (id, asset) in &self.assets {
            feed_str(&mut h, id);
            feed_opt_str(&mut h, asset.source_uri.as_deref());
            match &asset.payload {
                AssetPayload::Raster(r) => {
                    h.update([0u8]);
                    h.update(r.width().to_be_bytes());
                    h.update(r.height().to_be_bytes());
                    h.update(r.pixels());
                }
                AssetPayload::Text(t) => {
                    h.update([1u8]);
                    feed_str(&mut h, t);
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Borrowed view of a resolved node; the root resolves to a group view.
#[derive(Clone, Copy, Debug)]
pub enum NodeRef<'a> {
    Group(&'a GroupNode),
    Leaf(&'a LeafLayer),
}

impl<'a> NodeRef<'a> {
    pub fn name(&self) -> &'a str {
        match self {
            NodeRef::Group(g) => &g.name,
            NodeRef::Leaf(l) => &l.name,
        }
    }

    pub fn as_leaf(&self) -> Option<&'a LeafLayer> {
        match self {
            NodeRef::Leaf(l) => Some(l),
            NodeRef::Group(_) => None,
        }
    }

    pub fn as_group(&self) -> Option<&'a GroupNode> {
        match self {
            NodeRef::Group(g) => Some(g),
            NodeRef::Leaf(_) => None,
        }
    }

    pub fn to_node(&self) -> Node {
        match self {
            NodeRef::Group(g) => Node::Group((*g).clone()),
            NodeRef::Leaf(l) => Node::Leaf((*l).clone()),
        }
    }
}

fn feed_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_be_bytes());
    h.update(s.as_bytes());
}

fn feed_opt_str(h: &mut Sha256, s: Option<&str>) {
    match s {
        None => h.update([0u8]),
        Some(s) => {
            h.update([1u8]);
            feed_str(h, s);
        }
    }
}

fn feed_mask(h: &mut Sha256, mask: Option<&Mask>) {
    match mask {
        None => h.update([0u8]),
        Some(m) => {
            h.update([1u8]);
            h.update(m.x.to_be_bytes());
            h.update(m.y.to_be_bytes());
            h.update([m.enabled as u8]);
            h.update(m.bitmap.width().to_be_bytes());
            h.update(m.bitmap.height().to_be_bytes());
            h.update(m.bitmap.data());
            feed_opt_str(h, m.source_asset.as_deref());
        }
    }
}

fn feed_group(h: &mut Sha256, g: &GroupNode) {
    h.update(b"G");
    feed_str(h, &g.name);
    feed_str(h, g.blend.name());
    h.update(g.opacity.to_be_bytes());
    h.update([g.visible as u8]);
    feed_mask(h, g.mask.as_ref());
    h.update((g.children.len() as u64).to_be_bytes());
    for child in &g.children {
        match child {
            Node::Group(c) => feed_group(h, c),
            Node::Leaf(l) => feed_leaf(h, l),
        }
    }
}

fn feed_leaf(h: &mut Sha256, l: &LeafLayer) {
    h.update(b"L");
    feed_str(h, &l.name);
    feed_str(h, l.kind.name());
    h.update(l.x.to_be_bytes());
    h.update(l.y.to_be_bytes());
    feed_opt_str(h, l.asset_ref.as_deref());
    feed_opt_str(h, l.text_content.as_deref());
    match l.adjustment {
        None => h.update([0u8]),
        Some(AdjustmentParams::Invert) => h.update([1u8]),
        Some(AdjustmentParams::BrightnessContrast {
            brightness,
            contrast,
        }) => {
            h.update([2u8]);
            h.update(brightness.to_be_bytes());
            h.update(contrast.to_be_bytes());
        }
    }
    h.update(l.opacity.to_be_bytes());
    feed_str(h, l.blend.name());
    h.update([l.visible as u8, l.clipped as u8]);
    feed_mask(h, l.mask.as_ref());
    h.update((l.effects.len() as u64).to_be_bytes());
    for e in &l.effects {
        // serde_json of a plain enum cannot fail
        feed_str(h, &serde_json::to_string(e).expect("effect serializes"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot_asset(id: &str) -> AssetRef {
        AssetRef::raster(id, Raster::filled(2, 2, [200, 10, 10, 255]))
    }

    /// root = [leaf A, group(leaf B, leaf C), leaf D]
    fn fixture() -> Document {
        let mut doc = Document::new(8, 8);
        for id in ["a", "b", "c", "d"] {
            doc = doc.with_asset(dot_asset(id));
        }
        doc.root.children = vec![
            LeafLayer::pixel("A", "a", 0, 0).into(),
            GroupNode::new("G")
                .with_children(vec![
                    LeafLayer::pixel("B", "b", 1, 1).into(),
                    LeafLayer::pixel("C", "c", 2, 2).into(),
                ])
                .into(),
            LeafLayer::pixel("D", "d", 3, 3).into(),
        ];
        doc
    }

    #[test]
    fn resolve_direct_and_root() {
        let doc = fixture();
        assert_eq!(doc.resolve(&LayerPath(vec![1])).unwrap().name(), "G");
        assert_eq!(doc.resolve(&LayerPath::root()).unwrap().name(), "root");
        assert_eq!(doc.resolve(&LayerPath(vec![1, 1])).unwrap().name(), "C");
    }

    #[test]
    fn resolve_nested_third_child() {
        let mut doc = fixture();
        let Node::Group(g) = &mut doc.root.children[1] else { unreachable!() };
        g.children.push(LeafLayer::pixel("E", "a", 0, 0).into());
        doc.root.children.swap(0, 1);
        assert_eq!(doc.resolve(&LayerPath(vec![0, 2])).unwrap().name(), "E");
    }

    #[test]
    fn resolve_out_of_bounds() {
        let doc = fixture();
        assert_eq!(
            doc.resolve(&LayerPath(vec![3])).unwrap_err(),
            DocError::PathOutOfBounds(LayerPath(vec![3]))
        );
        // descending through a leaf
        assert!(doc.resolve(&LayerPath(vec![0, 0])).is_err());
    }

    #[test]
    fn traversal_matches_hand_trace() {
        let doc = fixture();
        let names: Vec<_> = doc
            .traversal_order()
            .iter()
            .map(|p| doc.resolve(p).unwrap().name().to_string())
            .collect();
        assert_eq!(names, ["A", "B", "C", "D"]);
        assert!(Document::new(4, 4).traversal_order().is_empty());
    }

    #[test]
    fn traversal_single_deep_leaf() {
        let mut doc = Document::new(4, 4).with_asset(dot_asset("x"));
        doc.root.children = vec![GroupNode::new("outer")
            .with_children(vec![GroupNode::new("inner")
                .with_children(vec![LeafLayer::pixel("X", "x", 0, 0).into()])
                .into()])
            .into()];
        assert_eq!(doc.traversal_order(), vec![LayerPath(vec![0, 0, 0])]);
    }

    #[test]
    fn leaves_before_counts_preceding_subtrees() {
        let doc = fixture();
        assert_eq!(doc.leaves_before(&LayerPath(vec![1])), 1);
        assert_eq!(doc.leaves_before(&LayerPath(vec![2])), 3);
        assert_eq!(doc.leaves_before(&LayerPath::root()), 0);
    }

    #[test]
    fn digest_changes_with_any_field() {
        let doc = fixture();
        let mut other = doc.clone();
        let Node::Leaf(l) = &mut other.root.children[0] else { unreachable!() };
        l.opacity = 254;
        assert_ne!(doc.digest(), other.digest());
        assert_eq!(doc.digest(), fixture().digest());
    }

    #[test]
    fn hex_colors() {
        assert_eq!(Rgb::new(255, 0, 16).to_hex(), "#FF0010");
        assert_eq!(Rgb::parse_hex("#ff0010"), Some(Rgb::new(255, 0, 16)));
        assert_eq!(Rgb::parse_hex("ff0010"), None);
        assert_eq!(Rgb::parse_hex("#ff00"), None);
    }
}
