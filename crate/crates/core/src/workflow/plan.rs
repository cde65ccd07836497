use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::doc::{AdjustmentParams, AssetPayload, AssetRef, BlendMode, Document, GroupNode, LayerKind, LayerPath, Node};
use crate::raster::Raster;
use crate::tools::ToolCall;

use super::WorkflowError;

pub const PLAN_FILE: &str = "plan.json";
pub const PLAN_FORMAT_VERSION: u32 = 1;

/// One asset to integrate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanItem {
    pub label: String,
    pub kind: LayerKind,
    /// Absent only for adjustment items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<AdjustmentParams>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanMask {
    pub asset_id: String,
    pub x: i32,
    pub y: i32,
}

/// A concept: a labelled group with its own compositing attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanGroup {
    pub label: String,
    #[serde(default = "pass_through")]
    pub blend: BlendMode,
    #[serde(default = "full")]
    pub opacity: u16,
    #[serde(default = "yes")]
    pub visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PlanMask>,
    /// Bottom-first, like document children.
    pub children: Vec<PlanNode>,
}

fn pass_through() -> BlendMode {
    BlendMode::PassThrough
}
fn full() -> u16 {
    255
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanNode {
    Group(PlanGroup),
    Item(PlanItem),
}

impl PlanGroup {
    pub fn new(label: impl Into<String>) -> Self {
        PlanGroup {
            label: label.into(),
            blend: BlendMode::PassThrough,
            opacity: 255,
            visible: true,
            mask: None,
            children: Vec::new(),
        }
    }
}

/// Where a planned item lands: its parent group and index once every
/// earlier item is in place.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub group: LayerPath,
    pub index: usize,
}

impl Slot {
    pub fn path(&self) -> LayerPath {
        self.group.child(self.index)
    }
}

/// Groups of assets to integrate, as a tree mirroring the target layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignPlan {
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub assets: BTreeMap<String, Arc<AssetRef>>,
    pub root: PlanGroup,
}

impl DesignPlan {
    pub fn new(canvas_width: u32, canvas_height: u32) -> Self {
        DesignPlan {
            canvas_width,
            canvas_height,
            assets: BTreeMap::new(),
            root: PlanGroup::new("root"),
        }
    }

    /// The plan whose faithful execution rebuilds `doc`.
    pub fn from_document(doc: &Document) -> DesignPlan {
        fn group(g: &GroupNode) -> PlanGroup {
            PlanGroup {
                label: g.name.clone(),
                blend: g.blend,
                opacity: g.opacity,
                visible: g.visible,
                mask: g.mask.as_ref().filter(|m| m.enabled).and_then(|m| {
                    m.source_asset.clone().map(|asset_id| PlanMask {
                        asset_id,
                        x: m.x,
                        y: m.y,
                    })
                }),
                children: g
                    .children
                    .iter()
                    .map(|c| match c {
                        Node::Group(g) => PlanNode::Group(group(g)),
                        Node::Leaf(l) => PlanNode::Item(PlanItem {
                            label: l.name.clone(),
                            kind: l.kind,
                            asset_id: l.asset_ref.clone(),
                            text: l.text_content.clone(),
                            adjustment: l.adjustment,
                        }),
                    })
                    .collect(),
            }
        }
        DesignPlan {
            canvas_width: doc.canvas_width,
            canvas_height: doc.canvas_height,
            assets: doc.assets.clone(),
            root: group(&doc.root),
        }
    }

    /// Items in integration order, with their slots.
    pub fn items(&self) -> Vec<(Slot, &PlanItem)> {
        fn walk<'a>(g: &'a PlanGroup, path: &LayerPath, out: &mut Vec<(Slot, &'a PlanItem)>) {
            for (i, c) in g.children.iter().enumerate() {
                match c {
                    PlanNode::Group(sub) => walk(sub, &path.child(i), out),
                    PlanNode::Item(item) => out.push((
                        Slot {
                            group: path.clone(),
                            index: i,
                        },
                        item,
                    )),
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &LayerPath::root(), &mut out);
        out
    }

    /// Slots of every item given which earlier items are actually in the
    /// document. Items never placed take up no index.
    pub fn slots_with(&self, placed: &[bool]) -> Vec<Slot> {
        fn walk(g: &PlanGroup, path: &LayerPath, placed: &[bool], n: &mut usize, out: &mut Vec<Slot>) {
            let mut cur = 0;
            for c in &g.children {
                match c {
                    PlanNode::Group(sub) => {
                        walk(sub, &path.child(cur), placed, n, out);
                        cur += 1;
                    }
                    PlanNode::Item(_) => {
                        out.push(Slot {
                            group: path.clone(),
                            index: cur,
                        });
                        if placed.get(*n).copied().unwrap_or(false) {
                            cur += 1;
                        }
                        *n += 1;
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &LayerPath::root(), placed, &mut 0, &mut out);
        out
    }

    /// Calls that build the empty group skeleton on a blank document. Each
    /// group goes after its already-created sibling groups; items later
    /// slot in between.
    pub fn skeleton_calls(&self) -> Vec<ToolCall> {
        fn walk(g: &PlanGroup, at: &LayerPath, out: &mut Vec<ToolCall>) {
            let mut created = 0;
            for c in &g.children {
                let PlanNode::Group(sub) = c else { continue };
                let path = at.child(created);
                out.push(
                    ToolCall::new("create_group")
                        .with("parent", at.clone())
                        .with("index", created)
                        .with("name", sub.label.clone()),
                );
                if sub.blend != BlendMode::PassThrough {
                    out.push(ToolCall::new("set_blend_mode").with("layer", path.clone()).with_enum("mode", sub.blend.name()));
                }
                if sub.opacity != 255 {
                    out.push(ToolCall::new("set_opacity").with("layer", path.clone()).with("value", sub.opacity));
                }
                if !sub.visible {
                    out.push(ToolCall::new("set_visibility").with("layer", path.clone()).with("flag", false));
                }
                if let Some(m) = &sub.mask {
                    out.push(
                        ToolCall::new("attach_mask")
                            .with("layer", path.clone())
                            .with("asset_id", m.asset_id.clone())
                            .with("x", m.x)
                            .with("y", m.y),
                    );
                }
                walk(sub, &path, out);
                created += 1;
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &LayerPath::root(), &mut out);
        out
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        let bad = |m: String| Err(WorkflowError::InvalidPlan(m));
        if self.canvas_width == 0 || self.canvas_height == 0 {
            return bad("canvas must be non-empty".into());
        }
        if self.root.blend != BlendMode::PassThrough || self.root.opacity != 255 || !self.root.visible || self.root.mask.is_some() {
            return bad("the root group carries no attributes".into());
        }
        fn walk(plan: &DesignPlan, g: &PlanGroup, root: bool) -> Result<(), String> {
            if !root && g.children.is_empty() {
                return Err(format!("group {:?} lists no assets", g.label));
            }
            if g.opacity > 255 {
                return Err(format!("group {:?} opacity {} exceeds 255", g.label, g.opacity));
            }
            if let Some(m) = &g.mask {
                if plan.assets.get(&m.asset_id).and_then(|a| a.as_raster()).is_none() {
                    return Err(format!("mask of group {:?} names missing raster asset {:?}", g.label, m.asset_id));
                }
            }
            for c in &g.children {
                match c {
                    PlanNode::Group(sub) => walk(plan, sub, false)?,
                    PlanNode::Item(item) => match (item.kind, &item.asset_id) {
                        (LayerKind::Adjustment, _) if item.adjustment.is_none() => {
                            return Err(format!("adjustment item {:?} has no parameters", item.label));
                        }
                        (LayerKind::Adjustment, _) => {}
                        (_, None) => return Err(format!("item {:?} has no asset", item.label)),
                        (_, Some(id)) if !plan.assets.contains_key(id) => {
                            return Err(format!("item {:?} names missing asset {id:?}", item.label));
                        }
                        _ => {}
                    },
                }
            }
            Ok(())
        }
        walk(self, &self.root, true).or_else(bad)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetEntry {
    asset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    format_version: u32,
    canvas_width: u32,
    canvas_height: u32,
    assets: Vec<AssetEntry>,
    root: PlanGroup,
}

fn io(path: &Path, e: impl std::fmt::Display) -> WorkflowError {
    WorkflowError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl DesignPlan {
    /// Writes `plan.json` plus `assets/NNNN.png` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), WorkflowError> {
        let assets_dir = dir.join("assets");
        fs::create_dir_all(&assets_dir).map_err(|e| io(&assets_dir, e))?;
        let mut assets = Vec::new();
        for (i, a) in self.assets.values().enumerate() {
            assets.push(match &a.payload {
                AssetPayload::Raster(r) => {
                    let rel = format!("assets/{i:04}.png");
                    let png = r.to_png().map_err(|e| WorkflowError::InvalidPlan(e.to_string()))?;
                    fs::write(dir.join(&rel), png).map_err(|e| io(&dir.join(&rel), e))?;
                    AssetEntry {
                        asset_id: a.asset_id.clone(),
                        png: Some(rel),
                        text: None,
                    }
                }
                AssetPayload::Text(t) => AssetEntry {
                    asset_id: a.asset_id.clone(),
                    png: None,
                    text: Some(t.clone()),
                },
            });
        }
        let file = PlanFile {
            format_version: PLAN_FORMAT_VERSION,
            canvas_width: self.canvas_width,
            canvas_height: self.canvas_height,
            assets,
            root: self.root.clone(),
        };
        let path = dir.join(PLAN_FILE);
        let mut json = serde_json::to_vec_pretty(&file).expect("plan serializes");
        json.push(b'\n');
        fs::write(&path, json).map_err(|e| io(&path, e))
    }

    /// Reads `plan.json` from `dir`, or `dir` itself when it is a file.
    pub fn read(path: &Path) -> Result<DesignPlan, WorkflowError> {
        let (dir, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(PLAN_FILE))
        } else {
            (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
        };
        let bytes = fs::read(&file).map_err(|e| io(&file, e))?;
        let pf: PlanFile = serde_json::from_slice(&bytes).map_err(|e| WorkflowError::InvalidPlan(format!("{}: {e}", file.display())))?;
        if pf.format_version != PLAN_FORMAT_VERSION {
            return Err(WorkflowError::InvalidPlan(format!("unsupported plan format_version {}", pf.format_version)));
        }
        let mut assets = BTreeMap::new();
        for e in pf.assets {
            let payload = match (e.png, e.text) {
                (Some(rel), None) => {
                    if rel.contains("..") || Path::new(&rel).is_absolute() {
                        return Err(WorkflowError::InvalidPlan(format!("asset path {rel:?} leaves the plan directory")));
                    }
                    let p = dir.join(&rel);
                    let bytes = fs::read(&p).map_err(|err| io(&p, err))?;
                    AssetPayload::Raster(Raster::from_png(&bytes).map_err(|err| WorkflowError::InvalidPlan(format!("{rel}: {err}")))?)
                }
                (None, Some(t)) => AssetPayload::Text(t),
                _ => return Err(WorkflowError::InvalidPlan(format!("asset {:?} needs exactly one of png, text", e.asset_id))),
            };
            assets.insert(
                e.asset_id.clone(),
                Arc::new(AssetRef {
                    asset_id: e.asset_id,
                    payload,
                    source_uri: None,
                }),
            );
        }
        let plan = DesignPlan {
            canvas_width: pf.canvas_width,
            canvas_height: pf.canvas_height,
            assets,
            root: pf.root,
        };
        plan.validate()?;
        Ok(plan)
    }
}
