use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::doc::{
    AdjustmentParams, BlendMode, DocError, Document, Effect, GroupNode, LayerKind, LayerPath, LeafLayer, Mask, Node, Rgb, Rule,
    Violation,
};
use crate::raster::Plane;

use super::{signature, Constraint, ParamValue, ToolCall, ToolSignature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolError {
    #[error("tool call rejected: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Violation>),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("call {index} rejected: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct SequenceError {
    pub index: usize,
    pub violations: Vec<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub call: ToolCall,
    pub pre_digest: String,
    pub post_digest: String,
}

pub type Trace = Vec<TraceStep>;

const TARGET_PARAMS: [&str; 3] = ["layer", "group", "parent"];

fn target(call: &ToolCall) -> LayerPath {
    TARGET_PARAMS
        .iter()
        .find_map(|n| match call.get(n) {
            Some(ParamValue::Path(p)) => Some(p.clone()),
            _ => None,
        })
        .unwrap_or_default()
}

fn v(path: &LayerPath, field: &str, rule: Rule, detail: impl Into<String>) -> Violation {
    Violation {
        path: path.clone(),
        field: field.to_string(),
        rule,
        detail: detail.into(),
    }
}

/// Signature-level checks that need no document.
fn check_signature(call: &ToolCall) -> Result<&'static ToolSignature, Vec<Violation>> {
    let at = target(call);
    let Some(sig) = signature(&call.tool) else {
        return Err(vec![v(&at, "tool", Rule::UnknownTool, format!("no tool named {:?}", call.tool))]);
    };
    let mut out = Vec::new();
    for ps in &sig.params {
        let Some(value) = call.get(ps.name) else {
            out.push(v(&at, ps.name, Rule::MissingParam, format!("{} needs {}", sig.name, ps.name)));
            continue;
        };
        if value.kind() != ps.kind {
            out.push(v(
                &at,
                ps.name,
                Rule::ParamType,
                format!("expected {:?}, got {value}", ps.kind),
            ));
            continue;
        }
        match (ps.constraint, value) {
            (Constraint::Range { min, max, rule }, ParamValue::Int(i)) if *i < min || *i > max => {
                out.push(v(&at, ps.name, rule, format!("{i} outside {min}..={max}")));
            }
            (Constraint::OneOf(options), ParamValue::Enum(tag)) if !options.contains(&tag.as_str()) => {
                out.push(v(&at, ps.name, Rule::ParamRange, format!("{tag:?} not one of {options:?}")));
            }
            _ => {}
        }
    }
    for name in call.params.keys() {
        if sig.param(name).is_none() {
            out.push(v(&at, name, Rule::UnexpectedParam, format!("{} takes no {name}", sig.name)));
        }
    }
    if out.is_empty() {
        Ok(sig)
    } else {
        Err(out)
    }
}

struct Args<'a>(&'a ToolCall);

impl Args<'_> {
    fn int(&self, name: &str) -> i64 {
        match self.0.get(name) {
            Some(ParamValue::Int(i)) => *i,
            _ => unreachable!("checked against signature"),
        }
    }
    fn path(&self, name: &str) -> LayerPath {
        match self.0.get(name) {
            Some(ParamValue::Path(p)) => p.clone(),
            _ => unreachable!("checked against signature"),
        }
    }
    fn text(&self, name: &str) -> String {
        match self.0.get(name) {
            Some(ParamValue::Text(s) | ParamValue::Enum(s)) => s.clone(),
            _ => unreachable!("checked against signature"),
        }
    }
    fn flag(&self, name: &str) -> bool {
        matches!(self.0.get(name), Some(ParamValue::Bool(true)))
    }
    fn color(&self, name: &str) -> Rgb {
        match self.0.get(name) {
            Some(ParamValue::Color(c)) => *c,
            _ => unreachable!("checked against signature"),
        }
    }
    fn coord(&self, name: &str) -> i32 {
        self.int(name) as i32
    }
}

fn from_doc_error(e: DocError, field: &str) -> Vec<Violation> {
    match e {
        DocError::PathOutOfBounds(p) => vec![v(&p, field, Rule::BadPath, "no node at this path")],
        DocError::NotAGroup(p) => vec![v(&p, field, Rule::WrongTarget, "expected a group")],
        DocError::NotALeaf(p) => vec![v(&p, field, Rule::WrongTarget, "expected a leaf layer")],
        DocError::CannotRemoveRoot => vec![v(&LayerPath::root(), field, Rule::WrongTarget, "the root cannot be removed")],
        DocError::InvariantViolation(vs) => vs,
    }
}

fn leaf_mut<'n>(node: &'n mut Node, path: &LayerPath) -> Result<&'n mut LeafLayer, DocError> {
    match node {
        Node::Leaf(l) => Ok(l),
        Node::Group(_) => Err(DocError::NotALeaf(path.clone())),
    }
}

/// Replaces the effect of the same kind in place, or appends.
fn set_effect(leaf: &mut LeafLayer, effect: Effect) {
    match leaf.effects.iter_mut().find(|e| e.kind() == effect.kind()) {
        Some(slot) => *slot = effect,
        None => leaf.effects.push(effect),
    }
}

fn apply(doc: &Document, sig: &ToolSignature, call: &ToolCall) -> Result<Document, Vec<Violation>> {
    let a = Args(call);
    let insert = |parent_param: &str, node: Node| {
        let parent = a.path(parent_param);
        let index = a.int("index") as usize;
        doc.insert_node(&parent, index, node).map_err(|e| match e {
            DocError::PathOutOfBounds(p) if p == parent.child(index) => {
                vec![v(&parent, "index", Rule::BadPath, format!("index {index} past the end of the group"))]
            }
            other => from_doc_error(other, parent_param),
        })
    };
    let update = |f: &dyn Fn(&mut Node, &LayerPath) -> Result<(), DocError>| {
        let path = a.path("layer");
        doc.update_node(&path, |n| f(n, &path)).map_err(|e| from_doc_error(e, "layer"))
    };
    let leaf_update = |f: &dyn Fn(&mut LeafLayer)| update(&|n, p| leaf_mut(n, p).map(f));
    let asset_leaf = |kind: LayerKind| {
        let id = a.text("asset_id");
        LeafLayer::with_asset(id.clone(), kind, id, a.coord("x"), a.coord("y"))
    };

    match sig.name {
        "insert_image_layer" => insert("group", asset_leaf(LayerKind::Pixel).into()),
        "insert_shape_layer" => insert("group", asset_leaf(LayerKind::Shape).into()),
        "insert_smart_object" => insert("group", asset_leaf(LayerKind::SmartObject).into()),
        "insert_text_layer" => {
            let mut leaf = asset_leaf(LayerKind::Text);
            leaf.text_content = Some(a.text("text"));
            insert("group", leaf.into())
        }
        "insert_adjustment_layer" => {
            let kind = a.text("kind");
            let params = match kind.as_str() {
                "invert" => AdjustmentParams::Invert,
                _ => AdjustmentParams::BrightnessContrast {
                    brightness: a.int("p1") as i32,
                    contrast: a.int("p2") as i32,
                },
            };
            insert("group", LeafLayer::adjustment(kind, params).into())
        }
        "create_group" => insert("parent", GroupNode::new(a.text("name")).into()),
        "set_position" => leaf_update(&|l| {
            l.x = a.coord("x");
            l.y = a.coord("y");
        }),
        "set_opacity" => update(&|n, _| {
            let value = a.int("value") as u16;
            match n {
                Node::Leaf(l) => l.opacity = value,
                Node::Group(g) => g.opacity = value,
            }
            Ok(())
        }),
        "set_blend_mode" => update(&|n, _| {
            let mode = BlendMode::from_name(&a.text("mode")).expect("checked against signature");
            match n {
                Node::Leaf(l) => l.blend = mode,
                Node::Group(g) => g.blend = mode,
            }
            Ok(())
        }),
        "set_visibility" => update(&|n, _| {
            match n {
                Node::Leaf(l) => l.visible = a.flag("flag"),
                Node::Group(g) => g.visible = a.flag("flag"),
            }
            Ok(())
        }),
        "set_clipping" => leaf_update(&|l| l.clipped = a.flag("flag")),
        "add_drop_shadow" => leaf_update(&|l| {
            set_effect(
                l,
                Effect::DropShadow {
                    color: a.color("color"),
                    opacity: a.int("opacity") as u16,
                    angle: a.int("angle") as i32,
                    distance: a.int("distance") as u32,
                    blur: a.int("blur") as u32,
                },
            )
        }),
        "add_inner_glow" => leaf_update(&|l| {
            set_effect(
                l,
                Effect::InnerGlow {
                    color: a.color("color"),
                    opacity: a.int("opacity") as u16,
                    blur: a.int("blur") as u32,
                },
            )
        }),
        "add_color_overlay" => leaf_update(&|l| {
            set_effect(
                l,
                Effect::ColorOverlay {
                    color: a.color("color"),
                    opacity: a.int("opacity") as u16,
                },
            )
        }),
        "add_stroke" => leaf_update(&|l| {
            set_effect(
                l,
                Effect::Stroke {
                    color: a.color("color"),
                    width: a.int("width") as u32,
                },
            )
        }),
        "remove_effect" => {
            let path = a.path("layer");
            let index = a.int("effect_index") as usize;
            let count = match doc.resolve_leaf(&path) {
                Ok(l) => l.effects.len(),
                Err(e) => return Err(from_doc_error(e, "layer")),
            };
            if index >= count {
                return Err(vec![v(
                    &path,
                    "effect_index",
                    Rule::ParamRange,
                    format!("layer has {count} effect(s)"),
                )]);
            }
            leaf_update(&|l| {
                l.effects.remove(index);
            })
        }
        "attach_mask" => {
            let path = a.path("layer");
            let id = a.text("asset_id");
            let bitmap = match doc.asset(&id) {
                None => return Err(vec![v(&path, "asset_id", Rule::DanglingAsset, format!("asset {id:?} not in asset table"))]),
                Some(asset) => match asset.as_raster() {
                    Some(r) => Arc::new(Plane::from_red_channel(r)),
                    None => return Err(vec![v(&path, "asset_id", Rule::AssetKindMismatch, format!("asset {id:?} is not a raster"))]),
                },
            };
            let mask = Mask {
                x: a.coord("x"),
                y: a.coord("y"),
                bitmap,
                enabled: true,
                source_asset: Some(id),
            };
            update(&|n, _| {
                match n {
                    Node::Leaf(l) => l.mask = Some(mask.clone()),
                    Node::Group(g) => g.mask = Some(mask.clone()),
                }
                Ok(())
            })
        }
        "delete_layer" => doc.remove_node(&a.path("layer")).map_err(|e| from_doc_error(e, "layer")),
        other => unreachable!("registry tool {other} has no implementation"),
    }
}

/// Empty iff `call` can be executed on `doc`.
pub fn validate_call(doc: &Document, call: &ToolCall) -> Vec<Violation> {
    match check_signature(call).and_then(|sig| apply(doc, sig, call)) {
        Ok(_) => Vec::new(),
        Err(v) => v,
    }
}

pub fn execute(doc: &Document, call: &ToolCall) -> Result<Document, ToolError> {
    check_signature(call)
        .and_then(|sig| apply(doc, sig, call))
        .map_err(ToolError::ValidationFailed)
}

/// Applies `calls` left to right. On the first rejected call nothing is
/// returned but the error; the input document is never modified.
pub fn execute_sequence(doc: &Document, calls: &[ToolCall]) -> Result<(Document, Trace), SequenceError> {
    let mut current = doc.clone();
    let mut trace = Vec::with_capacity(calls.len());
    let mut pre = current.digest();
    for (index, call) in calls.iter().enumerate() {
        current = execute(&current, call).map_err(|ToolError::ValidationFailed(violations)| SequenceError { index, violations })?;
        let post = current.digest();
        trace.push(TraceStep {
            call: call.clone(),
            pre_digest: std::mem::replace(&mut pre, post.clone()),
            post_digest: post,
        });
    }
    Ok((current, trace))
}
