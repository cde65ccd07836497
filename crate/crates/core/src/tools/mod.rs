//! Tool registry, tool calls and their JSON wire form.

mod exec;

use std::fmt;
use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Number, Value};

use crate::doc::{Effect, EffectKind, LayerPath, Rgb, Rule};

pub use exec::{execute, execute_sequence, validate_call, SequenceError, ToolError, Trace, TraceStep};

pub const REGISTRY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Int,
    Float,
    Text,
    Color,
    Point,
    Enum,
    Path,
    Bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Any,
    /// Inclusive range; out-of-range values are reported under `rule`.
    Range { min: i64, max: i64, rule: Rule },
    OneOf(&'static [&'static str]),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ValueKind,
    pub constraint: Constraint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ToolSignature {
    pub name: &'static str,
    pub params: Vec<ParamSpec>,
    pub mutates: &'static str,
}

impl ToolSignature {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub const BLEND_NAMES: &[&str] = &[
    "normal",
    "multiply",
    "screen",
    "overlay",
    "darken",
    "lighten",
    "linear_dodge",
    "difference",
    "pass_through",
];
pub const ADJUSTMENT_NAMES: &[&str] = &["brightness_contrast", "invert"];

fn p(name: &'static str, kind: ValueKind) -> ParamSpec {
    ParamSpec {
        name,
        kind,
        constraint: Constraint::Any,
    }
}

fn ranged(name: &'static str, min: i64, max: i64, rule: Rule) -> ParamSpec {
    ParamSpec {
        name,
        kind: ValueKind::Int,
        constraint: Constraint::Range { min, max, rule },
    }
}

fn sig(name: &'static str, mutates: &'static str, params: Vec<ParamSpec>) -> ToolSignature {
    ToolSignature { name, params, mutates }
}

/// Coordinates are bounded only by what `i32` holds.
const COORD: i64 = i32::MAX as i64;

fn build_registry() -> Vec<ToolSignature> {
    use ValueKind::*;
    let index = || ranged("index", 0, u16::MAX as i64, Rule::ParamRange);
    let x = || ranged("x", -COORD, COORD, Rule::ParamRange);
    let y = || ranged("y", -COORD, COORD, Rule::ParamRange);
    let opacity = |rule| ranged("opacity", 0, 255, rule);
    let insert = |name, kind| {
        sig(
            name,
            kind,
            vec![p("group", Path), index(), p("asset_id", Text), x(), y()],
        )
    };
    vec![
        insert("insert_image_layer", "inserts a pixel layer showing a raster asset"),
        sig(
            "insert_text_layer",
            "inserts a text layer showing a rendered-text raster asset",
            vec![p("group", Path), index(), p("asset_id", Text), p("text", Text), x(), y()],
        ),
        insert("insert_shape_layer", "inserts a shape layer showing a raster asset"),
        sig(
            "insert_adjustment_layer",
            "inserts an adjustment layer (p1 = brightness, p2 = contrast; ignored by invert)",
            vec![
                p("group", Path),
                index(),
                ParamSpec {
                    name: "kind",
                    kind: Enum,
                    constraint: Constraint::OneOf(ADJUSTMENT_NAMES),
                },
                ranged("p1", -100, 100, Rule::AdjustmentRange),
                ranged("p2", -100, 100, Rule::AdjustmentRange),
            ],
        ),
        insert("insert_smart_object", "inserts a smart-object layer showing a raster asset"),
        sig(
            "create_group",
            "inserts an empty pass-through group",
            vec![p("parent", Path), index(), p("name", Text)],
        ),
        sig("set_position", "sets a layer's x and y", vec![p("layer", Path), x(), y()]),
        sig(
            "set_opacity",
            "sets a layer's or group's opacity",
            vec![p("layer", Path), ranged("value", 0, 255, Rule::OpacityRange)],
        ),
        sig(
            "set_blend_mode",
            "sets a layer's or group's blend mode",
            vec![
                p("layer", Path),
                ParamSpec {
                    name: "mode",
                    kind: Enum,
                    constraint: Constraint::OneOf(BLEND_NAMES),
                },
            ],
        ),
        sig(
            "set_visibility",
            "shows or hides a layer or group",
            vec![p("layer", Path), p("flag", Bool)],
        ),
        sig(
            "set_clipping",
            "clips a layer to the layer below or releases it",
            vec![p("layer", Path), p("flag", Bool)],
        ),
        sig(
            "add_drop_shadow",
            "sets the layer's drop shadow",
            vec![
                p("layer", Path),
                p("color", Color),
                opacity(Rule::EffectRange),
                ranged("angle", 0, 360, Rule::EffectRange),
                ranged("distance", 0, 500, Rule::EffectRange),
                ranged("blur", 0, 250, Rule::EffectRange),
            ],
        ),
        sig(
            "add_inner_glow",
            "sets the layer's inner glow",
            vec![
                p("layer", Path),
                p("color", Color),
                opacity(Rule::EffectRange),
                ranged("blur", 0, 250, Rule::EffectRange),
            ],
        ),
        sig(
            "add_color_overlay",
            "sets the layer's color overlay",
            vec![p("layer", Path), p("color", Color), opacity(Rule::EffectRange)],
        ),
        sig(
            "add_stroke",
            "sets the layer's stroke",
            vec![p("layer", Path), p("color", Color), ranged("width", 1, 100, Rule::EffectRange)],
        ),
        sig(
            "remove_effect",
            "removes the effect at effect_index",
            vec![p("layer", Path), ranged("effect_index", 0, 3, Rule::ParamRange)],
        ),
        sig(
            "attach_mask",
            "sets the layer's mask from the red channel of a raster asset",
            vec![p("layer", Path), p("asset_id", Text), x(), y()],
        ),
        sig("delete_layer", "removes a layer or group", vec![p("layer", Path)]),
    ]
}

/// The fixed tool registry, in a stable order.
pub fn registry() -> &'static [ToolSignature] {
    static REGISTRY: OnceLock<Vec<ToolSignature>> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

pub fn signature(tool: &str) -> Option<&'static ToolSignature> {
    registry().iter().find(|s| s.name == tool)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
    Color(Rgb),
    Point(i64, i64),
    Enum(String),
    Path(LayerPath),
    Bool(bool),
}

impl ParamValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            ParamValue::Int(_) => ValueKind::Int,
            ParamValue::Float(_) => ValueKind::Float,
            ParamValue::Text(_) => ValueKind::Text,
            ParamValue::Color(_) => ValueKind::Color,
            ParamValue::Point(..) => ValueKind::Point,
            ParamValue::Enum(_) => ValueKind::Enum,
            ParamValue::Path(_) => ValueKind::Path,
            ParamValue::Bool(_) => ValueKind::Bool,
        }
    }

    /// Numeric view used by reward tolerances.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(f) => Some(f),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            ParamValue::Int(i) => Value::from(*i),
            ParamValue::Float(f) => Number::from_f64((f * 1e4).round() / 1e4).map_or(Value::Null, Value::Number),
            ParamValue::Text(s) | ParamValue::Enum(s) => Value::from(s.as_str()),
            ParamValue::Color(c) => Value::from(c.to_hex()),
            ParamValue::Point(x, y) => Value::from(vec![*x, *y]),
            ParamValue::Path(p) => Value::from(p.0.iter().map(|&i| i as u64).collect::<Vec<_>>()),
            ParamValue::Bool(b) => Value::from(*b),
        }
    }

    /// Reads `v` as `kind`, or `None` if it does not have that shape.
    fn from_json_as(v: &Value, kind: ValueKind) -> Option<ParamValue> {
        Some(match kind {
            ValueKind::Int => ParamValue::Int(v.as_i64()?),
            ValueKind::Float => ParamValue::Float(v.as_f64()?),
            ValueKind::Text => ParamValue::Text(v.as_str()?.to_string()),
            ValueKind::Enum => ParamValue::Enum(v.as_str()?.to_string()),
            ValueKind::Color => ParamValue::Color(Rgb::parse_hex(v.as_str()?)?),
            ValueKind::Bool => ParamValue::Bool(v.as_bool()?),
            ValueKind::Point => match v.as_array()?.as_slice() {
                [x, y] => ParamValue::Point(x.as_i64()?, y.as_i64()?),
                _ => return None,
            },
            ValueKind::Path => ParamValue::Path(LayerPath(
                v.as_array()?
                    .iter()
                    .map(|i| i.as_u64().and_then(|i| usize::try_from(i).ok()))
                    .collect::<Option<_>>()?,
            )),
        })
    }

    /// Best guess of a value's kind when there is no signature to go by.
    fn infer(v: &Value) -> Option<ParamValue> {
        match v {
            Value::Bool(b) => Some(ParamValue::Bool(*b)),
            Value::Number(n) => Some(n.as_i64().map_or_else(|| ParamValue::Float(n.as_f64().unwrap_or(f64::NAN)), ParamValue::Int)),
            Value::String(s) => Some(Rgb::parse_hex(s).map_or_else(|| ParamValue::Text(s.clone()), ParamValue::Color)),
            Value::Array(_) => ParamValue::from_json_as(v, ValueKind::Path),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

macro_rules! param_from {
    ($($t:ty => $variant:ident),*) => {$(
        impl From<$t> for ParamValue {
            fn from(v: $t) -> Self {
                ParamValue::$variant(v.into())
            }
        }
    )*};
}

param_from!(i64 => Int, i32 => Int, u16 => Int, u32 => Int, u8 => Int, f64 => Float, bool => Bool, Rgb => Color, LayerPath => Path, String => Text, &str => Text);

impl From<usize> for ParamValue {
    fn from(v: usize) -> Self {
        ParamValue::Int(v as i64)
    }
}

/// One tool invocation. Parameters keep signature order.
#[derive(Clone, Debug, PartialEq)]
pub struct ToolCall {
    pub tool: String,
    pub params: IndexMap<String, ParamValue>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("tool call must be an object with \"tool\" and \"params\": {0}")]
    Shape(String),
}

impl ToolCall {
    pub fn new(tool: impl Into<String>) -> Self {
        ToolCall {
            tool: tool.into(),
            params: IndexMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn with_enum(self, name: &str, tag: &str) -> Self {
        self.with(name, ParamValue::Enum(tag.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.params.get(name)
    }

    pub fn to_json(&self) -> Value {
        let mut params = serde_json::Map::new();
        for (k, v) in &self.params {
            params.insert(k.clone(), v.to_json());
        }
        let mut obj = serde_json::Map::new();
        obj.insert("tool".into(), Value::from(self.tool.as_str()));
        obj.insert("params".into(), Value::Object(params));
        Value::Object(obj)
    }

    /// Parses the wire object. Values are typed by the tool's signature;
    /// values that do not fit it (and unknown tools) get an inferred kind so
    /// that [`validate_call`] can report them.
    pub fn from_json(v: &Value) -> Result<ToolCall, WireError> {
        let obj = v.as_object().ok_or_else(|| WireError::Shape("not an object".into()))?;
        if let Some(extra) = obj.keys().find(|k| *k != "tool" && *k != "params") {
            return Err(WireError::Shape(format!("unexpected key {extra:?}")));
        }
        let tool = obj
            .get("tool")
            .and_then(Value::as_str)
            .ok_or_else(|| WireError::Shape("missing \"tool\" string".into()))?;
        let params = match obj.get("params") {
            None | Some(Value::Null) => serde_json::Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(WireError::Shape("\"params\" must be an object".into())),
        };
        let sig = signature(tool);
        let mut call = ToolCall::new(tool);
        let typed = |name: &str, raw: &Value| -> Result<ParamValue, WireError> {
            sig.and_then(|s| s.param(name))
                .and_then(|ps| ParamValue::from_json_as(raw, ps.kind))
                .or_else(|| ParamValue::infer(raw))
                .ok_or_else(|| WireError::Shape(format!("param {name:?} has no usable value")))
        };
        // signature order first, then anything extra in key order
        if let Some(s) = sig {
            for ps in &s.params {
                if let Some(raw) = params.get(ps.name) {
                    call.params.insert(ps.name.to_string(), typed(ps.name, raw)?);
                }
            }
        }
        for (name, raw) in &params {
            if !call.params.contains_key(name) {
                call.params.insert(name.clone(), typed(name, raw)?);
            }
        }
        Ok(call)
    }

    pub fn to_wire(&self) -> String {
        serde_json::to_string(self).expect("json values serialize")
    }

    pub fn parse_wire(s: &str) -> Result<ToolCall, WireError> {
        let v: Value = serde_json::from_str(s).map_err(|e| WireError::Json(e.to_string()))?;
        ToolCall::from_json(&v)
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_wire())
    }
}

impl Serialize for ToolCall {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        struct Params<'a>(&'a IndexMap<String, ParamValue>);
        impl Serialize for Params<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                let mut m = s.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    m.serialize_entry(k, &v.to_json())?;
                }
                m.end()
            }
        }
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("tool", &self.tool)?;
        m.serialize_entry("params", &Params(&self.params))?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for ToolCall {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        ToolCall::from_json(&v).map_err(serde::de::Error::custom)
    }
}

/// The absolute-set call that gives `layer` exactly `effect`.
pub fn effect_call(layer: &LayerPath, effect: &Effect) -> ToolCall {
    let call = ToolCall::new(match effect.kind() {
        EffectKind::DropShadow => "add_drop_shadow",
        EffectKind::InnerGlow => "add_inner_glow",
        EffectKind::ColorOverlay => "add_color_overlay",
        EffectKind::Stroke => "add_stroke",
    })
    .with("layer", layer.clone());
    match *effect {
        Effect::DropShadow {
            color,
            opacity,
            angle,
            distance,
            blur,
        } => call
            .with("color", color)
            .with("opacity", opacity)
            .with("angle", angle)
            .with("distance", distance)
            .with("blur", blur),
        Effect::InnerGlow { color, opacity, blur } => call.with("color", color).with("opacity", opacity).with("blur", blur),
        Effect::ColorOverlay { color, opacity } => call.with("color", color).with("opacity", opacity),
        Effect::Stroke { color, width } => call.with("color", color).with("width", width),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_shape() {
        let reg = registry();
        assert_eq!(reg.len(), 18);
        let names: HashSet<_> = reg.iter().map(|s| s.name).collect();
        assert_eq!(names.len(), 18);
        let op = signature("set_opacity").unwrap();
        let ints: Vec<_> = op.params.iter().filter(|p| p.kind == ValueKind::Int).collect();
        assert_eq!(ints.len(), 1);
        assert_eq!(
            ints[0].constraint,
            Constraint::Range {
                min: 0,
                max: 255,
                rule: Rule::OpacityRange
            }
        );
    }

    #[test]
    fn wire_form_is_ordered_and_round_trips() {
        let call = ToolCall::new("add_drop_shadow")
            .with("layer", LayerPath(vec![1, 0]))
            .with("color", Rgb::new(255, 0, 16))
            .with("opacity", 128)
            .with("angle", 90)
            .with("distance", 4)
            .with("blur", 2);
        let wire = call.to_wire();
        assert_eq!(
            wire,
            r##"{"tool":"add_drop_shadow","params":{"layer":[1,0],"color":"#FF0010","opacity":128,"angle":90,"distance":4,"blur":2}}"##
        );
        assert_eq!(ToolCall::parse_wire(&wire).unwrap(), call);
        // key order on input does not matter
        let shuffled = r##"{"params":{"blur":2,"distance":4,"angle":90,"opacity":128,"color":"#FF0010","layer":[1,0]},"tool":"add_drop_shadow"}"##;
        assert_eq!(ToolCall::parse_wire(shuffled).unwrap(), call);
    }

    #[test]
    fn floats_keep_four_decimals() {
        let call = ToolCall::new("custom").with("v", 0.123456);
        assert_eq!(call.to_wire(), r#"{"tool":"custom","params":{"v":0.1235}}"#);
    }

    #[test]
    fn mismatched_values_fall_back_to_inference() {
        let call = ToolCall::parse_wire(r#"{"tool":"set_opacity","params":{"layer":[0],"value":"high"}}"#).unwrap();
        assert_eq!(call.get("value"), Some(&ParamValue::Text("high".into())));
        assert!(ToolCall::parse_wire(r#"{"tool":1}"#).is_err());
        assert!(ToolCall::parse_wire(r#"{"tool":"x","params":{},"extra":0}"#).is_err());
    }
}
