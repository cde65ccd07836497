use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{derive_gen_calls, DatasetError, Mode, Observation};
use crate::doc::{AdjustmentParams, AssetPayload, AssetRef, Document, LayerKind};
use crate::raster::Raster;
use crate::tools::ToolCall;

use super::{PlanItem, PlannerError, Slot};

/// Everything a planner sees at one step.
#[derive(Clone, Copy, Debug)]
pub struct PlanRequest<'a> {
    pub mode: Mode,
    pub step_index: usize,
    /// Ordinal of the item in integration order.
    pub item_index: usize,
    pub item: &'a PlanItem,
    /// Absent for edt requests and for adjustment items.
    pub asset: Option<&'a AssetRef>,
    pub slot: &'a Slot,
    pub observation: &'a Observation,
}

pub trait Planner {
    fn plan_gen(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError>;
    fn plan_edt(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError>;
}

/// Recorded gold calls, looked up by item ordinal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayPlanner {
    pub gen: Vec<Vec<ToolCall>>,
    pub edt: Vec<Vec<ToolCall>>,
}

impl ReplayPlanner {
    /// Gen calls rebuilding each leaf of `doc` in traversal order, with
    /// empty refinements.
    pub fn from_document(doc: &Document) -> Result<ReplayPlanner, DatasetError> {
        let gen = doc
            .traversal_order()
            .iter()
            .map(|p| derive_gen_calls(doc, p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReplayPlanner {
            edt: vec![Vec::new(); gen.len()],
            gen,
        })
    }

    pub fn calls(&self, mode: Mode, item_index: usize) -> Option<&Vec<ToolCall>> {
        match mode {
            Mode::Gen => self.gen.get(item_index),
            Mode::Edt => self.edt.get(item_index),
        }
    }

    fn lookup(&self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        self.calls(req.mode, req.item_index).cloned().ok_or(PlannerError::Exhausted {
            step: req.step_index,
            item: req.item_index,
        })
    }
}

impl Planner for ReplayPlanner {
    fn plan_gen(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        self.lookup(req)
    }

    fn plan_edt(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        self.lookup(req)
    }
}

/// Axis-aligned rectangle `(x, y, w, h)`.
pub type Rect = (u32, u32, u32, u32);

/// Largest rectangle of fully transparent pixels. Ties go to the smaller
/// `y`, then the smaller `x`, then the smaller width. `None` when no pixel
/// is transparent.
pub fn largest_empty_rect(r: &Raster) -> Option<Rect> {
    let (w, h) = (r.width() as usize, r.height() as usize);
    let mut heights = vec![0u32; w];
    let mut best: Option<(u64, Rect)> = None;
    let better = |cand: (u64, Rect), cur: &Option<(u64, Rect)>| match cur {
        None => true,
        Some((area, (bx, by, bw, _))) => {
            let (a, (x, y, rw, _)) = cand;
            (a, std::cmp::Reverse(y), std::cmp::Reverse(x), std::cmp::Reverse(rw)) > (*area, std::cmp::Reverse(*by), std::cmp::Reverse(*bx), std::cmp::Reverse(*bw))
        }
    };
    for row in 0..h {
        for (x, hgt) in heights.iter_mut().enumerate() {
            *hgt = if r.get(x as u32, row as u32)[3] == 0 { *hgt + 1 } else { 0 };
        }
        for left in 0..w {
            let mut min_h = u32::MAX;
            for (right, &col) in heights.iter().enumerate().skip(left) {
                min_h = min_h.min(col);
                if min_h == 0 {
                    break;
                }
                let rw = (right - left + 1) as u32;
                let cand = (rw as u64 * min_h as u64, (left as u32, row as u32 + 1 - min_h, rw, min_h));
                if better(cand, &best) {
                    best = Some(cand);
                }
            }
        }
    }
    best.map(|(_, rect)| rect)
}

/// Baseline planner: drops each asset into the largest empty region of the
/// current render with default attributes, and never refines.
#[derive(Clone, Debug, Default)]
pub struct HeuristicPlanner;

impl HeuristicPlanner {
    pub fn placement(render: &Raster, asset: Option<&AssetRef>) -> (i32, i32) {
        let (aw, ah) = asset.and_then(AssetRef::as_raster).map_or((0, 0), |r| (r.width() as i64, r.height() as i64));
        match largest_empty_rect(render) {
            None => (0, 0),
            Some((x, y, w, h)) => (
                (x as i64 + (w as i64 - aw).div_euclid(2)) as i32,
                (y as i64 + (h as i64 - ah).div_euclid(2)) as i32,
            ),
        }
    }
}

impl Planner for HeuristicPlanner {
    fn plan_gen(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        let item = req.item;
        let base = |tool: &str| ToolCall::new(tool).with("group", req.slot.group.clone()).with("index", req.slot.index);
        if item.kind == LayerKind::Adjustment {
            let (kind, p1, p2) = match item.adjustment {
                Some(AdjustmentParams::BrightnessContrast { brightness, contrast }) => ("brightness_contrast", brightness, contrast),
                _ => ("invert", 0, 0),
            };
            return Ok(vec![base("insert_adjustment_layer").with_enum("kind", kind).with("p1", p1).with("p2", p2)]);
        }
        let (x, y) = Self::placement(&req.observation.render, req.asset);
        let asset_id = item.asset_id.clone().unwrap_or_default();
        let call = match item.kind {
            LayerKind::Text => base("insert_text_layer")
                .with("asset_id", asset_id)
                .with("text", item.text.clone().unwrap_or_default())
                .with("x", x)
                .with("y", y),
            LayerKind::Shape => base("insert_shape_layer").with("asset_id", asset_id).with("x", x).with("y", y),
            LayerKind::SmartObject => base("insert_smart_object").with("asset_id", asset_id).with("x", x).with("y", y),
            _ => base("insert_image_layer").with("asset_id", asset_id).with("x", x).with("y", y),
        };
        Ok(vec![call])
    }

    fn plan_edt(&mut self, _req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        Ok(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after a timeout, transport failure or 5xx status.
    pub retries: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8080/plan".into(),
            timeout_ms: 30_000,
            retries: 0,
        }
    }
}

/// JSON request body for one planning step.
pub fn request_body(req: &PlanRequest) -> Result<Value, PlannerError> {
    let png = |r: &Raster| {
        r.to_png().map(|b| B64.encode(b)).map_err(|e| PlannerError::Other {
            step: req.step_index,
            message: e.to_string(),
        })
    };
    let asset = match req.asset {
        None => Value::Null,
        Some(a) => match &a.payload {
            AssetPayload::Raster(r) => json!({"asset_id": a.asset_id, "kind": "raster", "png_b64": png(r)?}),
            AssetPayload::Text(t) => json!({"asset_id": a.asset_id, "kind": "text", "text": t}),
        },
    };
    let mut body = json!({
        "mode": req.mode,
        "asset": asset,
        "metadata": req.observation.metadata,
        "render_png_b64": png(&req.observation.render)?,
        "step_index": req.step_index,
        "item_index": req.item_index,
        "item": req.item,
        "slot": req.slot,
    });
    if let Some(g) = &req.observation.group_backdrop {
        body["group_backdrop_png_b64"] = Value::String(png(g)?);
    }
    Ok(body)
}

/// Parses `{"calls": [...]}`.
pub fn parse_response(step: usize, body: &str) -> Result<Vec<ToolCall>, PlannerError> {
    let bad = |message: String| PlannerError::BadResponse { step, message };
    let v: Value = serde_json::from_str(body).map_err(|e| bad(e.to_string()))?;
    let calls = v.get("calls").and_then(Value::as_array).ok_or_else(|| bad("missing \"calls\" array".into()))?;
    calls
        .iter()
        .enumerate()
        .map(|(i, c)| ToolCall::from_json(c).map_err(|e| bad(format!("calls[{i}]: {e}"))))
        .collect()
}

/// Planner behind an HTTP endpoint: one POST per step.
pub struct RemotePlanner {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemotePlanner {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .proxy(None)
            .build()
            .into();
        RemotePlanner { config, agent }
    }

    fn call(&self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        let step = req.step_index;
        let body = request_body(req)?.to_string();
        let attempts = self.config.retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            let sent = self
                .agent
                .post(&self.config.endpoint)
                .header("content-type", "application/json")
                .send(&body);
            match sent {
                Err(ureq::Error::Timeout(_)) => last = Some(PlannerError::Timeout { step, attempts }),
                Err(e) => {
                    last = Some(PlannerError::Transport {
                        step,
                        message: e.to_string(),
                    })
                }
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = match resp.body_mut().read_to_string() {
                        Ok(t) => t,
                        Err(ureq::Error::Timeout(_)) => {
                            last = Some(PlannerError::Timeout { step, attempts });
                            continue;
                        }
                        Err(e) => {
                            return Err(PlannerError::BadResponse {
                                step,
                                message: e.to_string(),
                            })
                        }
                    };
                    match status {
                        200..=299 => return parse_response(step, &text),
                        500..=599 => last = Some(PlannerError::Status { step, status }),
                        _ => return Err(PlannerError::Status { step, status }),
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

impl Planner for RemotePlanner {
    fn plan_gen(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        self.call(req)
    }

    fn plan_edt(&mut self, req: &PlanRequest) -> Result<Vec<ToolCall>, PlannerError> {
        self.call(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(r: &Raster) -> Option<Rect> {
        let (w, h) = (r.width(), r.height());
        let mut best: Option<(u64, Rect)> = None;
        for y in 0..h {
            for x in 0..w {
                for y2 in y..h {
                    for x2 in x..w {
                        let empty = (y..=y2).all(|yy| (x..=x2).all(|xx| r.get(xx, yy)[3] == 0));
                        if !empty {
                            continue;
                        }
                        let (rw, rh) = (x2 - x + 1, y2 - y + 1);
                        let area = rw as u64 * rh as u64;
                        // Loop order visits smaller y, then x, first; a
                        // narrower equal-area rectangle replaces a wider one.
                        let replace = match best {
                            None => true,
                            Some((a, (bx, by, bw, _))) => area > a || (area == a && (y, x) == (by, bx) && rw < bw),
                        };
                        if replace {
                            best = Some((area, (x, y, rw, rh)));
                        }
                    }
                }
            }
        }
        best.map(|(_, r)| r)
    }

    #[test]
    fn empty_rect_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..60 {
            let mut r = Raster::new(16, 16);
            let density: f64 = rng.gen_range(0.02..0.4);
            for y in 0..16 {
                for x in 0..16 {
                    if rng.gen_bool(density) {
                        r.put(x, y, [0, 0, 0, 255]);
                    }
                }
            }
            assert_eq!(largest_empty_rect(&r), brute(&r));
        }
        assert_eq!(largest_empty_rect(&Raster::filled(4, 4, [1, 1, 1, 1])), None);
        assert_eq!(largest_empty_rect(&Raster::new(5, 3)), Some((0, 0, 5, 3)));
    }

    #[test]
    fn placement_centers_asset() {
        let mut r = Raster::new(20, 10);
        for y in 0..10 {
            for x in 0..8 {
                r.put(x, y, [9, 9, 9, 255]);
            }
        }
        let a = AssetRef::raster("a", Raster::filled(4, 4, [1, 2, 3, 255]));
        assert_eq!(HeuristicPlanner::placement(&r, Some(&a)), (12, 3));
    }

    #[test]
    fn response_parsing() {
        let ok = r#"{"calls":[{"tool":"delete_layer","params":{"layer":[0]}}]}"#;
        assert_eq!(parse_response(3, ok).unwrap().len(), 1);
        assert!(matches!(parse_response(3, "{\"nope\":1}"), Err(PlannerError::BadResponse { step: 3, .. })));
        assert!(matches!(parse_response(5, "not json"), Err(PlannerError::BadResponse { step: 5, .. })));
    }
}
