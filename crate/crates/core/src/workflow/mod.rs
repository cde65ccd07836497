//! The iterative design loop: each planned item gets one generation step and
//! one refinement step, every step observing the render left by the last.

mod mock;
mod plan;
mod planners;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{metadata_in_scope, Mode, Observation};
use crate::doc::{Document, Violation};
use crate::render::{self, RenderError};
use crate::tools::{execute_sequence, ToolCall};

pub use mock::{MockReply, MockServer};
pub use plan::{DesignPlan, PlanGroup, PlanItem, PlanMask, PlanNode, Slot, PLAN_FILE, PLAN_FORMAT_VERSION};
pub use planners::{
    largest_empty_rect, parse_response, request_body, HeuristicPlanner, PlanRequest, Planner, Rect, RemoteConfig, RemotePlanner,
    ReplayPlanner,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("step {step}: planner timed out after {attempts} attempt(s)")]
    Timeout { step: usize, attempts: usize },
    #[error("step {step}: planner answered HTTP {status}")]
    Status { step: usize, status: u16 },
    #[error("step {step}: transport error: {message}")]
    Transport { step: usize, message: String },
    #[error("step {step}: malformed planner response: {message}")]
    BadResponse { step: usize, message: String },
    #[error("step {step}: no recorded calls for item {item}")]
    Exhausted { step: usize, item: usize },
    #[error("step {step}: {message}")]
    Other { step: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error("step {step}: planner call {call_index} is invalid ({} violation(s))", violations.len())]
    ValidationFailed {
        step: usize,
        call_index: usize,
        violations: Vec<Violation>,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("group skeleton call {call_index} failed ({} violation(s))", violations.len())]
    Skeleton { call_index: usize, violations: Vec<Violation> },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnInvalid {
    #[default]
    Abort,
    /// Log the step with no effect and carry on.
    Skip,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkflowConfig {
    pub on_invalid: OnInvalid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step_index: usize,
    pub item_index: usize,
    pub mode: Mode,
    pub calls: Vec<ToolCall>,
    /// Hex SHA-256 of the PNG of the render after the step.
    pub render_hash: String,
    /// Set when the calls were rejected and skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<Vec<Violation>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkflowState {
    /// Manipulations applied so far, empty refinements included.
    pub step_index: usize,
    pub document: Document,
    pub skeleton_calls: Vec<ToolCall>,
    pub trace: Vec<TraceEntry>,
}

pub fn render_hash(r: &crate::raster::Raster) -> Result<String, WorkflowError> {
    let png = r.to_png().map_err(|e| WorkflowError::InvalidPlan(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(png)))
}

/// Blank canvas holding the plan's assets and its group skeleton.
pub fn initial_document(plan: &DesignPlan) -> Result<(Document, Vec<ToolCall>), WorkflowError> {
    plan.validate()?;
    let mut doc = Document::new(plan.canvas_width, plan.canvas_height);
    doc.assets = plan.assets.clone();
    let calls = plan.skeleton_calls();
    let (doc, _) = execute_sequence(&doc, &calls).map_err(|e| WorkflowError::Skeleton {
        call_index: e.index,
        violations: e.violations,
    })?;
    Ok((doc, calls))
}

/// Runs the loop over every plan item in integration order.
pub fn run_workflow(plan: &DesignPlan, planner: &mut dyn Planner, config: &WorkflowConfig) -> Result<(Document, WorkflowState), WorkflowError> {
    let (doc, skeleton_calls) = initial_document(plan)?;
    let mut state = WorkflowState {
        step_index: 0,
        document: doc,
        skeleton_calls,
        trace: Vec::new(),
    };
    let items = plan.items();
    let mut placed = vec![false; items.len()];
    for (item_index, (_, item)) in items.into_iter().enumerate() {
        let slot = plan.slots_with(&placed).swap_remove(item_index);
        let asset = item.asset_id.as_deref().and_then(|id| plan.assets.get(id)).map(Arc::as_ref);
        for mode in [Mode::Gen, Mode::Edt] {
            let doc = &state.document;
            let upto = doc.leaf_count();
            let observation = Observation {
                metadata: metadata_in_scope(doc, &slot.group, upto),
                render: Arc::new(render::composite(doc)?),
                group_backdrop: match mode {
                    Mode::Gen => None,
                    Mode::Edt => Some(Arc::new(render::group_backdrop(doc, &slot.group)?)),
                },
            };
            let req = PlanRequest {
                mode,
                step_index: state.step_index,
                item_index,
                item,
                asset: if mode == Mode::Gen { asset } else { None },
                slot: &slot,
                observation: &observation,
            };
            let calls = match mode {
                Mode::Gen => planner.plan_gen(&req)?,
                Mode::Edt => planner.plan_edt(&req)?,
            };
            let rejected = match execute_sequence(doc, &calls) {
                Ok((next, _)) => {
                    state.document = next;
                    if mode == Mode::Gen {
                        placed[item_index] = true;
                    }
                    None
                }
                Err(e) if config.on_invalid == OnInvalid::Skip => Some(e.violations),
                Err(e) => {
                    return Err(WorkflowError::ValidationFailed {
                        step: state.step_index,
                        call_index: e.index,
                        violations: e.violations,
                    })
                }
            };
            state.trace.push(TraceEntry {
                step_index: state.step_index,
                item_index,
                mode,
                calls,
                render_hash: render_hash(&render::composite(&state.document)?)?,
                rejected,
            });
            state.step_index += 1;
        }
    }
    Ok((state.document.clone(), state))
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::doc::{AssetRef, BlendMode, Effect, GroupNode, LayerPath, LeafLayer, Rgb};
    use crate::raster::Raster;

    fn doc() -> Document {
        let mut d = Document::new(32, 24)
            .with_asset(AssetRef::raster("bg", Raster::filled(32, 24, [230, 220, 200, 255])))
            .with_asset(AssetRef::raster("dot", Raster::filled(6, 6, [200, 20, 20, 255])));
        let mut dot = LeafLayer::pixel("dot", "dot", 4, 4);
        dot.opacity = 180;
        dot.effects.push(Effect::Stroke { color: Rgb::BLACK, width: 2 });
        let mut clipped = LeafLayer::pixel("dot", "dot", 6, 6);
        clipped.clipped = true;
        clipped.blend = BlendMode::Multiply;
        let mut g = GroupNode::new("g").with_children(vec![dot.into(), clipped.into()]);
        g.blend = BlendMode::Normal;
        g.opacity = 200;
        d.root.children = vec![
            LeafLayer::pixel("bg", "bg", 0, 0).into(),
            g.into(),
            GroupNode::new("h").with_children(vec![LeafLayer::pixel("dot", "dot", 20, 10).into()]).into(),
        ];
        d
    }

    #[test]
    fn empty_plan() {
        let plan = DesignPlan::new(8, 8);
        let (d, s) = run_workflow(&plan, &mut HeuristicPlanner, &WorkflowConfig::default()).unwrap();
        assert_eq!(d.leaf_count(), 0);
        assert_eq!(s.step_index, 0);
        assert!(s.trace.is_empty());
    }

    #[test]
    fn replay_reproduces_render() {
        let d = doc();
        let plan = DesignPlan::from_document(&d);
        let mut replay = ReplayPlanner::from_document(&d).unwrap();
        let (out, state) = run_workflow(&plan, &mut replay, &WorkflowConfig::default()).unwrap();
        assert_eq!(render::composite(&out).unwrap(), render::composite(&d).unwrap());
        assert_eq!(state.trace.len(), 2 * 4);
        assert_eq!(state.step_index, 8);
        let modes: Vec<Mode> = state.trace.iter().take(4).map(|t| t.mode).collect();
        assert_eq!(modes, [Mode::Gen, Mode::Edt, Mode::Gen, Mode::Edt]);
    }

    #[test]
    fn heuristic_runs_and_is_deterministic() {
        let plan = DesignPlan::from_document(&doc());
        let a = run_workflow(&plan, &mut HeuristicPlanner, &WorkflowConfig::default()).unwrap();
        let b = run_workflow(&plan, &mut HeuristicPlanner, &WorkflowConfig::default()).unwrap();
        assert_eq!(a.1.trace, b.1.trace);
        assert_eq!(a.0.leaf_count(), 4);
    }

    #[test]
    fn invalid_calls_abort_or_skip() {
        let plan = DesignPlan::from_document(&doc());
        let bad = ToolCall::new("delete_layer").with("layer", LayerPath(vec![9]));
        let mut replay = ReplayPlanner {
            gen: vec![vec![bad]; 4],
            edt: vec![vec![]; 4],
        };
        let err = run_workflow(&plan, &mut replay.clone(), &WorkflowConfig::default()).unwrap_err();
        assert!(matches!(err, WorkflowError::ValidationFailed { step: 0, call_index: 0, .. }));
        let cfg = WorkflowConfig { on_invalid: OnInvalid::Skip };
        let (d, s) = run_workflow(&plan, &mut replay, &cfg).unwrap();
        assert_eq!(s.step_index, 8);
        assert_eq!(d.leaf_count(), 0);
        assert!(s.trace[0].rejected.is_some());
    }

    #[test]
    fn remote_matches_replay() {
        let d = doc();
        let plan = DesignPlan::from_document(&d);
        let replay = ReplayPlanner::from_document(&d).unwrap();
        let (want, want_state) = run_workflow(&plan, &mut replay.clone(), &WorkflowConfig::default()).unwrap();
        let server = MockServer::replaying(replay).unwrap();
        let mut remote = RemotePlanner::new(RemoteConfig {
            endpoint: server.url().to_string(),
            ..Default::default()
        });
        let (got, got_state) = run_workflow(&plan, &mut remote, &WorkflowConfig::default()).unwrap();
        assert_eq!(got, want);
        assert_eq!(got_state.trace, want_state.trace);
        assert_eq!(server.request_count(), 8);
    }

    #[test]
    fn remote_errors_carry_step() {
        let plan = DesignPlan::from_document(&doc());
        let server = MockServer::start(|_| MockReply::ok("{\"calls\": 3}")).unwrap();
        let mut remote = RemotePlanner::new(RemoteConfig {
            endpoint: server.url().to_string(),
            ..Default::default()
        });
        let err = run_workflow(&plan, &mut remote, &WorkflowConfig::default()).unwrap_err();
        assert!(matches!(err, WorkflowError::Planner(PlannerError::BadResponse { step: 0, .. })));

        let slow = MockServer::start(|_| MockReply {
            delay: Duration::from_millis(300),
            ..MockReply::ok("{\"calls\": []}")
        })
        .unwrap();
        let mut remote = RemotePlanner::new(RemoteConfig {
            endpoint: slow.url().to_string(),
            timeout_ms: 50,
            retries: 1,
        });
        let err = run_workflow(&plan, &mut remote, &WorkflowConfig::default()).unwrap_err();
        assert_eq!(err, WorkflowError::Planner(PlannerError::Timeout { step: 0, attempts: 2 }));
    }

    #[test]
    fn plan_dir_round_trip() {
        let plan = DesignPlan::from_document(&doc());
        let dir = tempfile::tempdir().unwrap();
        plan.write_dir(dir.path()).unwrap();
        assert_eq!(DesignPlan::read(dir.path()).unwrap(), plan);
    }
}
