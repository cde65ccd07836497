//! Training-tuple synthesis.
//!
//! Extraction replays a document leaf by leaf and records the metadata and
//! intermediate render at every step. Asset-integration (gen) tuples pair a
//! leaf's asset with the render before it and the tool calls that insert it.
//! Refinement (edt) tuples perturb the selected leaf or its earlier siblings
//! and pair the perturbed render with the calls that undo the perturbation.

mod distort;
mod export;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::{
    AdjustmentParams, AssetRef, BlendMode, DocError, Document, Effect, GroupNode, LayerKind, LayerPath, LeafLayer, Node, Violation,
};
use crate::raster::Raster;
use crate::render::{self, RenderError};
use crate::tools::{effect_call, ToolCall};

pub use distort::{derive_edt_calls, distort, AttrValue, Attribute, DistortionConfig, DistortionEntry, DistortionRecord};
pub use export::{corpus_stats, export_corpus, read_corpus, CorpusManifest, CorpusStats, FORMAT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("document is invalid: {} violation(s)", .0.len())]
    InvalidDocument(Vec<Violation>),
    #[error("{0} is not a leaf layer")]
    PathNotALeaf(LayerPath),
    #[error(transparent)]
    Path(#[from] DocError),
    #[error("enabled mask on {0} has no source asset to re-attach from")]
    MaskWithoutSource(LayerPath),
    #[error("no attribute of {0} or its earlier siblings can be changed visibly")]
    NothingToDistort(LayerPath),
    #[error("attribute {0} has no recovery tool")]
    UnrecoverableAttribute(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("corpus format error: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gen,
    Edt,
}

/// Snapshot of one leaf's attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub path: LayerPath,
    pub name: String,
    pub kind: LayerKind,
    pub group_path: LayerPath,
    pub position: (i32, i32),
    pub size: (u32, u32),
    pub opacity: u16,
    pub blend: BlendMode,
    pub visible: bool,
    pub clipped: bool,
    pub effects: Vec<Effect>,
    pub adjustment: Option<AdjustmentParams>,
    pub masked: bool,
}

/// Leaf records in traversal order.
pub type LayerMetadata = Vec<LayerRecord>;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub metadata: LayerMetadata,
    pub render: Arc<Raster>,
    pub group_backdrop: Option<Arc<Raster>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub seed: Option<u64>,
    pub leaf: LayerPath,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTuple {
    pub mode: Mode,
    pub asset: Option<Arc<AssetRef>>,
    pub observation: Observation,
    pub gold_calls: Vec<ToolCall>,
    pub provenance: Provenance,
    /// The perturbation behind a negative edt tuple.
    pub distortion: Option<DistortionRecord>,
}

pub fn layer_record(doc: &Document, path: &LayerPath, leaf: &LeafLayer) -> LayerRecord {
    let size = leaf
        .asset_ref
        .as_deref()
        .and_then(|id| doc.asset(id))
        .and_then(AssetRef::as_raster)
        .map_or((doc.canvas_width, doc.canvas_height), |r| (r.width(), r.height()));
    LayerRecord {
        path: path.clone(),
        name: leaf.name.clone(),
        kind: leaf.kind,
        group_path: path.parent().unwrap_or_default(),
        position: (leaf.x, leaf.y),
        size,
        opacity: leaf.opacity,
        blend: leaf.blend,
        visible: leaf.visible,
        clipped: leaf.clipped,
        effects: leaf.effects.clone(),
        adjustment: leaf.adjustment,
        masked: leaf.mask.as_ref().is_some_and(|m| m.enabled),
    }
}

/// Records of the first `upto` leaves in traversal order that lie inside
/// the group at `scope`.
pub fn metadata_in_scope(doc: &Document, scope: &LayerPath, upto: usize) -> LayerMetadata {
    doc.traversal_order()
        .into_iter()
        .take(upto)
        .filter(|p| p.starts_with(scope))
        .map(|p| {
            let leaf = doc.resolve_leaf(&p).expect("traversal paths resolve");
            layer_record(doc, &p, leaf)
        })
        .collect()
}

pub struct Stage2 {
    pub assets: Vec<Arc<AssetRef>>,
    /// `metadata[k]` lists the first `k` leaves.
    pub metadata: Vec<LayerMetadata>,
    /// `renders[k]` is the composite of the first `k` leaves.
    pub renders: Vec<Raster>,
}

fn check(doc: &Document) -> Result<(), DatasetError> {
    let v = doc.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::InvalidDocument(v))
    }
}

pub fn extract_stage2(doc: &Document) -> Result<Stage2, DatasetError> {
    check(doc)?;
    let n = doc.leaf_count();
    let all = metadata_in_scope(doc, &LayerPath::root(), n);
    let renders = (0..=n).map(|k| render::composite_prefix(doc, k)).collect::<Result<_, _>>()?;
    Ok(Stage2 {
        assets: doc.assets.values().cloned().collect(),
        metadata: (0..=n).map(|k| all[..k].to_vec()).collect(),
        renders,
    })
}

/// The document with only its first `step` leaves; every group and every
/// asset is kept, so leaf paths below `step` are unchanged.
pub fn prefix_document(doc: &Document, step: usize) -> Document {
    fn prune(group: &mut GroupNode, seen: &mut usize, step: usize) {
        group.children.retain_mut(|c| match c {
            Node::Leaf(_) => {
                *seen += 1;
                *seen <= step
            }
            Node::Group(g) => {
                prune(g, seen, step);
                true
            }
        });
    }
    let mut out = doc.clone();
    prune(&mut out.root, &mut 0, step);
    out
}

fn leaf_at<'d>(doc: &'d Document, leaf: &LayerPath) -> Result<&'d LeafLayer, DatasetError> {
    doc.resolve_leaf(leaf).map_err(|e| match e {
        DocError::NotALeaf(p) => DatasetError::PathNotALeaf(p),
        other => DatasetError::Path(other),
    })
}

/// Calls that rebuild `leaf` on the document truncated before it: the
/// insert, then opacity, blend, visibility, clipping, effects in stored
/// order and the mask, each only when it differs from the inserted default.
pub fn derive_gen_calls(doc: &Document, leaf: &LayerPath) -> Result<Vec<ToolCall>, DatasetError> {
    let l = leaf_at(doc, leaf)?;
    let (group, index) = leaf.split_last().ok_or_else(|| DatasetError::PathNotALeaf(leaf.clone()))?;
    let asset_insert = |tool: &str| {
        ToolCall::new(tool)
            .with("group", group.clone())
            .with("index", index)
            .with("asset_id", l.asset_ref.clone().unwrap_or_default())
            .with("x", l.x)
            .with("y", l.y)
    };
    let mut calls = vec![match l.kind {
        LayerKind::Pixel => asset_insert("insert_image_layer"),
        LayerKind::Shape => asset_insert("insert_shape_layer"),
        LayerKind::SmartObject => asset_insert("insert_smart_object"),
        LayerKind::Text => ToolCall::new("insert_text_layer")
            .with("group", group.clone())
            .with("index", index)
            .with("asset_id", l.asset_ref.clone().unwrap_or_default())
            .with("text", l.text_content.clone().unwrap_or_default())
            .with("x", l.x)
            .with("y", l.y),
        LayerKind::Adjustment => {
            let (kind, p1, p2) = match l.adjustment {
                Some(AdjustmentParams::BrightnessContrast {
                    brightness,
                    contrast,
                }) => ("brightness_contrast", brightness, contrast),
                _ => ("invert", 0, 0),
            };
            ToolCall::new("insert_adjustment_layer")
                .with("group", group.clone())
                .with("index", index)
                .with_enum("kind", kind)
                .with("p1", p1)
                .with("p2", p2)
        }
    }];
    let at = || leaf.clone();
    if l.opacity != 255 {
        calls.push(ToolCall::new("set_opacity").with("layer", at()).with("value", l.opacity));
    }
    if l.blend != BlendMode::Normal {
        calls.push(ToolCall::new("set_blend_mode").with("layer", at()).with_enum("mode", l.blend.name()));
    }
    if !l.visible {
        calls.push(ToolCall::new("set_visibility").with("layer", at()).with("flag", false));
    }
    if l.clipped {
        calls.push(ToolCall::new("set_clipping").with("layer", at()).with("flag", true));
    }
    calls.extend(l.effects.iter().map(|e| effect_call(leaf, e)));
    if let Some(m) = l.mask.as_ref().filter(|m| m.enabled) {
        let source = m.source_asset.clone().ok_or_else(|| DatasetError::MaskWithoutSource(leaf.clone()))?;
        calls.push(
            ToolCall::new("attach_mask")
                .with("layer", at())
                .with("asset_id", source)
                .with("x", m.x)
                .with("y", m.y),
        );
    }
    Ok(calls)
}

fn step_of(doc: &Document, leaf: &LayerPath) -> Result<usize, DatasetError> {
    leaf_at(doc, leaf)?;
    Ok(doc.step_of(leaf).expect("resolved leaves are in traversal order"))
}

pub fn build_gen_tuple(doc: &Document, doc_id: &str, leaf: &LayerPath) -> Result<TrainingTuple, DatasetError> {
    check(doc)?;
    let step = step_of(doc, leaf)?;
    let l = leaf_at(doc, leaf)?;
    let gold_calls = derive_gen_calls(doc, leaf)?;
    let scope = leaf.parent().unwrap_or_default();
    Ok(TrainingTuple {
        mode: Mode::Gen,
        asset: l.asset_ref.as_deref().and_then(|id| doc.assets.get(id)).cloned(),
        observation: Observation {
            metadata: metadata_in_scope(doc, &scope, step),
            render: Arc::new(render::composite_prefix(doc, step)?),
            group_backdrop: None,
        },
        gold_calls,
        provenance: Provenance {
            doc_id: doc_id.to_string(),
            seed: None,
            leaf: leaf.clone(),
            step,
        },
        distortion: None,
    })
}

fn edt_observation(doc: &Document, original: &Document, leaf: &LayerPath, step: usize) -> Result<Observation, DatasetError> {
    let scope = leaf.parent().unwrap_or_default();
    Ok(Observation {
        metadata: metadata_in_scope(doc, &scope, step + 1),
        render: Arc::new(render::composite_prefix(doc, step + 1)?),
        group_backdrop: Some(Arc::new(render::group_backdrop(original, &scope)?)),
    })
}

pub fn build_edt_tuple(
    doc: &Document,
    doc_id: &str,
    leaf: &LayerPath,
    seed: u64,
    config: &DistortionConfig,
) -> Result<TrainingTuple, DatasetError> {
    check(doc)?;
    let step = step_of(doc, leaf)?;
    let (distorted, record) = distort(doc, leaf, seed, config)?;
    Ok(TrainingTuple {
        mode: Mode::Edt,
        asset: None,
        observation: edt_observation(&distorted, doc, leaf, step)?,
        gold_calls: derive_edt_calls(&record)?,
        provenance: Provenance {
            doc_id: doc_id.to_string(),
            seed: Some(seed),
            leaf: leaf.clone(),
            step,
        },
        distortion: Some(record),
    })
}

pub fn build_positive_edt_tuple(doc: &Document, doc_id: &str, leaf: &LayerPath) -> Result<TrainingTuple, DatasetError> {
    check(doc)?;
    let step = step_of(doc, leaf)?;
    Ok(TrainingTuple {
        mode: Mode::Edt,
        asset: None,
        observation: edt_observation(doc, doc, leaf, step)?,
        gold_calls: Vec::new(),
        provenance: Provenance {
            doc_id: doc_id.to_string(),
            seed: None,
            leaf: leaf.clone(),
            step,
        },
        distortion: None,
    })
}

/// How many tuples of each kind to draw per document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Gen tuples per document; `None` takes every asset-bearing leaf.
    pub gen_per_doc: Option<usize>,
    pub edt_per_doc: usize,
    pub positive_per_doc: usize,
    pub distortion: DistortionConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            gen_per_doc: None,
            edt_per_doc: 4,
            positive_per_doc: 1,
            distortion: DistortionConfig::default(),
        }
    }
}

pub(crate) fn sub_seed(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// All tuples for one document, in a fixed order: gen tuples by traversal
/// step, then negative and positive edt tuples.
pub fn build_document_tuples(doc: &Document, doc_id: &str, seed: u64, config: &DatasetConfig) -> Result<Vec<TrainingTuple>, DatasetError> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    check(doc)?;
    let mut rng = ChaCha8Rng::from_seed(sub_seed(seed, &[doc_id.as_bytes(), b"select"]));
    let order = doc.traversal_order();
    let mut out = Vec::new();

    let with_asset: Vec<&LayerPath> = order
        .iter()
        .filter(|p| doc.resolve_leaf(p).is_ok_and(|l| l.asset_ref.is_some()))
        .collect();
    let mut gen_paths = with_asset.clone();
    if let Some(n) = config.gen_per_doc {
        gen_paths.shuffle(&mut rng);
        gen_paths.truncate(n);
        gen_paths.sort_by_key(|p| doc.step_of(p));
    }
    for p in gen_paths {
        out.push(build_gen_tuple(doc, doc_id, p)?);
    }

    if order.is_empty() {
        return Ok(out);
    }
    for i in 0..config.edt_per_doc {
        let leaf = &order[rng.gen_range(0..order.len())];
        let tuple_seed = u64::from_le_bytes(sub_seed(seed, &[doc_id.as_bytes(), b"edt", &(i as u64).to_le_bytes()])[..8].try_into().expect("8 bytes"));
        match build_edt_tuple(doc, doc_id, leaf, tuple_seed, &config.distortion) {
            Ok(t) => out.push(t),
            Err(DatasetError::NothingToDistort(_)) => {}
            Err(e) => return Err(e),
        }
    }
    for _ in 0..config.positive_per_doc {
        let leaf = &order[rng.gen_range(0..order.len())];
        out.push(build_positive_edt_tuple(doc, doc_id, leaf)?);
    }
    Ok(out)
}

/// Tuples for a whole corpus, ordered by document id. `jobs` worker threads
/// are used; the output does not depend on it.
pub fn build_corpus(
    docs: &BTreeMap<String, Document>,
    seed: u64,
    config: &DatasetConfig,
    jobs: usize,
) -> Result<Vec<TrainingTuple>, DatasetError> {
    use rayon::prelude::*;
    let entries: Vec<(&String, &Document)> = docs.iter().collect();
    let run = || -> Result<Vec<Vec<TrainingTuple>>, DatasetError> {
        entries
            .par_iter()
            .map(|(id, doc)| build_document_tuples(doc, id, seed, config))
            .collect()
    };
    let per_doc = if jobs <= 1 {
        entries
            .iter()
            .map(|(id, doc)| build_document_tuples(doc, id, seed, config))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| DatasetError::Io {
                path: "thread pool".into(),
                message: e.to_string(),
            })?
            .install(run)?
    };
    Ok(per_doc.into_iter().flatten().collect())
}
