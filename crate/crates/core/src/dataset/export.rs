use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doc::{AssetPayload, AssetRef, BlendMode, Document, LayerKind, Node};
use crate::raster::Raster;
use crate::tools::{ToolCall, REGISTRY_VERSION};

use super::{DatasetError, DistortionRecord, LayerMetadata, Mode, Observation, Provenance, TrainingTuple};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const TUPLES: &str = "tuples.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub registry_version: u32,
    pub seed: Option<u64>,
    pub tuple_count: usize,
    /// `gen`, `edt_negative` and `edt_positive`.
    pub counts: BTreeMap<String, usize>,
    pub doc_ids: Vec<String>,
    pub render_files: usize,
    pub asset_files: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetLine {
    asset_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    png: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    source_uri: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TupleLine {
    mode: Mode,
    asset: Option<AssetLine>,
    metadata: LayerMetadata,
    render: String,
    group_backdrop: Option<String>,
    gold_calls: Vec<ToolCall>,
    provenance: Provenance,
    distortion: Option<DistortionRecord>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Content-addressed PNG store under one subdirectory.
struct PngStore<'a> {
    root: &'a Path,
    dir: &'static str,
    written: BTreeSet<String>,
}

impl PngStore<'_> {
    fn put(&mut self, raster: &Raster) -> Result<String, DatasetError> {
        let png = raster.to_png().map_err(|e| DatasetError::Format(e.to_string()))?;
        let rel = format!("{}/{}.png", self.dir, hex::encode(Sha256::digest(&png)));
        if self.written.insert(rel.clone()) {
            let path = self.root.join(&rel);
            fs::write(&path, &png).map_err(|e| io_err(&path, e))?;
        }
        Ok(rel)
    }
}

fn mode_key(t: &TrainingTuple) -> &'static str {
    match (t.mode, t.gold_calls.is_empty()) {
        (Mode::Gen, _) => "gen",
        (Mode::Edt, false) => "edt_negative",
        (Mode::Edt, true) => "edt_positive",
    }
}

/// Writes `tuples` under `out_dir` as `manifest.json`, `tuples.jsonl` and
/// content-addressed PNGs in `renders/` and `assets/`. Output bytes depend
/// only on the tuples and `seed`.
pub fn export_corpus(tuples: &[TrainingTuple], out_dir: &Path, seed: Option<u64>) -> Result<CorpusManifest, DatasetError> {
    for sub in ["renders", "assets"] {
        let p = out_dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }
    let mut renders = PngStore {
        root: out_dir,
        dir: "renders",
        written: BTreeSet::new(),
    };
    let mut assets = PngStore {
        root: out_dir,
        dir: "assets",
        written: BTreeSet::new(),
    };
    let mut counts: BTreeMap<String, usize> = ["gen", "edt_negative", "edt_positive"].iter().map(|k| (k.to_string(), 0)).collect();
    let mut doc_ids = BTreeSet::new();

    let tuples_path = out_dir.join(TUPLES);
    let mut out = Vec::new();
    for t in tuples {
        *counts.entry(mode_key(t).into()).or_default() += 1;
        doc_ids.insert(t.provenance.doc_id.clone());
        let asset = match &t.asset {
            None => None,
            Some(a) => Some(match &a.payload {
                AssetPayload::Raster(r) => AssetLine {
                    asset_id: a.asset_id.clone(),
                    png: Some(assets.put(r)?),
                    text: None,
                    source_uri: a.source_uri.clone(),
                },
                AssetPayload::Text(s) => AssetLine {
                    asset_id: a.asset_id.clone(),
                    png: None,
                    text: Some(s.clone()),
                    source_uri: a.source_uri.clone(),
                },
            }),
        };
        let line = TupleLine {
            mode: t.mode,
            asset,
            metadata: t.observation.metadata.clone(),
            render: renders.put(&t.observation.render)?,
            group_backdrop: t.observation.group_backdrop.as_deref().map(|g| renders.put(g)).transpose()?,
            gold_calls: t.gold_calls.clone(),
            provenance: t.provenance.clone(),
            distortion: t.distortion.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| DatasetError::Format(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(&tuples_path, &out).map_err(|e| io_err(&tuples_path, e))?;

    let manifest = CorpusManifest {
        format_version: FORMAT_VERSION,
        registry_version: REGISTRY_VERSION,
        seed,
        tuple_count: tuples.len(),
        counts,
        doc_ids: doc_ids.into_iter().collect(),
        render_files: renders.written.len(),
        asset_files: assets.written.len(),
    };
    let manifest_path = out_dir.join(MANIFEST);
    let mut f = fs::File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| DatasetError::Format(e.to_string()))?;
    f.write_all(b"\n").map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest)
}

fn load_png(dir: &Path, rel: &str, cache: &mut BTreeMap<String, Arc<Raster>>) -> Result<Arc<Raster>, DatasetError> {
    if rel.contains("..") || Path::new(rel).is_absolute() {
        return Err(DatasetError::Format(format!("raster path {rel:?} leaves the corpus directory")));
    }
    if let Some(r) = cache.get(rel) {
        return Ok(r.clone());
    }
    let path = dir.join(rel);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let r = Arc::new(Raster::from_png(&bytes).map_err(|e| DatasetError::Format(format!("{rel}: {e}")))?);
    cache.insert(rel.to_string(), r.clone());
    Ok(r)
}

/// Reads a directory written by [`export_corpus`].
pub fn read_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<TrainingTuple>), DatasetError> {
    let manifest_path = dir.join(MANIFEST);
    let bytes = fs::read(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_slice(&bytes).map_err(|e| DatasetError::Format(format!("{MANIFEST}: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::Format(format!("unsupported corpus format_version {}", manifest.format_version)));
    }

    let tuples_path = dir.join(TUPLES);
    let file = fs::File::open(&tuples_path).map_err(|e| io_err(&tuples_path, e))?;
    let mut cache = BTreeMap::new();
    let mut tuples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&tuples_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TupleLine = serde_json::from_str(&line).map_err(|e| DatasetError::Format(format!("{TUPLES} line {}: {e}", n + 1)))?;
        let asset = match t.asset {
            None => None,
            Some(a) => {
                let payload = match (a.png, a.text) {
                    (Some(p), None) => AssetPayload::Raster((*load_png(dir, &p, &mut cache)?).clone()),
                    (None, Some(s)) => AssetPayload::Text(s),
                    _ => return Err(DatasetError::Format(format!("{TUPLES} line {}: asset needs exactly one of png, text", n + 1))),
                };
                Some(Arc::new(AssetRef {
                    asset_id: a.asset_id,
                    payload,
                    source_uri: a.source_uri,
                }))
            }
        };
        tuples.push(TrainingTuple {
            mode: t.mode,
            asset,
            observation: Observation {
                metadata: t.metadata,
                render: load_png(dir, &t.render, &mut cache)?,
                group_backdrop: t.group_backdrop.map(|g| load_png(dir, &g, &mut cache)).transpose()?,
            },
            gold_calls: t.gold_calls,
            provenance: t.provenance,
            distortion: t.distortion,
        });
    }
    if tuples.len() != manifest.tuple_count {
        return Err(DatasetError::Format(format!(
            "manifest lists {} tuples, {TUPLES} has {}",
            manifest.tuple_count,
            tuples.len()
        )));
    }
    Ok((manifest, tuples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Source documents.
    pub sample_count: usize,
    pub total_leaves: usize,
    /// 0 when the corpus is empty; see `mean_defined`.
    pub mean_layers_per_sample: f64,
    pub mean_defined: bool,
    pub layer_type_counts: BTreeMap<String, usize>,
    /// Distinct attribute types set away from their defaults anywhere in
    /// the corpus, e.g. `opacity`, `blend:multiply`, `effect:stroke`.
    pub attribute_type_count: usize,
    pub attribute_types: BTreeSet<String>,
}

fn collect_attrs(node: &Node, out: &mut BTreeSet<String>) {
    if node.opacity() != 255 {
        out.insert("opacity".into());
    }
    if node.blend() != BlendMode::Normal && node.blend() != BlendMode::PassThrough {
        out.insert(format!("blend:{}", node.blend().name()));
    }
    if !node.visible() {
        out.insert("visibility".into());
    }
    if node.clipped() {
        out.insert("clipping".into());
    }
    if node.mask().is_some() {
        out.insert("mask".into());
    }
    match node {
        Node::Group(g) => {
            for c in &g.children {
                collect_attrs(c, out);
            }
        }
        Node::Leaf(l) => {
            out.insert("position".into());
            out.extend(l.effects.iter().map(|e| format!("effect:{}", e.kind().name())));
            if let Some(a) = &l.adjustment {
                out.insert(format!("adjustment:{}", a.kind_name()));
            }
        }
    }
}

/// Statistics over source documents.
pub fn corpus_stats<'a>(docs: impl IntoIterator<Item = &'a Document>) -> CorpusStats {
    let mut sample_count = 0;
    let mut total_leaves = 0;
    let mut layer_type_counts: BTreeMap<String, usize> = LayerKind::ALL.iter().map(|k| (k.name().to_string(), 0)).collect();
    let mut attrs = BTreeSet::new();
    for doc in docs {
        sample_count += 1;
        for p in doc.traversal_order() {
            let leaf = doc.resolve_leaf(&p).expect("traversal yields leaves");
            total_leaves += 1;
            *layer_type_counts.entry(leaf.kind.name().to_string()).or_default() += 1;
        }
        for c in &doc.root.children {
            collect_attrs(c, &mut attrs);
        }
    }
    let mean_defined = sample_count > 0;
    CorpusStats {
        sample_count,
        total_leaves,
        mean_layers_per_sample: if mean_defined { total_leaves as f64 / sample_count as f64 } else { 0.0 },
        mean_defined,
        layer_type_counts,
        attribute_type_count: attrs.len(),
        attribute_types: attrs,
    }
}
