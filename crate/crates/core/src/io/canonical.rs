//! Lossless JSON document format.
//!
//! Single-file form embeds every raster as base64 PNG. Directory form writes
//! `document.json`, one PNG per raster asset and mask, and a `manifest.json`
//! listing the files with their SHA-256.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::doc::{
    AdjustmentParams, AssetKind, AssetPayload, AssetRef, BlendMode, Document, Effect, GroupNode, LayerKind, LayerPath, LeafLayer, Mask,
    Node, COLOR_SPACE, DEPTH,
};
use crate::raster::{Plane, Raster};

pub const FORMAT_VERSION: u32 = 1;
pub const DOCUMENT_FILE: &str = "document.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> CanonicalError {
    CanonicalError::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    format_version: u32,
    canvas: Canvas,
    root: GroupDto,
    assets: Vec<AssetDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Canvas {
    width: u32,
    height: u32,
    depth: u8,
    color_space: String,
}

/// Externally tagged so that error paths reach into the node body.
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NodeDto {
    Group(GroupDto),
    Layer(LayerDto),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDto {
    name: String,
    blend: BlendMode,
    opacity: u8,
    visible: bool,
    mask: Option<MaskDto>,
    children: Vec<NodeDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDto {
    name: String,
    kind: LayerKind,
    x: i32,
    y: i32,
    asset_ref: Option<String>,
    text_content: Option<String>,
    adjustment: Option<AdjustmentParams>,
    opacity: u8,
    blend: BlendMode,
    visible: bool,
    clipped: bool,
    mask: Option<MaskDto>,
    effects: Vec<Effect>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskDto {
    x: i32,
    y: i32,
    enabled: bool,
    source_asset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_base64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetDto {
    asset_id: String,
    kind: AssetKind,
    source_uri: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_base64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    document: String,
    files: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    path: String,
    sha256: String,
    /// Asset id, or the layer path of a mask.
    owner: String,
}

// ---------------------------------------------------------------- writing

/// Where PNG payloads go while writing.
enum Sink {
    Inline,
    Files(Vec<(String, String, Vec<u8>)>),
}

impl Sink {
    /// Returns `(png_base64, path)` for the payload.
    fn store(&mut self, stem: String, owner: String, png: Vec<u8>) -> (Option<String>, Option<String>) {
        match self {
            Sink::Inline => (Some(B64.encode(png)), None),
            Sink::Files(files) => {
                let path = format!("{stem}.png");
                files.push((path.clone(), owner, png));
                (None, Some(path))
            }
        }
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn mask_dto(m: &Mask, path: &LayerPath, sink: &mut Sink) -> MaskDto {
    let png = m.bitmap.to_png().expect("gray8 encodes");
    let stem = format!("masks/{}", if path.is_root() { "root".to_string() } else { path.0.iter().map(usize::to_string).collect::<Vec<_>>().join("_") });
    let (png_base64, file) = sink.store(stem, path.to_string(), png);
    MaskDto {
        x: m.x,
        y: m.y,
        enabled: m.enabled,
        source_asset: m.source_asset.clone(),
        png_base64,
        path: file,
    }
}

fn group_dto(g: &GroupNode, path: &LayerPath, sink: &mut Sink) -> GroupDto {
    GroupDto {
        name: g.name.clone(),
        blend: g.blend,
        opacity: g.opacity.min(255) as u8,
        visible: g.visible,
        mask: g.mask.as_ref().map(|m| mask_dto(m, path, sink)),
        children: g
            .children
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = path.child(i);
                match c {
                    Node::Group(g) => NodeDto::Group(group_dto(g, &p, sink)),
                    Node::Leaf(l) => NodeDto::Layer(LayerDto {
                        name: l.name.clone(),
                        kind: l.kind,
                        x: l.x,
                        y: l.y,
                        asset_ref: l.asset_ref.clone(),
                        text_content: l.text_content.clone(),
                        adjustment: l.adjustment,
                        opacity: l.opacity.min(255) as u8,
                        blend: l.blend,
                        visible: l.visible,
                        clipped: l.clipped,
                        mask: l.mask.as_ref().map(|m| mask_dto(m, &p, sink)),
                        effects: l.effects.clone(),
                    }),
                }
            })
            .collect(),
    }
}

fn to_file(doc: &Document, sink: &mut Sink) -> Result<FileDoc, CanonicalError> {
    let violations = doc.validate();
    if let Some(v) = violations.first() {
        return Err(violation(json_path(doc, &v.path, &v.field), v.detail.clone()));
    }
    let root = group_dto(&doc.root, &LayerPath::root(), sink);
    let assets = doc
        .assets
        .values()
        .enumerate()
        .map(|(i, a)| {
            let mut dto = AssetDto {
                asset_id: a.asset_id.clone(),
                kind: a.kind(),
                source_uri: a.source_uri.clone(),
                text: None,
                png_base64: None,
                path: None,
            };
            match &a.payload {
                AssetPayload::Text(t) => dto.text = Some(t.clone()),
                AssetPayload::Raster(r) => {
                    let png = r.to_png().expect("rgba8 encodes");
                    (dto.png_base64, dto.path) = sink.store(format!("assets/{i:04}_{}", file_stem(&a.asset_id)), a.asset_id.clone(), png);
                }
            }
            dto
        })
        .collect();
    Ok(FileDoc {
        format_version: FORMAT_VERSION,
        canvas: Canvas {
            width: doc.canvas_width,
            height: doc.canvas_height,
            depth: DEPTH,
            color_space: COLOR_SPACE.to_string(),
        },
        root,
        assets,
    })
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("plain data serializes");
    out.push(b'\n');
    out
}

/// Single-file form with inline rasters. Fails only for invalid documents.
pub fn write_doc(doc: &Document) -> Result<Vec<u8>, CanonicalError> {
    Ok(to_json(&to_file(doc, &mut Sink::Inline)?))
}

/// Directory form. Existing files with the same names are overwritten.
pub fn write_doc_dir(doc: &Document, dir: &Path) -> Result<(), CanonicalError> {
    let mut sink = Sink::Files(Vec::new());
    let file = to_file(doc, &mut sink)?;
    let Sink::Files(files) = sink else { unreachable!() };
    let io = |p: &Path, e: std::io::Error| CanonicalError::Io {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    let mut entries = Vec::with_capacity(files.len());
    for (rel, owner, png) in files {
        let target = dir.join(&rel);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&target, &png).map_err(|e| io(&target, e))?;
        entries.push(ManifestEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&png)),
            owner,
        });
    }
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let doc_path = dir.join(DOCUMENT_FILE);
    fs::write(&doc_path, to_json(&file)).map_err(|e| io(&doc_path, e))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        document: DOCUMENT_FILE.to_string(),
        files: entries,
    };
    let man_path = dir.join(MANIFEST_FILE);
    fs::write(&man_path, to_json(&manifest)).map_err(|e| io(&man_path, e))
}

// ---------------------------------------------------------------- reading

/// `root.children[2].group.children[0].layer.opacity` style path for a node field.
fn json_path(doc: &Document, path: &LayerPath, field: &str) -> String {
    let mut s = String::from("root");
    let mut group = &doc.root;
    for i in &path.0 {
        s.push_str(&format!(".children[{i}]"));
        match group.children.get(*i) {
            Some(Node::Group(g)) => {
                s.push_str(".group");
                group = g;
            }
            Some(Node::Leaf(_)) => s.push_str(".layer"),
            None => break,
        }
    }
    if !field.is_empty() {
        s.push('.');
        s.push_str(field);
    }
    s
}

trait Loader {
    fn load(&self, png_base64: &Option<String>, path: &Option<String>, at: &str) -> Result<Vec<u8>, CanonicalError>;
}

struct InlineLoader;

impl Loader for InlineLoader {
    fn load(&self, png_base64: &Option<String>, path: &Option<String>, at: &str) -> Result<Vec<u8>, CanonicalError> {
        match (png_base64, path) {
            (Some(b), None) => B64.decode(b).map_err(|e| violation(format!("{at}.png_base64"), e.to_string())),
            (None, Some(_)) => Err(violation(format!("{at}.path"), "file references need the directory form")),
            _ => Err(violation(at, "exactly one of png_base64 or path is required")),
        }
    }
}

struct DirLoader<'a> {
    dir: &'a Path,
    hashes: BTreeMap<String, String>,
}

impl Loader for DirLoader<'_> {
    fn load(&self, png_base64: &Option<String>, path: &Option<String>, at: &str) -> Result<Vec<u8>, CanonicalError> {
        let rel = match (png_base64, path) {
            (Some(_), None) => return InlineLoader.load(png_base64, path, at),
            (None, Some(p)) => p,
            _ => return Err(violation(at, "exactly one of png_base64 or path is required")),
        };
        let at_path = format!("{at}.path");
        if !Path::new(rel).components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(violation(at_path, "path must be relative and stay inside the document directory"));
        }
        let expected = self.hashes.get(rel).ok_or_else(|| violation(&at_path, format!("{rel} is not listed in the manifest")))?;
        let full = self.dir.join(rel);
        let bytes = fs::read(&full).map_err(|e| CanonicalError::Io {
            path: full.display().to_string(),
            message: e.to_string(),
        })?;
        if &hex::encode(Sha256::digest(&bytes)) != expected {
            return Err(violation(at_path, format!("{rel} does not match its manifest hash")));
        }
        Ok(bytes)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, CanonicalError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        violation(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })
}

fn mask_from(dto: &MaskDto, at: &str, loader: &dyn Loader) -> Result<Mask, CanonicalError> {
    let png = loader.load(&dto.png_base64, &dto.path, at)?;
    let bitmap = Plane::from_png(&png).map_err(|e| violation(at, e.to_string()))?;
    Ok(Mask {
        x: dto.x,
        y: dto.y,
        bitmap: Arc::new(bitmap),
        enabled: dto.enabled,
        source_asset: dto.source_asset.clone(),
    })
}

fn group_from(dto: &GroupDto, at: &str, loader: &dyn Loader) -> Result<GroupNode, CanonicalError> {
    let mut g = GroupNode::new(dto.name.clone());
    g.blend = dto.blend;
    g.opacity = dto.opacity as u16;
    g.visible = dto.visible;
    g.mask = dto.mask.as_ref().map(|m| mask_from(m, &format!("{at}.mask"), loader)).transpose()?;
    for (i, child) in dto.children.iter().enumerate() {
        g.children.push(match child {
            NodeDto::Group(c) => group_from(c, &format!("{at}.children[{i}].group"), loader)?.into(),
            NodeDto::Layer(l) => LeafLayer {
                name: l.name.clone(),
                kind: l.kind,
                x: l.x,
                y: l.y,
                asset_ref: l.asset_ref.clone(),
                text_content: l.text_content.clone(),
                adjustment: l.adjustment,
                opacity: l.opacity as u16,
                blend: l.blend,
                visible: l.visible,
                clipped: l.clipped,
                mask: l.mask.as_ref().map(|m| mask_from(m, &format!("{at}.children[{i}].layer.mask"), loader)).transpose()?,
                effects: l.effects.clone(),
            }
            .into(),
        });
    }
    Ok(g)
}

fn from_file(file: FileDoc, loader: &dyn Loader) -> Result<Document, CanonicalError> {
    if file.format_version != FORMAT_VERSION {
        return Err(violation("format_version", format!("unsupported version {}", file.format_version)));
    }
    if file.canvas.depth != DEPTH {
        return Err(violation("canvas.depth", format!("only depth {DEPTH} is supported")));
    }
    if file.canvas.color_space != COLOR_SPACE {
        return Err(violation("canvas.color_space", format!("only {COLOR_SPACE:?} is supported")));
    }
    let mut doc = Document::new(file.canvas.width, file.canvas.height);
    doc.root = group_from(&file.root, "root", loader)?;
    for (i, a) in file.assets.iter().enumerate() {
        let at = format!("assets[{i}]");
        let payload = match a.kind {
            AssetKind::Text => AssetPayload::Text(a.text.clone().ok_or_else(|| violation(format!("{at}.text"), "text asset needs text"))?),
            AssetKind::Raster => {
                let png = loader.load(&a.png_base64, &a.path, &at)?;
                AssetPayload::Raster(Raster::from_png(&png).map_err(|e| violation(&at, e.to_string()))?)
            }
        };
        if doc.assets.contains_key(&a.asset_id) {
            return Err(violation(format!("{at}.asset_id"), format!("duplicate asset id {:?}", a.asset_id)));
        }
        doc.assets.insert(
            a.asset_id.clone(),
            Arc::new(AssetRef {
                asset_id: a.asset_id.clone(),
                payload,
                source_uri: a.source_uri.clone(),
            }),
        );
    }
    if let Some(v) = doc.validate().first() {
        return Err(violation(json_path(&doc, &v.path, &v.field), format!("{} ({})", v.detail, v.rule.name())));
    }
    Ok(doc)
}

pub fn read_doc(bytes: &[u8]) -> Result<Document, CanonicalError> {
    from_file(parse(bytes)?, &InlineLoader)
}

pub fn read_doc_dir(dir: &Path) -> Result<Document, CanonicalError> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| CanonicalError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })
    };
    let manifest: Manifest = parse(&read(MANIFEST_FILE)?).map_err(|e| match e {
        CanonicalError::SchemaViolation { path, message } => violation(format!("manifest.{path}"), message),
        other => other,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(violation("manifest.format_version", format!("unsupported version {}", manifest.format_version)));
    }
    let loader = DirLoader {
        dir,
        hashes: manifest.files.into_iter().map(|e| (e.path, e.sha256)).collect(),
    };
    from_file(parse(&read(&manifest.document)?)?, &loader)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::Rgb;

    fn sample() -> Document {
        let mut doc = Document::new(6, 4)
            .with_asset(AssetRef::raster("img one", Raster::filled(2, 2, [1, 2, 3, 4])))
            .with_asset(AssetRef::text("caption", "hello"));
        let mut leaf = LeafLayer::pixel("p", "img one", 1, -1);
        leaf.effects.push(Effect::DropShadow {
            color: Rgb::new(10, 20, 30),
            opacity: 100,
            angle: 45,
            distance: 3,
            blur: 2,
        });
        leaf.mask = Some(Mask {
            x: 0,
            y: 1,
            bitmap: Arc::new(Plane::from_data(2, 1, vec![0, 200]).unwrap()),
            enabled: true,
            source_asset: None,
        });
        let mut adj = LeafLayer::adjustment(
            "bc",
            AdjustmentParams::BrightnessContrast {
                brightness: -20,
                contrast: 35,
            },
        );
        adj.blend = BlendMode::Screen;
        let mut g = GroupNode::new("g").with_children(vec![leaf.into(), adj.into()]);
        g.blend = BlendMode::Multiply;
        g.opacity = 9;
        doc.root.children = vec![g.into()];
        doc
    }

    #[test]
    fn inline_round_trip_and_determinism() {
        let doc = sample();
        let a = write_doc(&doc).unwrap();
        assert_eq!(a, write_doc(&doc).unwrap());
        assert_eq!(read_doc(&a).unwrap(), doc);
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let doc = sample();
        write_doc_dir(&doc, dir.path()).unwrap();
        assert!(dir.path().join("assets/0001_img_one.png").exists());
        assert_eq!(read_doc_dir(dir.path()).unwrap(), doc);
        fs::write(dir.path().join("assets/0001_img_one.png"), b"tampered").unwrap();
        assert!(matches!(read_doc_dir(dir.path()), Err(CanonicalError::SchemaViolation { .. })));
    }

    fn edit_json(f: impl FnOnce(&mut serde_json::Value)) -> Result<Document, CanonicalError> {
        let mut v: serde_json::Value = serde_json::from_slice(&write_doc(&sample()).unwrap()).unwrap();
        f(&mut v);
        read_doc(&serde_json::to_vec(&v).unwrap())
    }

    #[test]
    fn opacity_256_is_a_schema_violation() {
        let err = edit_json(|v| v["root"]["children"][0]["group"]["opacity"] = 256.into()).unwrap_err();
        match err {
            CanonicalError::SchemaViolation { path, .. } => assert_eq!(path, "root.children[0].group.opacity"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_and_versions_rejected() {
        assert!(edit_json(|v| v["root"]["children"][0]["group"]["children"][0]["layer"]["bogus"] = 1.into()).is_err());
        let err = edit_json(|v| v["format_version"] = 2.into()).unwrap_err();
        assert!(matches!(err, CanonicalError::SchemaViolation { ref path, .. } if path == "format_version"));
        let err = edit_json(|v| v["root"]["children"][0]["group"]["children"][0]["layer"]["asset_ref"] = "missing".into()).unwrap_err();
        assert!(matches!(err, CanonicalError::SchemaViolation { ref path, .. } if path == "root.children[0].group.children[0].layer.asset_ref"), "{err:?}");
    }
}
