//! Reader and writer for a subset of the binary PSD format.
//!
//! Supported: 8-bit RGB documents, layer records with name, bounds, opacity,
//! clipping, visibility and blend key, group structure from section
//! dividers, and raw or PackBits channel data. Everything else is skipped and
//! listed in the [`PsdSubsetReport`].

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::doc::{AssetRef, BlendMode, Document, GroupNode, LayerKind, LeafLayer, Node};
use crate::raster::Raster;
use crate::render;

use super::packbits::{decode_packbits, encode_packbits, PackBitsError};

const SIGNATURE: &[u8; 4] = b"8BPS";
const RESOURCE_SIG: &[u8; 4] = b"8BIM";
const BOUNDING_DIVIDER_NAME: &str = "</Layer group>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PsdError {
    #[error("bad signature {0:?}")]
    BadSignature([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported depth {0}")]
    UnsupportedDepth(u16),
    #[error("unsupported color mode {0}")]
    UnsupportedColorMode(u16),
    #[error("truncated while reading {0}")]
    Truncated(&'static str),
    #[error("unbalanced section dividers: {0}")]
    MalformedSectionNesting(String),
    #[error("unsupported channel compression {0}")]
    UnsupportedCompression(u16),
    #[error("bad channel data in layer {layer}: {source}")]
    BadChannelData { layer: usize, source: PackBitsError },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PsdSubsetReport {
    pub layers_read: usize,
    pub groups_read: usize,
    /// Byte regions or document features that were not read or not written.
    pub skipped_features: Vec<String>,
    /// Repairs made while reading (orphan clip flags, unknown blend keys, ...).
    pub warnings: Vec<String>,
}

impl PsdSubsetReport {
    fn skip(&mut self, feature: impl Into<String>) {
        let f = feature.into();
        if !self.skipped_features.contains(&f) {
            self.skipped_features.push(f);
        }
    }
}

pub fn blend_key(mode: BlendMode) -> &'static [u8; 4] {
    match mode {
        BlendMode::Normal => b"norm",
        BlendMode::Multiply => b"mul ",
        BlendMode::Screen => b"scrn",
        BlendMode::Overlay => b"over",
        BlendMode::Darken => b"dark",
        BlendMode::Lighten => b"lite",
        BlendMode::LinearDodge => b"lddg",
        BlendMode::Difference => b"diff",
        BlendMode::PassThrough => b"pass",
    }
}

pub fn blend_from_key(key: &[u8; 4]) -> Option<BlendMode> {
    BlendMode::ALL.iter().copied().find(|m| blend_key(*m) == key)
}

// ---------------------------------------------------------------- reading

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], PsdError> {
        let end = self.pos.checked_add(n).ok_or(PsdError::Truncated(what))?;
        let s = self.data.get(self.pos..end).ok_or(PsdError::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], PsdError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
    fn u8(&mut self, what: &'static str) -> Result<u8, PsdError> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> Result<u16, PsdError> {
        Ok(u16::from_be_bytes(self.array(what)?))
    }
    fn i16(&mut self, what: &'static str) -> Result<i16, PsdError> {
        Ok(i16::from_be_bytes(self.array(what)?))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32, PsdError> {
        Ok(u32::from_be_bytes(self.array(what)?))
    }
    fn i32(&mut self, what: &'static str) -> Result<i32, PsdError> {
        Ok(i32::from_be_bytes(self.array(what)?))
    }
    /// Length-prefixed (u32) sub-cursor.
    fn section(&mut self, what: &'static str) -> Result<Cursor<'a>, PsdError> {
        let len = self.u32(what)? as usize;
        Ok(Cursor {
            data: self.take(len, what)?,
            pos: 0,
        })
    }
    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Divider {
    None,
    Open,
    Close,
}

struct Record {
    top: i32,
    left: i32,
    bottom: i32,
    right: i32,
    channels: Vec<(i16, u32)>,
    blend_key: [u8; 4],
    opacity: u8,
    clipping: u8,
    flags: u8,
    name: String,
    divider: Divider,
    divider_key: Option<[u8; 4]>,
}

impl Record {
    fn width(&self) -> usize {
        (self.right - self.left).max(0) as usize
    }
    fn height(&self) -> usize {
        (self.bottom - self.top).max(0) as usize
    }
}

fn read_record(c: &mut Cursor, report: &mut PsdSubsetReport) -> Result<Record, PsdError> {
    let top = c.i32("layer bounds")?;
    let left = c.i32("layer bounds")?;
    let bottom = c.i32("layer bounds")?;
    let right = c.i32("layer bounds")?;
    let n = c.u16("channel count")?;
    let mut channels = Vec::with_capacity(n as usize);
    for _ in 0..n {
        channels.push((c.i16("channel id")?, c.u32("channel length")?));
    }
    let _sig = c.array::<4>("blend signature")?;
    let blend_key = c.array::<4>("blend key")?;
    let opacity = c.u8("opacity")?;
    let clipping = c.u8("clipping")?;
    let flags = c.u8("flags")?;
    let _filler = c.u8("filler")?;
    let mut extra = c.section("layer extra data")?;

    let mask = extra.section("layer mask data")?;
    if mask.remaining() > 0 {
        report.skip("layer mask data");
    }
    let ranges = extra.section("blending ranges")?;
    if ranges.remaining() > 0 {
        report.skip("blending ranges");
    }
    let name_len = extra.u8("layer name")? as usize;
    let raw_name = extra.take(name_len, "layer name")?;
    let padded = (name_len + 1).div_ceil(4) * 4;
    extra.take((padded - 1 - name_len).min(extra.remaining()), "layer name padding")?;
    let mut name: String = raw_name.iter().map(|&b| b as char).collect();

    let mut divider = Divider::None;
    let mut divider_key = None;
    while extra.remaining() >= 12 {
        let _sig = extra.array::<4>("tagged block signature")?;
        let key = extra.array::<4>("tagged block key")?;
        let mut block = extra.section("tagged block")?;
        match &key {
            b"lsct" | b"lsdk" => {
                divider = match block.u32("section divider type")? {
                    1 | 2 => Divider::Open,
                    3 => Divider::Close,
                    _ => Divider::None,
                };
                if block.remaining() >= 8 {
                    let _sig = block.array::<4>("section divider signature")?;
                    divider_key = Some(block.array::<4>("section divider blend key")?);
                }
            }
            b"luni" => {
                let count = block.u32("unicode name")? as usize;
                let units: Vec<u16> = (0..count)
                    .map(|_| block.u16("unicode name"))
                    .collect::<Result<_, _>>()?;
                name = String::from_utf16_lossy(&units);
            }
            other => report.skip(format!("tagged block '{}'", String::from_utf8_lossy(other))),
        }
    }
    Ok(Record {
        top,
        left,
        bottom,
        right,
        channels,
        blend_key,
        opacity,
        clipping,
        flags,
        name,
        divider,
        divider_key,
    })
}

fn read_channel(c: &mut Cursor, len: u32, w: usize, h: usize, layer: usize) -> Result<Vec<u8>, PsdError> {
    let mut ch = Cursor {
        data: c.take(len as usize, "channel data")?,
        pos: 0,
    };
    if len == 0 {
        return Ok(vec![0; w * h]);
    }
    match ch.u16("channel compression")? {
        0 => Ok(ch.take(w * h, "raw channel data")?.to_vec()),
        1 => {
            let counts: Vec<usize> = (0..h)
                .map(|_| ch.u16("row byte counts").map(usize::from))
                .collect::<Result<_, _>>()?;
            let mut out = Vec::with_capacity(w * h);
            for count in counts {
                let row = ch.take(count, "packbits row")?;
                out.extend(decode_packbits(row, w).map_err(|source| PsdError::BadChannelData { layer, source })?);
            }
            Ok(out)
        }
        other => Err(PsdError::UnsupportedCompression(other)),
    }
}

struct OpenGroup {
    group: GroupNode,
    /// Children in top-to-bottom order; reversed when the group closes.
    children: Vec<Node>,
}

/// Parses a PSD byte buffer into a document.
pub fn read_psd(bytes: &[u8]) -> Result<(Document, PsdSubsetReport), PsdError> {
    let mut report = PsdSubsetReport::default();
    let mut c = Cursor { data: bytes, pos: 0 };
    let sig = c.array::<4>("signature")?;
    if &sig != SIGNATURE {
        return Err(PsdError::BadSignature(sig));
    }
    let version = c.u16("version")?;
    if version != 1 {
        return Err(PsdError::UnsupportedVersion(version));
    }
    c.take(6, "reserved")?;
    let _channels = c.u16("channel count")?;
    let height = c.u32("height")?;
    let width = c.u32("width")?;
    let depth = c.u16("depth")?;
    if depth != 8 {
        return Err(PsdError::UnsupportedDepth(depth));
    }
    let mode = c.u16("color mode")?;
    if mode != 3 {
        return Err(PsdError::UnsupportedColorMode(mode));
    }
    if c.section("color mode data")?.remaining() > 0 {
        report.skip("color mode data");
    }
    if c.section("image resources")?.remaining() > 0 {
        report.skip("image resources");
    }

    let mut doc = Document::new(width, height);
    let mut lm = c.section("layer and mask information")?;
    let records = if lm.remaining() >= 4 {
        let mut info = lm.section("layer info")?;
        let records = if info.remaining() >= 2 {
            let count = info.i16("layer count")?.unsigned_abs() as usize;
            let mut records = Vec::with_capacity(count);
            for _ in 0..count {
                records.push(read_record(&mut info, &mut report)?);
            }
            let mut pixels = Vec::with_capacity(count);
            for (i, r) in records.iter().enumerate() {
                let (w, h) = (r.width(), r.height());
                let mut rgba = vec![0u8; w * h * 4];
                let mut has_alpha = false;
                for &(id, len) in &r.channels {
                    let plane = match id {
                        -1..=2 => read_channel(&mut info, len, w, h, i)?,
                        _ => {
                            info.take(len as usize, "channel data")?;
                            report.skip(if id == -2 || id == -3 { "user mask channel".to_string() } else { format!("channel {id}") });
                            continue;
                        }
                    };
                    let slot = if id == -1 {
                        has_alpha = true;
                        3
                    } else {
                        id as usize
                    };
                    for (dst, v) in rgba.chunks_exact_mut(4).zip(plane) {
                        dst[slot] = v;
                    }
                }
                if !has_alpha {
                    rgba.chunks_exact_mut(4).for_each(|p| p[3] = 255);
                }
                pixels.push(rgba);
            }
            records.into_iter().zip(pixels).collect::<Vec<_>>()
        } else {
            Vec::new()
        };
        let global_mask = lm.section("global layer mask info");
        if matches!(&global_mask, Ok(m) if m.remaining() > 0) {
            report.skip("global layer mask info");
        }
        if lm.remaining() > 0 {
            report.skip("global tagged blocks");
        }
        records
    } else {
        Vec::new()
    };
    if c.remaining() > 0 {
        report.skip("composite image data");
    }

    // records are stored bottom to top; walk them top to bottom
    let mut stack = vec![OpenGroup {
        group: GroupNode::new("root"),
        children: Vec::new(),
    }];
    let total = records.len();
    for (rev, (r, rgba)) in records.into_iter().rev().enumerate() {
        let ordinal = total - 1 - rev;
        let key_blend = |key: &[u8; 4], report: &mut PsdSubsetReport| {
            blend_from_key(key).unwrap_or_else(|| {
                report.warnings.push(format!(
                    "layer '{}': unknown blend key '{}' read as normal",
                    r.name,
                    String::from_utf8_lossy(key)
                ));
                BlendMode::Normal
            })
        };
        match r.divider {
            Divider::Open => {
                let mut g = GroupNode::new(r.name.clone());
                g.blend = key_blend(r.divider_key.as_ref().unwrap_or(&r.blend_key), &mut report);
                g.opacity = r.opacity as u16;
                g.visible = r.flags & 0x02 == 0;
                stack.push(OpenGroup {
                    group: g,
                    children: Vec::new(),
                });
                report.groups_read += 1;
            }
            Divider::Close => {
                if stack.len() < 2 {
                    return Err(PsdError::MalformedSectionNesting(format!(
                        "bounding divider at record {ordinal} closes no group"
                    )));
                }
                let open = stack.pop().expect("length checked");
                let mut g = open.group;
                g.children = open.children.into_iter().rev().collect();
                stack.last_mut().expect("root stays").children.push(g.into());
            }
            Divider::None => {
                let id = format!("layer{ordinal:04}");
                let raster = if r.width() == 0 || r.height() == 0 {
                    report.warnings.push(format!("layer '{}': empty bounds read as 1x1 transparent", r.name));
                    Raster::new(1, 1)
                } else {
                    Raster::from_pixels(r.width() as u32, r.height() as u32, rgba).expect("sized from bounds")
                };
                doc.assets.insert(id.clone(), Arc::new(AssetRef::raster(&id, raster)));
                let mut leaf = LeafLayer::with_asset(r.name.clone(), LayerKind::Pixel, id, r.left, r.top);
                leaf.blend = key_blend(&r.blend_key, &mut report);
                if leaf.blend == BlendMode::PassThrough {
                    report.warnings.push(format!("layer '{}': pass-through on a pixel layer read as normal", r.name));
                    leaf.blend = BlendMode::Normal;
                }
                leaf.opacity = r.opacity as u16;
                leaf.clipped = r.clipping != 0;
                leaf.visible = r.flags & 0x02 == 0;
                stack.last_mut().expect("root stays").children.push(leaf.into());
                report.layers_read += 1;
            }
        }
    }
    if stack.len() != 1 {
        return Err(PsdError::MalformedSectionNesting(format!(
            "{} group(s) never closed",
            stack.len() - 1
        )));
    }
    let root = stack.pop().expect("length checked");
    doc.root.children = root.children.into_iter().rev().collect();
    clear_orphan_clips(&mut doc.root, &mut report);
    Ok((doc, report))
}

fn clear_orphan_clips(group: &mut GroupNode, report: &mut PsdSubsetReport) {
    let mut base_seen = false;
    for child in &mut group.children {
        match child {
            Node::Leaf(l) if l.clipped => {
                if !base_seen {
                    l.clipped = false;
                    report.warnings.push(format!("layer '{}': clipping flag without a base cleared", l.name));
                }
            }
            Node::Leaf(_) => base_seen = true,
            Node::Group(g) => {
                base_seen = true;
                clear_orphan_clips(g, report);
            }
        }
    }
}

// ---------------------------------------------------------------- writing

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_be_bytes());
}
fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}
fn put_i32(out: &mut Vec<u8>, v: i32) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Reserves a u32 length slot; returns its offset for [`close_len`].
fn open_len(out: &mut Vec<u8>) -> usize {
    out.extend_from_slice(&[0; 4]);
    out.len()
}
fn close_len(out: &mut [u8], start: usize) {
    let len = (out.len() - start) as u32;
    out[start - 4..start].copy_from_slice(&len.to_be_bytes());
}

struct OutRecord {
    name: String,
    left: i32,
    top: i32,
    raster: Option<Raster>,
    blend: BlendMode,
    opacity: u8,
    clipped: bool,
    visible: bool,
    divider: Option<(u32, Option<BlendMode>)>,
}

impl OutRecord {
    fn divider(name: &str, kind: u32, blend: Option<BlendMode>, opacity: u8, visible: bool) -> Self {
        OutRecord {
            name: name.to_string(),
            left: 0,
            top: 0,
            raster: None,
            blend: blend.unwrap_or(BlendMode::Normal),
            opacity,
            clipped: false,
            visible,
            divider: Some((kind, blend)),
        }
    }
}

fn collect(doc: &Document, group: &GroupNode, out: &mut Vec<OutRecord>, report: &mut PsdSubsetReport) {
    for child in &group.children {
        match child {
            Node::Group(g) => {
                if g.mask.is_some() {
                    report.skip("group masks");
                }
                out.push(OutRecord::divider(BOUNDING_DIVIDER_NAME, 3, None, 255, true));
                collect(doc, g, out, report);
                out.push(OutRecord::divider(&g.name, if g.visible { 1 } else { 2 }, Some(g.blend), g.opacity.min(255) as u8, g.visible));
            }
            Node::Leaf(l) => {
                if l.kind == LayerKind::Adjustment {
                    report.skip("adjustment layers");
                    continue;
                }
                if l.kind != LayerKind::Pixel {
                    report.skip("layer kinds other than pixel");
                }
                if l.text_content.is_some() {
                    report.skip("text content");
                }
                if !l.effects.is_empty() {
                    report.skip("effects block");
                }
                if l.mask.is_some() {
                    report.skip("layer masks");
                }
                let Some(raster) = l.asset_ref.as_deref().and_then(|id| doc.asset(id)).and_then(|a| a.as_raster()) else {
                    report.warnings.push(format!("layer '{}': no raster asset, not written", l.name));
                    continue;
                };
                out.push(OutRecord {
                    name: l.name.clone(),
                    left: l.x,
                    top: l.y,
                    raster: Some(raster.clone()),
                    blend: l.blend,
                    opacity: l.opacity.min(255) as u8,
                    clipped: l.clipped,
                    visible: l.visible,
                    divider: None,
                });
            }
        }
    }
}

/// Row-wise PackBits encoding of one plane: u16 compression, row byte
/// counts, rows.
fn encode_plane(plane: &[u8], w: usize, h: usize) -> Vec<u8> {
    let rows: Vec<Vec<u8>> = (0..h).map(|y| encode_packbits(&plane[y * w..(y + 1) * w])).collect();
    let mut out = Vec::new();
    put_u16(&mut out, 1);
    for r in &rows {
        put_u16(&mut out, r.len() as u16);
    }
    for r in rows {
        out.extend(r);
    }
    out
}

fn planes(r: &Raster) -> [Vec<u8>; 4] {
    let mut p: [Vec<u8>; 4] = Default::default();
    for px in r.pixels().chunks_exact(4) {
        for c in 0..4 {
            p[c].push(px[c]);
        }
    }
    p
}

fn pascal_name(out: &mut Vec<u8>, name: &str) {
    let bytes: Vec<u8> = name.chars().take(255).map(|c| if c.is_ascii() { c as u8 } else { b'?' }).collect();
    out.push(bytes.len() as u8);
    out.extend_from_slice(&bytes);
    let total = bytes.len() + 1;
    out.resize(out.len() + total.div_ceil(4) * 4 - total, 0);
}

fn tagged(out: &mut Vec<u8>, key: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(RESOURCE_SIG);
    out.extend_from_slice(key);
    let padded = data.len().div_ceil(4) * 4;
    put_u32(out, padded as u32);
    out.extend_from_slice(data);
    out.resize(out.len() + padded - data.len(), 0);
}

/// Serializes the subset-representable part of `doc`. Dropped features are
/// listed in the report; the composite image section holds the full render.
pub fn write_psd(doc: &Document) -> (Vec<u8>, PsdSubsetReport) {
    let mut report = PsdSubsetReport::default();
    let mut records = Vec::new();
    collect(doc, &doc.root, &mut records, &mut report);

    let mut out = Vec::new();
    out.extend_from_slice(SIGNATURE);
    put_u16(&mut out, 1);
    out.extend_from_slice(&[0; 6]);
    put_u16(&mut out, 4);
    put_u32(&mut out, doc.canvas_height);
    put_u32(&mut out, doc.canvas_width);
    put_u16(&mut out, 8);
    put_u16(&mut out, 3);
    put_u32(&mut out, 0); // color mode data
    put_u32(&mut out, 0); // image resources

    let lm = open_len(&mut out);
    let info = open_len(&mut out);
    out.extend_from_slice(&(-(records.len() as i16)).to_be_bytes());
    let mut channel_data: Vec<Vec<Vec<u8>>> = Vec::with_capacity(records.len());
    for rec in &records {
        let (w, h) = rec.raster.as_ref().map_or((0, 0), |r| (r.width() as usize, r.height() as usize));
        put_i32(&mut out, rec.top);
        put_i32(&mut out, rec.left);
        put_i32(&mut out, rec.top + h as i32);
        put_i32(&mut out, rec.left + w as i32);
        let chans: Vec<Vec<u8>> = match &rec.raster {
            Some(r) => {
                let [pr, pg, pb, pa] = planes(r);
                [pa, pr, pg, pb].iter().map(|p| encode_plane(p, w, h)).collect()
            }
            None => vec![vec![0, 0]; 4],
        };
        put_u16(&mut out, 4);
        for (id, data) in [-1i16, 0, 1, 2].iter().zip(&chans) {
            out.extend_from_slice(&id.to_be_bytes());
            put_u32(&mut out, data.len() as u32);
        }
        out.extend_from_slice(RESOURCE_SIG);
        out.extend_from_slice(blend_key(rec.blend));
        out.push(rec.opacity);
        out.push(rec.clipped as u8);
        out.push(if rec.visible { 0 } else { 0x02 });
        out.push(0);
        let extra = open_len(&mut out);
        put_u32(&mut out, 0); // mask data
        put_u32(&mut out, 0); // blending ranges
        pascal_name(&mut out, &rec.name);
        if let Some((kind, blend)) = rec.divider {
            let mut d = kind.to_be_bytes().to_vec();
            if let Some(b) = blend {
                d.extend_from_slice(RESOURCE_SIG);
                d.extend_from_slice(blend_key(b));
            }
            tagged(&mut out, b"lsct", &d);
        }
        let units: Vec<u16> = rec.name.encode_utf16().collect();
        let mut d = (units.len() as u32).to_be_bytes().to_vec();
        units.iter().for_each(|u| d.extend_from_slice(&u.to_be_bytes()));
        tagged(&mut out, b"luni", &d);
        close_len(&mut out, extra);
        channel_data.push(chans);
    }
    for chans in channel_data {
        chans.into_iter().for_each(|c| out.extend(c));
    }
    if (out.len() - info) % 2 == 1 {
        out.push(0);
    }
    close_len(&mut out, info);
    put_u32(&mut out, 0); // global layer mask info
    close_len(&mut out, lm);

    let composite = render::composite(doc).unwrap_or_else(|_| {
        report.warnings.push("document failed validation; composite image left transparent".into());
        Raster::new(doc.canvas_width, doc.canvas_height)
    });
    let (w, h) = (composite.width() as usize, composite.height() as usize);
    let [pr, pg, pb, pa] = planes(&composite);
    let rows: Vec<Vec<u8>> = [pr, pg, pb, pa]
        .iter()
        .flat_map(|p| (0..h).map(move |y| encode_packbits(&p[y * w..(y + 1) * w])))
        .collect();
    put_u16(&mut out, 1);
    for r in &rows {
        put_u16(&mut out, r.len() as u16);
    }
    rows.into_iter().for_each(|r| out.extend(r));
    report.layers_read = records.iter().filter(|r| r.divider.is_none()).count();
    report.groups_read = records.iter().filter(|r| matches!(r.divider, Some((1 | 2, _)))).count();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::{Effect, Rgb};

    fn header(sig: &[u8; 4], version: u16, depth: u16, mode: u16) -> Vec<u8> {
        let mut v = sig.to_vec();
        put_u16(&mut v, version);
        v.extend_from_slice(&[0; 6]);
        put_u16(&mut v, 3);
        put_u32(&mut v, 2);
        put_u32(&mut v, 3);
        put_u16(&mut v, depth);
        put_u16(&mut v, mode);
        v
    }

    fn empty_file() -> Vec<u8> {
        let mut v = header(SIGNATURE, 1, 8, 3);
        put_u32(&mut v, 0);
        put_u32(&mut v, 0);
        put_u32(&mut v, 0);
        put_u16(&mut v, 0);
        v
    }

    #[test]
    fn header_errors() {
        assert_eq!(read_psd(&header(b"8BPT", 1, 8, 3)).unwrap_err(), PsdError::BadSignature(*b"8BPT"));
        assert_eq!(read_psd(&header(SIGNATURE, 2, 8, 3)).unwrap_err(), PsdError::UnsupportedVersion(2));
        assert_eq!(read_psd(&header(SIGNATURE, 1, 16, 3)).unwrap_err(), PsdError::UnsupportedDepth(16));
        assert_eq!(read_psd(&header(SIGNATURE, 1, 8, 4)).unwrap_err(), PsdError::UnsupportedColorMode(4));
        assert!(matches!(read_psd(&header(SIGNATURE, 1, 8, 3)), Err(PsdError::Truncated(_))));
        assert!(matches!(read_psd(b"8BP"), Err(PsdError::Truncated(_))));
    }

    #[test]
    fn zero_layer_file() {
        let (doc, report) = read_psd(&empty_file()).unwrap();
        assert_eq!((doc.canvas_width, doc.canvas_height), (3, 2));
        assert!(doc.root.children.is_empty());
        assert_eq!(report.layers_read, 0);
    }

    fn sample() -> Document {
        let mut r = Raster::new(3, 2);
        r.put(0, 0, [255, 0, 0, 255]);
        r.put(2, 1, [1, 2, 3, 4]);
        let mut doc = Document::new(8, 6)
            .with_asset(AssetRef::raster("a", r))
            .with_asset(AssetRef::raster("b", Raster::filled(2, 2, [9, 9, 9, 200])));
        let mut top = LeafLayer::pixel("tóp", "b", -1, 4);
        top.blend = BlendMode::Screen;
        top.opacity = 77;
        top.clipped = true;
        let mut hidden = LeafLayer::pixel("hidden", "b", 0, 0);
        hidden.visible = false;
        let mut g = GroupNode::new("group").with_children(vec![LeafLayer::pixel("a", "a", 1, 1).into(), top.into()]);
        g.opacity = 128;
        doc.root.children = vec![hidden.into(), g.into(), GroupNode::new("empty").into()];
        doc
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let doc = sample();
        let (bytes, report) = write_psd(&doc);
        assert!(report.skipped_features.is_empty());
        let (back, rr) = read_psd(&bytes).unwrap();
        assert!(back.content_eq(&doc));
        assert_eq!((rr.layers_read, rr.groups_read), (3, 2));
        assert!(rr.warnings.is_empty(), "{:?}", rr.warnings);
        let (again, _) = write_psd(&back);
        assert_eq!(again, bytes);
    }

    #[test]
    fn effects_are_dropped_and_reported() {
        let mut doc = sample();
        if let Node::Leaf(l) = &mut doc.root.children[0] {
            l.effects.push(Effect::ColorOverlay {
                color: Rgb::BLACK,
                opacity: 10,
            });
        }
        let (bytes, report) = write_psd(&doc);
        assert!(report.skipped_features.contains(&"effects block".to_string()));
        let (back, _) = read_psd(&bytes).unwrap();
        assert!(back.content_eq(&sample()));
    }

    /// File whose layer records carry only the given section divider types.
    fn divider_file(kinds: &[u32]) -> Vec<u8> {
        let mut out = header(SIGNATURE, 1, 8, 3);
        put_u32(&mut out, 0);
        put_u32(&mut out, 0);
        let lm = open_len(&mut out);
        let info = open_len(&mut out);
        out.extend_from_slice(&(kinds.len() as i16).to_be_bytes());
        for kind in kinds {
            out.extend_from_slice(&[0; 16]);
            put_u16(&mut out, 0);
            out.extend_from_slice(RESOURCE_SIG);
            out.extend_from_slice(b"norm");
            out.extend_from_slice(&[255, 0, 0, 0]);
            let extra = open_len(&mut out);
            put_u32(&mut out, 0);
            put_u32(&mut out, 0);
            pascal_name(&mut out, "g");
            tagged(&mut out, b"lsct", &kind.to_be_bytes());
            close_len(&mut out, extra);
        }
        close_len(&mut out, info);
        put_u32(&mut out, 0);
        close_len(&mut out, lm);
        out
    }

    #[test]
    fn unbalanced_dividers_are_errors() {
        // bottom to top: divider 3 closes, divider 1 opens
        assert!(read_psd(&divider_file(&[3, 1])).is_ok());
        assert!(matches!(read_psd(&divider_file(&[1])), Err(PsdError::MalformedSectionNesting(_))));
        assert!(matches!(read_psd(&divider_file(&[3])), Err(PsdError::MalformedSectionNesting(_))));
        assert!(matches!(read_psd(&divider_file(&[1, 3])), Err(PsdError::MalformedSectionNesting(_))));
    }
}
