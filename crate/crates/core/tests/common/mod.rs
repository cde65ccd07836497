#![allow(dead_code)]

use layerkit::doc::{Document, LayerPath, Node, Rgb};
use layerkit::fixtures::{generate, CLASSES};
use layerkit::tools::{registry, Constraint, ParamValue, ToolCall, ValueKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_doc(seed: u64) -> Document {
    generate(CLASSES[(seed % CLASSES.len() as u64) as usize], seed)
}

/// Every node path, root included.
pub fn all_paths(doc: &Document) -> Vec<LayerPath> {
    fn walk(children: &[Node], at: &LayerPath, out: &mut Vec<LayerPath>) {
        for (i, c) in children.iter().enumerate() {
            let p = at.child(i);
            out.push(p.clone());
            if let Node::Group(g) = c {
                walk(&g.children, &p, out);
            }
        }
    }
    let mut out = vec![LayerPath::root()];
    walk(&doc.root.children, &LayerPath::root(), &mut out);
    out
}

pub fn group_paths(doc: &Document) -> Vec<LayerPath> {
    all_paths(doc).into_iter().filter(|p| doc.resolve_group(p).is_ok()).collect()
}

/// A call to a random registry tool with plausible, not always valid,
/// arguments.
pub fn random_call(rng: &mut ChaCha8Rng, doc: &Document) -> ToolCall {
    let sig = registry().choose(rng).unwrap();
    let paths = all_paths(doc);
    let ids: Vec<&String> = doc.assets.keys().collect();
    let mut call = ToolCall::new(sig.name);
    for p in &sig.params {
        let v = match (p.kind, p.constraint) {
            (ValueKind::Path, _) => ParamValue::Path(paths.choose(rng).unwrap().clone()),
            (ValueKind::Int, Constraint::Range { min, max, .. }) => {
                let (lo, hi) = (min.max(-80), max.min(300));
                let v = if p.name == "index" { rng.gen_range(0..6) } else { rng.gen_range(lo..=hi) };
                // Occasionally step outside the range.
                ParamValue::Int(if rng.gen_bool(0.05) { max.saturating_add(1) } else { v })
            }
            (ValueKind::Int, _) => ParamValue::Int(rng.gen_range(-50..300)),
            (ValueKind::Float, _) => ParamValue::Float(rng.gen_range(-1.0..1.0)),
            (ValueKind::Text, _) if p.name == "asset_id" && !ids.is_empty() => ParamValue::Text(ids.choose(rng).unwrap().to_string()),
            (ValueKind::Text, _) => ParamValue::Text(format!("t{}", rng.gen_range(0..100))),
            (ValueKind::Color, _) => ParamValue::Color(Rgb::new(rng.gen(), rng.gen(), rng.gen())),
            (ValueKind::Enum, Constraint::OneOf(names)) => ParamValue::Enum(names.choose(rng).unwrap().to_string()),
            (ValueKind::Enum, _) => ParamValue::Enum("x".into()),
            (ValueKind::Point, _) => ParamValue::Point(rng.gen_range(-20..80), rng.gen_range(-20..80)),
            (ValueKind::Bool, _) => ParamValue::Bool(rng.gen()),
        };
        call.params.insert(p.name.to_string(), v);
    }
    call
}
