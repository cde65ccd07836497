mod common;

use common::random_doc;
use layerkit::doc::{BlendMode, Node};
use layerkit::fixtures::corpus;
use layerkit::render::{blend_channel, composite, composite_filtered, composite_prefix, composite_with, RenderOptions};
use proptest::prelude::*;

fn grid() -> impl Iterator<Item = f64> {
    (0..=64).map(|i| i as f64 / 64.0)
}

#[test]
fn blend_identities_on_grid() {
    for b in grid() {
        assert_eq!(blend_channel(BlendMode::Multiply, b, 1.0).unwrap(), b);
        assert_eq!(blend_channel(BlendMode::Screen, b, 0.0).unwrap(), b);
        assert_eq!(blend_channel(BlendMode::Difference, b, b).unwrap(), 0.0);
        for s in grid() {
            let v = blend_channel(BlendMode::LinearDodge, b, s).unwrap();
            if s < 1.0 {
                assert!(blend_channel(BlendMode::LinearDodge, b, s + 1.0 / 64.0).unwrap() >= v);
            }
            if b < 1.0 {
                assert!(blend_channel(BlendMode::LinearDodge, b + 1.0 / 64.0, s).unwrap() >= v);
            }
        }
    }
}

#[test]
fn full_prefix_is_composite() {
    for (id, doc) in corpus() {
        assert_eq!(composite_prefix(&doc, doc.leaf_count()).unwrap(), composite(&doc).unwrap(), "{id}");
    }
}

fn normal_blends(nodes: &mut [Node]) {
    for n in nodes {
        match n {
            Node::Leaf(l) => l.blend = BlendMode::Normal,
            Node::Group(g) => {
                if g.blend != BlendMode::PassThrough {
                    g.blend = BlendMode::Normal;
                }
                normal_blends(&mut g.children);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn tiling_does_not_change_bytes(seed in any::<u64>(), rows in 1usize..9) {
        let doc = random_doc(seed);
        let seq = composite(&doc).unwrap();
        prop_assert_eq!(composite_with(&doc, &RenderOptions { tile_rows: rows }).unwrap(), seq.clone());
        prop_assert_eq!(composite(&doc).unwrap(), seq);
    }

    #[test]
    fn hiding_equals_exclusion(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let doc = random_doc(seed);
        let order = doc.traversal_order();
        let k = pick.index(order.len());
        let hidden = doc
            .update_node(&order[k], |n| {
                if let Node::Leaf(l) = n {
                    l.visible = false;
                }
                Ok(())
            })
            .unwrap();
        let excluded = composite_filtered(&doc, &RenderOptions::default(), |s| s != k).unwrap();
        prop_assert_eq!(composite(&hidden).unwrap(), excluded);
    }

    #[test]
    fn alpha_ignores_blend_modes(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let mut plain = doc.clone();
        normal_blends(&mut plain.root.children);
        let (a, b) = (composite(&doc).unwrap(), composite(&plain).unwrap());
        let alpha = |r: &layerkit::raster::Raster| r.pixels().chunks_exact(4).map(|p| p[3]).collect::<Vec<u8>>();
        prop_assert_eq!(alpha(&a), alpha(&b));
    }
}
