mod common;

use common::{group_paths, random_doc};
use layerkit::doc::{GroupNode, LayerPath, LeafLayer, Node};
use layerkit::fixtures::generate;
use proptest::prelude::*;

fn leaf_paths(children: &[Node], at: &LayerPath, out: &mut Vec<LayerPath>) {
    for (i, c) in children.iter().enumerate() {
        match c {
            Node::Leaf(_) => out.push(at.child(i)),
            Node::Group(g) => leaf_paths(&g.children, &at.child(i), out),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn traversal_visits_each_leaf_once(seed in any::<u64>()) {
        let doc = generate("nested", seed);
        let order = doc.traversal_order();
        let mut expected = Vec::new();
        leaf_paths(&doc.root.children, &LayerPath::root(), &mut expected);
        let mut got = order.clone();
        got.sort();
        expected.sort();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(order.len(), doc.leaf_count());
        for (k, p) in order.iter().enumerate() {
            prop_assert_eq!(doc.step_of(p), Some(k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn insert_then_remove_is_identity(seed in any::<u64>(), pick in any::<prop::sample::Index>(), slot in any::<prop::sample::Index>(), as_group in any::<bool>()) {
        let doc = random_doc(seed);
        let groups = group_paths(&doc);
        let parent = pick.get(&groups).clone();
        let len = doc.resolve_group(&parent).unwrap().children.len();
        let index = slot.index(len + 1);
        let asset = doc.assets.keys().next().unwrap().clone();
        let node: Node = if as_group {
            GroupNode::new("extra").with_children(vec![LeafLayer::pixel("x", asset, 3, 4).into()]).into()
        } else {
            LeafLayer::pixel("x", asset, -2, 7).into()
        };
        let grown = doc.insert_node(&parent, index, node).unwrap();
        prop_assert!(grown.validate().is_empty());
        prop_assert_eq!(grown.leaf_count(), doc.leaf_count() + 1);
        let back = grown.remove_node(&parent.child(index)).unwrap();
        prop_assert_eq!(back, doc);
    }
}
