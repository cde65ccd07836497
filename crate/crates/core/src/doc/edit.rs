use super::{DocError, Document, GroupNode, LayerPath, Node};

impl Document {
    fn group_mut(&mut self, path: &LayerPath) -> Result<&mut GroupNode, DocError> {
        let mut group = &mut self.root;
        for &i in &path.0 {
            group = match group.children.get_mut(i) {
                Some(Node::Group(g)) => g,
                Some(Node::Leaf(_)) => return Err(DocError::NotAGroup(path.clone())),
                None => return Err(DocError::PathOutOfBounds(path.clone())),
            };
        }
        Ok(group)
    }

    fn checked(self) -> Result<Document, DocError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(DocError::InvariantViolation(violations))
        }
    }

    /// New document with `node` at `parent.children[index]`.
    pub fn insert_node(&self, parent: &LayerPath, index: usize, node: Node) -> Result<Document, DocError> {
        let mut doc = self.clone();
        let group = doc.group_mut(parent)?;
        if index > group.children.len() {
            return Err(DocError::PathOutOfBounds(parent.child(index)));
        }
        group.children.insert(index, node);
        doc.checked()
    }

    /// New document without the node at `path`; later siblings shift down.
    pub fn remove_node(&self, path: &LayerPath) -> Result<Document, DocError> {
        let (parent, index) = path.split_last().ok_or(DocError::CannotRemoveRoot)?;
        let mut doc = self.clone();
        let group = doc.group_mut(&parent).map_err(|e| match e {
            DocError::NotAGroup(_) => DocError::PathOutOfBounds(path.clone()),
            other => other,
        })?;
        if index >= group.children.len() {
            return Err(DocError::PathOutOfBounds(path.clone()));
        }
        group.children.remove(index);
        doc.checked()
    }

    /// New document with the node at `path` replaced by `f(node)`. The root
    /// can be edited through this too, as a group.
    pub fn update_node<F>(&self, path: &LayerPath, f: F) -> Result<Document, DocError>
    where
        F: FnOnce(&mut Node) -> Result<(), DocError>,
    {
        let mut doc = self.clone();
        match path.split_last() {
            None => {
                let mut node = Node::Group(std::mem::replace(&mut doc.root, GroupNode::new("")));
                let result = f(&mut node);
                match node {
                    Node::Group(g) => doc.root = g,
                    Node::Leaf(_) => return Err(DocError::NotAGroup(LayerPath::root())),
                }
                result?;
            }
            Some((parent, index)) => {
                let group = doc.group_mut(&parent).map_err(|_| DocError::PathOutOfBounds(path.clone()))?;
                let node = group
                    .children
                    .get_mut(index)
                    .ok_or_else(|| DocError::PathOutOfBounds(path.clone()))?;
                f(node)?;
            }
        }
        doc.checked()
    }
}

#[cfg(test)]
mod tests {
    use crate::doc::*;
    use crate::raster::Raster;

    fn doc_with_asset() -> Document {
        Document::new(4, 4).with_asset(AssetRef::raster("a", Raster::filled(1, 1, [9, 9, 9, 255])))
    }

    fn leaf(name: &str) -> Node {
        LeafLayer::pixel(name, "a", 0, 0).into()
    }

    fn clipped(name: &str) -> Node {
        let mut l = LeafLayer::pixel(name, "a", 0, 0);
        l.clipped = true;
        l.into()
    }

    #[test]
    fn insert_into_empty_root_and_append() {
        let doc = doc_with_asset();
        let one = doc.insert_node(&LayerPath::root(), 0, leaf("x")).unwrap();
        assert_eq!(one.leaf_count(), 1);
        let two = one.insert_node(&LayerPath::root(), 1, leaf("top")).unwrap();
        assert_eq!(two.root.children[1].name(), "top");
        assert!(matches!(
            two.insert_node(&LayerPath::root(), 5, leaf("y")),
            Err(DocError::PathOutOfBounds(_))
        ));
    }

    #[test]
    fn insert_clipped_into_empty_group_violates() {
        let doc = doc_with_asset()
            .insert_node(&LayerPath::root(), 0, GroupNode::new("g").into())
            .unwrap();
        match doc.insert_node(&LayerPath(vec![0]), 0, clipped("c")) {
            Err(DocError::InvariantViolation(v)) => assert_eq!(v[0].rule, Rule::NoClipBase),
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn insert_under_leaf_is_not_a_group() {
        let doc = doc_with_asset().insert_node(&LayerPath::root(), 0, leaf("x")).unwrap();
        assert_eq!(
            doc.insert_node(&LayerPath(vec![0]), 0, leaf("y")).unwrap_err(),
            DocError::NotAGroup(LayerPath(vec![0]))
        );
    }

    #[test]
    fn remove_only_child() {
        let doc = doc_with_asset().insert_node(&LayerPath::root(), 0, leaf("x")).unwrap();
        let empty = doc.remove_node(&LayerPath(vec![0])).unwrap();
        assert!(empty.root.children.is_empty());
        assert_eq!(doc.remove_node(&LayerPath::root()).unwrap_err(), DocError::CannotRemoveRoot);
    }

    #[test]
    fn remove_clip_base_violates() {
        let mut doc = doc_with_asset();
        doc.root.children = vec![leaf("base"), clipped("c")];
        assert!(matches!(
            doc.remove_node(&LayerPath(vec![0])),
            Err(DocError::InvariantViolation(_))
        ));
    }

    #[test]
    fn remove_nested_keeps_order() {
        let mut doc = doc_with_asset();
        doc.root.children = vec![GroupNode::new("g")
            .with_children(vec![leaf("a"), leaf("b"), leaf("c")])
            .into()];
        let out = doc.remove_node(&LayerPath(vec![0, 1])).unwrap();
        let g = out.root.children[0].as_group().unwrap();
        let names: Vec<_> = g.children.iter().map(Node::name).collect();
        assert_eq!(names, ["a", "c"]);
        assert!(matches!(doc.remove_node(&LayerPath(vec![0, 3])), Err(DocError::PathOutOfBounds(_))));
    }

    #[test]
    fn update_root_and_leaf() {
        let doc = doc_with_asset().insert_node(&LayerPath::root(), 0, leaf("x")).unwrap();
        let renamed = doc
            .update_node(&LayerPath(vec![0]), |n| {
                if let Node::Leaf(l) = n {
                    l.opacity = 10;
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(renamed.root.children[0].opacity(), 10);
        let bad = doc.update_node(&LayerPath::root(), |n| {
            if let Node::Group(g) = n {
                g.opacity = 3;
            }
            Ok(())
        });
        assert!(matches!(bad, Err(DocError::InvariantViolation(_))));
    }
}
