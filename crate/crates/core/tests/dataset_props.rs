mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::random_doc;
use layerkit::dataset::{build_corpus, distort, export_corpus, extract_stage2, prefix_document, DatasetConfig, DistortionConfig};
use layerkit::fixtures::corpus;
use layerkit::render::composite;
use proptest::prelude::*;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn corpus_build_is_deterministic_across_workers() {
    let docs: BTreeMap<_, _> = corpus().into_iter().filter(|(id, _)| id.ends_with("-00") || id.ends_with("-01")).collect();
    let cfg = DatasetConfig::default();
    let a = build_corpus(&docs, 7, &cfg, 1).unwrap();
    let b = build_corpus(&docs, 7, &cfg, 4).unwrap();
    assert_eq!(a, b);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_corpus(&a, da.path(), Some(7)).unwrap();
    export_corpus(&b, db.path(), Some(7)).unwrap();
    assert_eq!(tree(da.path()), tree(db.path()));
    let c = build_corpus(&docs, 8, &cfg, 2).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distortion_records_are_well_formed(seed in any::<u64>(), pick in any::<prop::sample::Index>(), dseed in any::<u64>()) {
        let doc = random_doc(seed);
        let order = doc.traversal_order();
        let leaf = pick.get(&order).clone();
        let cfg = DistortionConfig::default();
        match distort(&doc, &leaf, dseed, &cfg) {
            Ok((bad, record)) => {
                prop_assert!(!record.entries.is_empty() && record.entries.len() <= cfg.max_edits);
                prop_assert!(record.attempts >= 1 && record.attempts <= cfg.max_attempts);
                let keys: Vec<_> = record.entries.iter().map(|e| (e.path.clone(), e.attribute.clone())).collect();
                let mut sorted = keys.clone();
                sorted.sort();
                sorted.dedup();
                prop_assert_eq!(&keys, &sorted);
                for e in &record.entries {
                    prop_assert_ne!(&e.original_value, &e.distorted_value);
                    prop_assert_eq!(e.path.parent(), leaf.parent());
                    prop_assert!(doc.step_of(&e.path).unwrap() <= doc.step_of(&leaf).unwrap());
                }
                prop_assert!(bad.validate().is_empty());
                prop_assert_eq!(bad.traversal_order(), order);
            }
            Err(layerkit::dataset::DatasetError::NothingToDistort(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn stage2_has_one_entry_per_prefix(seed in any::<u64>()) {
        let doc = random_doc(seed);
        let n = doc.leaf_count();
        let s = extract_stage2(&doc).unwrap();
        prop_assert_eq!(s.metadata.len(), n + 1);
        prop_assert_eq!(s.renders.len(), n + 1);
        prop_assert_eq!(s.assets.len(), doc.assets.len());
        for (k, m) in s.metadata.iter().enumerate() {
            prop_assert_eq!(m.len(), k);
        }
        prop_assert_eq!(&s.renders[n], &composite(&doc).unwrap());
        prop_assert!(s.renders[0].pixels().iter().all(|b| *b == 0));
        for k in [0, n / 2, n] {
            prop_assert_eq!(&s.renders[k], &composite(&prefix_document(&doc, k)).unwrap());
        }
    }
}
