use layerkit::dataset::{derive_edt_calls, derive_gen_calls, distort, DatasetError, prefix_document, DistortionConfig};
use layerkit::fixtures::{corpus, fixture, CLASSES};
use layerkit::render::{composite, composite_prefix, group_backdrop};
use layerkit::tools::execute_sequence;
use layerkit::workflow::{run_workflow, DesignPlan, ReplayPlanner, WorkflowConfig};

#[test]
fn gen_calls_rebuild_every_leaf() {
    for (id, doc) in corpus() {
        for (step, leaf) in doc.traversal_order().iter().enumerate() {
            let calls = derive_gen_calls(&doc, leaf).unwrap();
            let (out, _) = execute_sequence(&prefix_document(&doc, step), &calls).unwrap_or_else(|e| panic!("{id} step {step}: {e:?}"));
            assert_eq!(composite(&out).unwrap(), composite_prefix(&doc, step + 1).unwrap(), "{id} step {step}");
        }
    }
}

#[test]
fn edt_calls_restore_original() {
    let cfg = DistortionConfig::default();
    for class in CLASSES {
        let doc = fixture(class, 0);
        let order = doc.traversal_order();
        let want = composite(&doc).unwrap();
        let mut done = 0;
        for seed in 0..20u64 {
            let leaf = &order[seed as usize % order.len()];
            let scope = leaf.parent().unwrap();
            // Leaves under a hidden group cannot change the render.
            let (bad, record) = match distort(&doc, leaf, seed, &cfg) {
                Err(DatasetError::NothingToDistort(_)) => continue,
                other => other.unwrap(),
            };
            done += 1;
            assert_eq!(group_backdrop(&bad, &scope).unwrap(), group_backdrop(&doc, &scope).unwrap());
            let (fixed, _) = execute_sequence(&bad, &derive_edt_calls(&record).unwrap()).unwrap();
            assert_eq!(composite(&fixed).unwrap(), want, "{class} seed {seed}");
        }
        assert!(done >= 10, "{class}: only {done} distortions");
    }
}

#[test]
fn replay_workflow_matches_fixture() {
    for (id, doc) in corpus() {
        let plan = DesignPlan::from_document(&doc);
        let mut replay = ReplayPlanner::from_document(&doc).unwrap();
        let (out, state) = run_workflow(&plan, &mut replay, &WorkflowConfig::default()).unwrap();
        assert_eq!(composite(&out).unwrap(), composite(&doc).unwrap(), "{id}");
        assert_eq!(state.trace.len(), 2 * doc.leaf_count());
    }
}
