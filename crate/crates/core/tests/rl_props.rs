mod common;

use common::{random_call, random_doc};
use layerkit::rl::{advantages, clipped_surrogate, reward, RewardConfig};
use layerkit::tools::ToolCall;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn call_lists(seed: u64) -> (Vec<ToolCall>, Vec<ToolCall>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = random_doc(seed);
    let gold: Vec<ToolCall> = (0..rng.gen_range(0..6)).map(|_| random_call(&mut rng, &doc)).collect();
    let mut pred = gold.clone();
    for slot in pred.iter_mut() {
        if rng.gen_bool(0.4) {
            *slot = random_call(&mut rng, &doc);
        }
    }
    if rng.gen_bool(0.3) {
        pred.push(random_call(&mut rng, &doc));
    }
    if rng.gen_bool(0.3) && !pred.is_empty() {
        pred.remove(rng.gen_range(0..pred.len()));
    }
    (pred, gold)
}

fn total(pred: &[ToolCall], gold: &[ToolCall]) -> f64 {
    reward(pred, gold, &RewardConfig::default()).unwrap().total
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn reward_is_bounded_and_reflexive(seed in any::<u64>()) {
        let (pred, gold) = call_lists(seed);
        let t = total(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(total(&gold, &gold), 1.0);
        prop_assert_eq!(total(&pred, &pred), 1.0);
    }

    #[test]
    fn appending_a_matching_pair_to_aligned_lists_never_lowers_reward(seed in any::<u64>()) {
        let (mut pred, gold) = call_lists(seed);
        pred.truncate(gold.len());
        pred.resize_with(gold.len(), || ToolCall::new("delete_layer"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let extra = random_call(&mut rng, &random_doc(seed));
        let before = total(&pred, &gold);
        let (mut p, mut g) = (pred.clone(), gold.clone());
        p.push(extra.clone());
        g.push(extra);
        prop_assert!(total(&p, &g) >= before);
    }

    #[test]
    fn dropping_a_trailing_identical_pair_never_raises_reward(seed in any::<u64>()) {
        let (mut pred, gold) = call_lists(seed);
        pred.truncate(gold.len());
        pred.resize_with(gold.len(), || ToolCall::new("delete_layer"));
        let before = total(&pred, &gold);
        let (mut p, mut g) = (pred.clone(), gold.clone());
        let last = g.len();
        if last > 0 && p[last - 1] == g[last - 1] {
            p.pop();
            g.pop();
            prop_assert!(total(&p, &g) <= before + 1e-12);
        }
    }

    #[test]
    fn advantages_are_standardized(rewards in prop::collection::vec(-5.0f64..5.0, 2..16)) {
        prop_assume!(rewards.iter().any(|r| *r != rewards[0]));
        let a = advantages(&rewards).unwrap();
        let (m, s) = mean_std(&a);
        prop_assert!(m.abs() <= 1e-9);
        prop_assert!((s - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn advantages_ignore_a_common_offset(rewards in prop::collection::vec(0.0f64..1.0, 2..16), c in -10.0f64..10.0) {
        let a = advantages(&rewards).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
        let b = advantages(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn surrogate_never_exceeds_unclipped(ratio in 0.0f64..3.0, adv in -4.0f64..4.0, eps in 0.01f64..0.5) {
        let s = clipped_surrogate(ratio, adv, eps);
        prop_assert!(s <= ratio * adv);
        if adv >= 0.0 {
            prop_assert!(s >= ratio.clamp(1.0 - eps, 1.0 + eps).min(ratio) * adv - 1e-12);
        }
    }
}

#[test]
fn surrogate_with_negative_advantage_can_fall_below_unclipped() {
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    assert!(clipped_surrogate(0.5, -1.0, 0.2) < -0.5);
}

#[test]
fn deleting_a_name_matched_pair_can_raise_reward() {
    let set = |layer: usize, v: i64| ToolCall::new("set_opacity").with("layer", layerkit::doc::LayerPath(vec![layer])).with("value", v);
    let gold = vec![set(0, 100), set(1, 128)];
    let pred = vec![set(1, 128), set(0, 100), set(1, 128)];
    let before = total(&pred, &gold);
    let after = total(&pred[1..], &gold);
    assert!((before - 0.8 / 3.0).abs() < 1e-12, "{before}");
    assert_eq!(after, 1.0);
}

#[test]
fn appending_to_misaligned_lists_can_lower_reward() {
    let set = |layer: usize, v: i64| ToolCall::new("set_opacity").with("layer", layerkit::doc::LayerPath(vec![layer])).with("value", v);
    let vis = ToolCall::new("set_visibility").with("layer", layerkit::doc::LayerPath(vec![0])).with("flag", false);
    let gold = vec![set(0, 10), set(1, 20)];
    let pred = vec![set(0, 10), set(1, 20), vis.clone()];
    let before = total(&pred, &gold);
    let (mut p, mut g) = (pred, gold);
    p.push(set(2, 30));
    g.push(set(2, 30));
    assert!((before - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(total(&p, &g), 0.5);
}
