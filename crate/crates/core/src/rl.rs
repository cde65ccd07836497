//! Tool-call reward, group-normalized advantages and the clipped surrogate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::{signature, ParamValue, ToolCall};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("{side} call {index} names unknown tool {tool:?}")]
    UnknownTool { side: &'static str, index: usize, tool: String },
    #[error("advantages need at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub name_weight: f64,
    pub param_weight: f64,
    /// Relative tolerance for numeric parameters.
    pub numeric_rel_tol: f64,
    /// Absolute floor, in pixels, for `x`, `y` and point parameters.
    pub position_abs_tol: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            name_weight: 0.4,
            param_weight: 0.6,
            numeric_rel_tol: 0.02,
            position_abs_tol: 2.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let finite = [self.name_weight, self.param_weight, self.numeric_rel_tol, self.position_abs_tol]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.name_weight < 0.0 || self.param_weight < 0.0 {
            return Err(RlError::InvalidConfig("weights must be finite and non-negative".into()));
        }
        if (self.name_weight + self.param_weight - 1.0).abs() > 1e-9 {
            return Err(RlError::InvalidConfig(format!(
                "name_weight + param_weight = {}, expected 1",
                self.name_weight + self.param_weight
            )));
        }
        if self.numeric_rel_tol < 0.0 || self.position_abs_tol < 0.0 {
            return Err(RlError::InvalidConfig("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    /// Carried so configs round-trip; no KL term is computed here.
    pub kl_weight: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_weight: 0.04,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if self.group_size < 2 {
            return Err(RlError::InvalidConfig("group_size must be at least 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon.is_finite()) {
            return Err(RlError::InvalidConfig("clip_epsilon must be positive".into()));
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(RlError::InvalidConfig("kl_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pred_index: usize,
    pub gold_index: usize,
    /// 1 when tool names match, else 0.
    pub name_score: f64,
    /// Fraction of matching parameters; 0 when names differ.
    pub param_score: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub total: f64,
    pub per_pair: Vec<PairScore>,
    pub unmatched_pred: usize,
    pub unmatched_gold: usize,
}

fn is_position(name: &str) -> bool {
    matches!(name, "x" | "y")
}

fn close(p: f64, g: f64, position: bool, cfg: &RewardConfig) -> bool {
    let mut tol = cfg.numeric_rel_tol * g.abs();
    if position {
        tol = tol.max(cfg.position_abs_tol);
    }
    (p - g).abs() <= tol
}

fn param_matches(name: &str, pred: &ParamValue, gold: &ParamValue, cfg: &RewardConfig) -> bool {
    use ParamValue::*;
    match (pred, gold) {
        (Point(px, py), Point(gx, gy)) => close(*px as f64, *gx as f64, true, cfg) && close(*py as f64, *gy as f64, true, cfg),
        (Int(_) | Float(_), Int(_) | Float(_)) => close(pred.as_f64().unwrap_or(f64::NAN), gold.as_f64().unwrap_or(f64::NAN), is_position(name), cfg),
        _ => pred == gold,
    }
}

/// Fraction of parameter names, over the union of both calls, whose values
/// match. Calls without parameters score 1.
pub fn param_fraction(pred: &ToolCall, gold: &ToolCall, cfg: &RewardConfig) -> f64 {
    let mut union: Vec<&str> = gold.params.keys().map(String::as_str).collect();
    union.extend(pred.params.keys().map(String::as_str).filter(|k| !gold.params.contains_key(*k)));
    if union.is_empty() {
        return 1.0;
    }
    let hits = union
        .iter()
        .filter(|k| match (pred.params.get(**k), gold.params.get(**k)) {
            (Some(p), Some(g)) => param_matches(k, p, g, cfg),
            _ => false,
        })
        .count();
    hits as f64 / union.len() as f64
}

/// Scores `pred` against `gold` by positional pairing. The total is the sum
/// of pair scores over the longer list's length, and 1 when both are empty.
pub fn reward(pred: &[ToolCall], gold: &[ToolCall], cfg: &RewardConfig) -> Result<RewardReport, RlError> {
    for (side, calls) in [("pred", pred), ("gold", gold)] {
        if let Some((index, c)) = calls.iter().enumerate().find(|(_, c)| signature(&c.tool).is_none()) {
            return Err(RlError::UnknownTool {
                side,
                index,
                tool: c.tool.clone(),
            });
        }
    }
    let per_pair: Vec<PairScore> = pred
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(k, (p, g))| {
            if p.tool != g.tool {
                return PairScore {
                    pred_index: k,
                    gold_index: k,
                    name_score: 0.0,
                    param_score: 0.0,
                    score: 0.0,
                };
            }
            let frac = param_fraction(p, g, cfg);
            PairScore {
                pred_index: k,
                gold_index: k,
                name_score: 1.0,
                param_score: frac,
                score: cfg.name_weight + cfg.param_weight * frac,
            }
        })
        .collect();
    let denom = pred.len().max(gold.len());
    let total = if denom == 0 {
        1.0
    } else {
        per_pair.iter().map(|p| p.score).sum::<f64>() / denom as f64
    };
    Ok(RewardReport {
        total,
        unmatched_pred: pred.len() - per_pair.len(),
        unmatched_gold: gold.len() - per_pair.len(),
        per_pair,
    })
}

/// `(r_i - mean) / std` with the population standard deviation. A group
/// with equal rewards maps to zeros.
pub fn advantages(rewards: &[f64]) -> Result<Vec<f64>, RlError> {
    if rewards.len() < 2 {
        return Err(RlError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let constant = rewards.iter().all(|r| *r == rewards[0]);
    if constant || std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `min(ratio * A, clamp(ratio, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Mean clipped surrogate over one group, from policy ratios and rewards.
pub fn group_objective(ratios: &[f64], rewards: &[f64], cfg: &GrpoConfig) -> Result<f64, RlError> {
    cfg.validate()?;
    if ratios.len() != rewards.len() {
        return Err(RlError::InvalidConfig(format!("{} ratios for {} rewards", ratios.len(), rewards.len())));
    }
    let adv = advantages(rewards)?;
    Ok(ratios.iter().zip(&adv).map(|(r, a)| clipped_surrogate(*r, *a, cfg.clip_epsilon)).sum::<f64>() / adv.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::LayerPath;

    fn opacity(layer: usize, v: i64) -> ToolCall {
        ToolCall::new("set_opacity").with("layer", LayerPath(vec![layer])).with("value", v)
    }

    fn single(tool: &str, name: &str, v: i64) -> ToolCall {
        ToolCall::new(tool).with(name, v)
    }

    #[test]
    fn identical_is_one() {
        let x = vec![opacity(0, 100), opacity(1, 30)];
        assert_eq!(reward(&x, &x, &RewardConfig::default()).unwrap().total, 1.0);
        assert_eq!(reward(&[], &[], &RewardConfig::default()).unwrap().total, 1.0);
    }

    #[test]
    fn nonempty_vs_empty_is_zero() {
        let r = reward(&[opacity(0, 1)], &[], &RewardConfig::default()).unwrap();
        assert_eq!((r.total, r.unmatched_pred), (0.0, 1));
    }

    #[test]
    fn one_param_value_off() {
        // Two 1-parameter gold calls, the second one's value out of tolerance.
        let gold = vec![single("set_opacity", "value", 200), single("set_opacity", "value", 100)];
        let pred = vec![single("set_opacity", "value", 200), single("set_opacity", "value", 50)];
        let r = reward(&pred, &gold, &RewardConfig::default()).unwrap();
        assert!((r.total - 0.7).abs() < 1e-12);
        // With the real two-parameter signature the path still matches.
        let r = reward(&[opacity(0, 200), opacity(1, 50)], &[opacity(0, 200), opacity(1, 100)], &RewardConfig::default()).unwrap();
        assert!((r.total - 0.85).abs() < 1e-12);
    }

    #[test]
    fn tolerances() {
        let cfg = RewardConfig::default();
        let at = |x: i64| ToolCall::new("set_position").with("layer", LayerPath(vec![0])).with("x", x).with("y", 0);
        assert_eq!(reward(&[at(12)], &[at(10)], &cfg).unwrap().total, 1.0);
        assert!(reward(&[at(13)], &[at(10)], &cfg).unwrap().total < 1.0);
        // 2% of 200 is 4 for non-position params.
        assert_eq!(reward(&[opacity(0, 204)], &[opacity(0, 200)], &cfg).unwrap().total, 1.0);
        assert!(reward(&[opacity(0, 205)], &[opacity(0, 200)], &cfg).unwrap().total < 1.0);
    }

    #[test]
    fn unknown_tool() {
        let err = reward(&[ToolCall::new("paint")], &[], &RewardConfig::default()).unwrap_err();
        assert!(matches!(err, RlError::UnknownTool { side: "pred", index: 0, .. }));
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(advantages(&[1.0, 0.0, 1.0, 0.0]).unwrap(), vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(advantages(&[0.7, 0.7, 0.7]).unwrap(), vec![0.0; 3]);
        assert_eq!(advantages(&[1.0]), Err(RlError::GroupTooSmall(1)));
    }

    #[test]
    fn surrogate_examples() {
        assert_eq!(clipped_surrogate(1.0, 0.37, 0.1), 0.37);
        assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(clipped_surrogate(2.0, -1.0, 0.2), -2.0);
    }

    #[test]
    fn config_checks() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad = RewardConfig {
            name_weight: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(GrpoConfig { group_size: 1, ..Default::default() }.validate().is_err());
        let obj = group_objective(&[1.0, 1.0], &[1.0, 0.0], &GrpoConfig::default()).unwrap();
        assert_eq!(obj, 0.0);
    }
}
