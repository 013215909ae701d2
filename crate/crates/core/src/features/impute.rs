//! Rule-based repair of polygon attribute tables before extraction.

use serde::{Deserialize, Serialize};

use super::manifest::ImputationRule;
use crate::geo::layer::{AttrValue, Feature, Layer};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationCount {
    pub rule: String,
    pub filled: usize,
}

fn json_to_attr(v: &serde_json::Value) -> AttrValue {
    match v {
        serde_json::Value::Number(n) => n.as_f64().map(AttrValue::Number).unwrap_or(AttrValue::Missing),
        serde_json::Value::String(s) => AttrValue::Text(s.clone()),
        _ => AttrValue::Missing,
    }
}

/// Missing means absent, null, or a non-finite number. Text is present.
fn absent(f: &Feature, key: &str) -> bool {
    !matches!(f.attributes.get(key), Some(AttrValue::Text(_))) && f.is_missing(key)
}

fn label(rule: &ImputationRule) -> String {
    match rule {
        ImputationRule::ZeroImplies { trigger, .. } => format!("zero_implies:{trigger}"),
        ImputationRule::FillLowest { attribute, .. } => format!("fill_lowest:{attribute}"),
        ImputationRule::MinCount { count_attribute, .. } => format!("min_count:{count_attribute}"),
        ImputationRule::Ratio { target, .. } => format!("ratio:{target}"),
    }
}

/// Applies `rules` in order; observed values are never overwritten.
pub fn impute_layer(layer: &mut Layer, rules: &[ImputationRule]) -> Vec<ImputationCount> {
    let mut counts = Vec::with_capacity(rules.len());
    for rule in rules {
        let mut filled = 0;
        for f in &mut layer.features {
            match rule {
                ImputationRule::ZeroImplies { trigger, targets } => {
                    if f.number(trigger) == Some(0.0) {
                        for t in targets {
                            if absent(f, t) {
                                f.set_number(t, 0.0);
                                filled += 1;
                            }
                        }
                    }
                }
                ImputationRule::FillLowest { attribute, value } => {
                    if absent(f, attribute) {
                        f.attributes.insert(attribute.clone(), json_to_attr(value));
                        filled += 1;
                    }
                }
                ImputationRule::MinCount {
                    count_attribute,
                    min_count,
                    targets,
                } => {
                    if matches!(f.number(count_attribute), Some(c) if c < *min_count) {
                        for t in targets {
                            if absent(f, t) {
                                f.set_number(t, 0.0);
                                filled += 1;
                            }
                        }
                    }
                }
                ImputationRule::Ratio {
                    target,
                    numerator,
                    denominator,
                } => {
                    if absent(f, target) {
                        if let (Some(n), Some(d)) = (f.number(numerator), f.number(denominator)) {
                            if d != 0.0 {
                                f.set_number(target, n / d);
                                filled += 1;
                            }
                        }
                    }
                }
            }
        }
        log::debug!("imputation {}: {filled} values filled", label(rule));
        counts.push(ImputationCount {
            rule: label(rule),
            filled,
        });
    }
    counts
}
