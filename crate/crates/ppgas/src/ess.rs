//! Effective sample size of an aggregate weighted sample set.
//!
//! For each target, weights normalized within each sweep are renormalized
//! over all sweeps. `V_k` is the total weight of the k-th unique value and
//! `ESS = 1/Σ_k V_k²`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::jsonl::PredictRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssRow {
    pub target: String,
    pub group: i64,
    pub ess: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EssError {
    #[error("no records to summarize")]
    EmptyInput,
}

/// Splits a label of the form `(f k)` with integer `k` into `("f", k)`; any
/// other label is its own target in group 0.
pub fn target_of(label: &str) -> (String, i64) {
    let inner = label.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')'));
    if let Some(inner) = inner {
        let parts: Vec<&str> = inner.split_whitespace().collect();
        if let [name, k] = parts[..] {
            if let Ok(k) = k.parse::<i64>() {
                return (name.to_string(), k);
            }
        }
    }
    (label.to_string(), 0)
}

/// `1/Σ V²` for the total weights `V` of unique values.
pub fn ess_of(weighted: impl IntoIterator<Item = (String, f64)>) -> f64 {
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    let mut sum = 0.0;
    for (key, w) in weighted {
        *totals.entry(key).or_default() += w;
        sum += w;
    }
    1.0 / totals.values().map(|v| (v / sum).powi(2)).sum::<f64>()
}

/// One row per `(target, group)`, ordered by target then group.
pub fn compute_ess(records: &[PredictRecord]) -> Result<Vec<EssRow>, EssError> {
    if records.is_empty() {
        return Err(EssError::EmptyInput);
    }
    let mut by_label: BTreeMap<(String, i64), Vec<(String, f64)>> = BTreeMap::new();
    for r in records {
        by_label
            .entry(target_of(&r.label))
            .or_default()
            .push((r.value.to_string(), r.weight));
    }
    Ok(by_label
        .into_iter()
        .map(|((target, group), values)| EssRow {
            target,
            group,
            ess: ess_of(values),
        })
        .collect())
}
