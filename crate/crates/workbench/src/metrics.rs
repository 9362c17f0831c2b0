//! The seven evaluation metrics and run aggregation.
//!
//! Token-overlap F1/P/R for generation, HitRate@K and Relative Position
//! for ranking, NRS and CDR for distractor robustness, and the LLM-judged
//! Logic Fidelity Score. The token normalizer defined here is the single
//! repo-wide definition used everywhere overlap or leakage is checked.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::gateway::{ChatRequest, Gateway, GatewayError, Message, SchemaField, SchemaSpec};
use crate::prompts;

/// Normalized token sequence: lowercase, punctuation-free, articles dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSet {
    pub tokens: Vec<String>,
}

/// Lowercase, strip punctuation, collapse whitespace, drop articles
/// {a, an, the}.
pub fn normalize_tokens(text: &str) -> TokenSet {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    TokenSet {
        tokens: cleaned
            .split_whitespace()
            .filter(|t| !matches!(*t, "a" | "an" | "the"))
            .map(str::to_string)
            .collect(),
    }
}

/// Bag-of-tokens precision/recall/F1 of `pred` against `gold`.
pub fn token_prf(pred: &str, gold: &str) -> (f64, f64, f64) {
    let pred = normalize_tokens(pred).tokens;
    let gold = normalize_tokens(gold).tokens;
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold {
        *gold_counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = gold_counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// One original/distractor rank pair inside a reranked list. `None` means
/// the member was filtered out of the list entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankPair {
    pub original_rank: Option<usize>,
    pub distractor_rank: Option<usize>,
}

/// Ranking outcome for one instance: where the golden context landed and
/// how labels are distributed over the final list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingRecord {
    pub instance_id: String,
    /// 1-based rank of the golden context, `None` when absent from the list.
    pub golden_rank: Option<usize>,
    /// Length of the ranked list.
    pub n: usize,
    pub labels_by_rank: Vec<Label>,
    pub pairs: Vec<RankPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub value: u8,
    pub rationale: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("empty record set")]
    EmptyRecordSet,
    #[error("no original/distractor pairs in any record")]
    NoPairs,
    #[error("judge output unusable: {0}")]
    JudgeParseError(String),
    #[error("runs cover different instance sets")]
    RunMismatch,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Percentage of records whose golden context ranks within the top k.
/// Golden-absent records count as misses.
pub fn hit_rate_at_k(records: &[RankingRecord], k: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecordSet);
    }
    let hits = records.iter().filter(|r| r.golden_rank.is_some_and(|g| g <= k)).count();
    Ok(100.0 * hits as f64 / records.len() as f64)
}

/// Mean normalized golden rank, higher is better: 100·(n−r)/(n−1), 100 for
/// single-element lists, 0 for golden-absent records.
pub fn relative_position(records: &[RankingRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecordSet);
    }
    let total: f64 = records
        .iter()
        .map(|r| match r.golden_rank {
            Some(_) if r.n == 1 => 100.0,
            Some(rank) => 100.0 * (r.n - rank) as f64 / (r.n - 1) as f64,
            None => 0.0,
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Noise Robustness Score: mean fraction of non-distractor passages within
/// the top-k cutoff (cutoff capped at list length).
pub fn noise_robustness(records: &[RankingRecord], k: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyRecordSet);
    }
    let total: f64 = records
        .iter()
        .map(|r| {
            let cutoff = k.min(r.labels_by_rank.len()).max(1);
            let clean = r.labels_by_rank[..cutoff.min(r.labels_by_rank.len())]
                .iter()
                .filter(|l| **l != Label::Distractor)
                .count();
            clean as f64 / cutoff as f64
        })
        .sum();
    Ok(total / records.len() as f64)
}

/// Context Discrimination Rate: fraction of original/distractor pairs where
/// the original outranks its distractor. A pair whose original was filtered
/// out counts as a failure; a surviving original whose distractor was
/// filtered out counts as a success.
pub fn context_discrimination(records: &[RankingRecord]) -> Result<f64, MetricsError> {
    let mut wins = 0usize;
    let mut total = 0usize;
    for record in records {
        for pair in &record.pairs {
            total += 1;
            match (pair.original_rank, pair.distractor_rank) {
                (None, _) => {}
                (Some(_), None) => wins += 1,
                (Some(o), Some(d)) if o < d => wins += 1,
                _ => {}
            }
        }
    }
    if total == 0 {
        return Err(MetricsError::NoPairs);
    }
    Ok(wins as f64 / total as f64)
}

/// Logic Fidelity Score: LLM-judged 0..5 rating of a candidate answer.
pub fn lfs_judge(
    question: &str,
    gold: &str,
    pred: &str,
    gateway: &Gateway,
) -> Result<JudgeScore, MetricsError> {
    let schema = SchemaSpec::new(vec![SchemaField::number("value"), SchemaField::string("rationale")]);
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::JUDGE_SYSTEM),
            Message::user(prompts::render(
                prompts::JUDGE_USER,
                &[("query", question), ("gold", gold), ("pred", pred)],
            )),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "judge".into(),
    };
    let map = gateway
        .complete_structured(&req, &schema)
        .map_err(|e| match e {
            GatewayError::SchemaParse(raw) => MetricsError::JudgeParseError(raw),
            other => MetricsError::Gateway(other),
        })?;
    let raw = map["value"].as_f64().expect("schema enforced number");
    if raw.fract() != 0.0 || !(0.0..=5.0).contains(&raw) {
        return Err(MetricsError::JudgeParseError(format!("value {raw} outside integer range 0..5")));
    }
    Ok(JudgeScore {
        value: raw as u8,
        rationale: map["rationale"].as_str().unwrap_or("").to_string(),
    })
}

/// Per-metric aggregate over independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
}

pub type MetricMap = BTreeMap<String, f64>;
/// One run's per-instance metric values, keyed by instance id.
pub type RunInstances = BTreeMap<String, MetricMap>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance_id: String,
    pub run: usize,
    pub metrics: MetricMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub provenance: serde_json::Value,
    pub per_instance: Vec<InstanceMetrics>,
    pub aggregate: BTreeMap<String, AggregateStat>,
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates per-instance metric maps across runs: for each metric, the
/// run-level value is the mean over instances, and the aggregate reports
/// mean and sample standard deviation across runs. Run-level metrics (those
/// identical for all instances of a run, e.g. hit rates) pass through
/// unchanged.
pub fn aggregate_report(
    runs: &[RunInstances],
    provenance: serde_json::Value,
) -> Result<MetricsReport, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::EmptyRecordSet);
    }
    let ids: Vec<&String> = runs[0].keys().collect();
    for run in &runs[1..] {
        if run.keys().collect::<Vec<_>>() != ids {
            return Err(MetricsError::RunMismatch);
        }
    }

    let mut per_instance = Vec::new();
    for (run_idx, run) in runs.iter().enumerate() {
        for (id, metrics) in run {
            per_instance.push(InstanceMetrics {
                instance_id: id.clone(),
                run: run_idx,
                metrics: metrics.clone(),
            });
        }
    }

    let mut metric_names: Vec<String> = Vec::new();
    for run in runs {
        for metrics in run.values() {
            for name in metrics.keys() {
                if !metric_names.contains(name) {
                    metric_names.push(name.clone());
                }
            }
        }
    }
    metric_names.sort();

    let mut aggregate = BTreeMap::new();
    for name in metric_names {
        let mut run_values = Vec::new();
        for run in runs {
            let values: Vec<f64> = run.values().filter_map(|m| m.get(&name)).copied().collect();
            if !values.is_empty() {
                run_values.push(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        if run_values.is_empty() {
            continue;
        }
        let (mean, std) = mean_and_sample_std(&run_values);
        aggregate.insert(name, AggregateStat { mean, std, n_runs: run_values.len() });
    }

    Ok(MetricsReport { provenance, per_instance, aggregate })
}
