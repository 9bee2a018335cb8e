use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    classification_scores, confusion_matrix, correct_count_histogram, ev1_acc_at_k, ev2_precision_recall,
    ClassificationScores, ConfusionMatrix, QueryLabels,
};
use super::EvalError;
use crate::dataset::{decode_records, histogram_match, ChannelCdf, Manifest, Split};
use crate::index::{embed_images, EmbeddingIndex, Metric, RetrievalResult};
use crate::model::CaeModel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    pub metric: Metric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { k_values: vec![3, 5, 7], metric: Metric::Euclidean }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k_values.is_empty() {
            return Err(EvalError::Config("k_values is empty".into()));
        }
        if self.k_values[0] == 0 || self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Config(format!(
                "k_values must be positive and strictly increasing, got {:?}",
                self.k_values
            )));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        *self.k_values.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub acc_at_k: f64,
    /// Precision/recall of the majority-vote label.
    pub ev1: ClassificationScores,
    /// Mean over queries of relevant/k and relevant/(same-label index entries).
    pub ev2: RetrievalScores,
    pub confusion: ConfusionMatrix,
    pub correct_count_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub index_id: String,
    pub index_count: usize,
    pub query_split: String,
    pub query_count: usize,
    pub metric: Metric,
    pub k_values: Vec<usize>,
    /// `unmatched` or `histogram-matched` for cross-dataset runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    /// Effective run configuration.
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    /// Keyed by K.
    pub metrics: BTreeMap<usize, KMetrics>,
}

/// Both variants of a cross-dataset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalReport {
    pub schema_version: u32,
    pub unmatched: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<EvalReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        write_json(path, &self.to_json())
    }

    pub fn acc_at(&self, k: usize) -> Option<f64> {
        self.metrics.get(&k).map(|m| m.acc_at_k)
    }

    /// The same report with the creation time zeroed, for comparisons.
    pub fn without_timestamp(&self) -> Self {
        let mut r = self.clone();
        r.metadata.created_unix = 0;
        r
    }
}

impl CrossEvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        write_json(path, &self.to_json())
    }
}

fn write_json(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|e| EvalError::Report(format!("{}: {e}", path.display())))
}

/// Short content hash of an index, stable across save/load.
pub fn index_fingerprint(index: &EmbeddingIndex) -> String {
    let bytes = index.to_bytes().expect("valid index serializes");
    format!("ucbm-{:08x}-{}", crc32fast::hash(&bytes), index.len())
}

/// One query: id, true label (already in the index's label space) and embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub label: String,
    pub vector: Vec<f32>,
}

/// Report plus the per-query rankings it was computed from.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub results: Vec<RetrievalResult>,
    pub labels: QueryLabels,
}

/// Ranks every query once at the largest K and scores each K on prefixes.
pub fn evaluate_queries(
    index: &EmbeddingIndex,
    queries: &[Query],
    config: &EvalConfig,
    query_split: &str,
) -> Result<EvalOutcome, EvalError> {
    config.validate()?;
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let k_max = config.max_k();
    let results = queries
        .par_iter()
        .map(|q| index.top_k(&q.id, &q.vector, k_max, config.metric, Some(&q.id)))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: QueryLabels = queries.iter().map(|q| (q.id.clone(), q.label.clone())).collect();

    let label_counts = index.label_counts();
    let label_set: Vec<String> = label_counts
        .keys()
        .cloned()
        .chain(queries.iter().map(|q| q.label.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut metrics = BTreeMap::new();
    for &k in &config.k_values {
        let mut precision = 0.0;
        let mut recall = 0.0;
        for (q, r) in queries.iter().zip(&results) {
            let mut m = label_counts.get(&q.label).copied().unwrap_or(0);
            if index.get(&q.id).is_some_and(|e| e.label == q.label) {
                m -= 1;
            }
            let (p, rc) = ev2_precision_recall(r, &q.label, k, m)?;
            precision += p;
            recall += rc;
        }
        let n = queries.len() as f64;
        let confusion = confusion_matrix(&results, &labels, k, &label_set)?;
        metrics.insert(
            k,
            KMetrics {
                acc_at_k: ev1_acc_at_k(&results, &labels, k)?,
                ev1: classification_scores(&confusion),
                ev2: RetrievalScores { precision: precision / n, recall: recall / n },
                confusion,
                correct_count_histogram: correct_count_histogram(&results, &labels, k)?,
            },
        );
    }

    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata: ReportMetadata {
            index_id: index_fingerprint(index),
            index_count: index.len(),
            query_split: query_split.to_string(),
            query_count: queries.len(),
            metric: config.metric,
            k_values: config.k_values.clone(),
            variant: None,
            config: BTreeMap::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        },
        metrics,
    };
    Ok(EvalOutcome { report, results, labels })
}

fn test_queries(
    model: &CaeModel,
    manifest: &Manifest,
    reference: Option<&ChannelCdf>,
    label_of: impl Fn(&str) -> String,
) -> Result<Vec<Query>, EvalError> {
    let records = manifest.split(Split::Test);
    if records.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut images = decode_records(&records, model.config.input_size)?;
    if let Some(cdf) = reference {
        images = histogram_match(&images, cdf);
    }
    let vectors = embed_images(model, &images)?;
    Ok(records
        .iter()
        .zip(vectors)
        .map(|(r, vector)| Query { id: r.id.clone(), label: label_of(&r.label), vector })
        .collect())
}

/// Encodes the test split of `manifest` and searches it against `index`.
pub fn run_evaluation_detailed(
    index: &EmbeddingIndex,
    model: &CaeModel,
    manifest: &Manifest,
    config: &EvalConfig,
) -> Result<EvalOutcome, EvalError> {
    if model.embedding_dim() != index.dim() {
        return Err(EvalError::Config(format!(
            "model embeds {} dimensions, index holds {}",
            model.embedding_dim(),
            index.dim()
        )));
    }
    let queries = test_queries(model, manifest, None, str::to_string)?;
    evaluate_queries(index, &queries, config, Split::Test.as_str())
}

pub fn run_evaluation(
    index: &EmbeddingIndex,
    model: &CaeModel,
    manifest: &Manifest,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    Ok(run_evaluation_detailed(index, model, manifest, config)?.report)
}

/// Label translation from a foreign dataset into the index's label set.
pub type LabelMap = BTreeMap<String, String>;

/// Resolves every label of `manifest` through `map`; labels missing from the
/// map pass through unchanged when the index already knows them.
pub fn resolve_labels(
    manifest: &Manifest,
    map: &LabelMap,
    index: &EmbeddingIndex,
) -> Result<BTreeMap<String, String>, EvalError> {
    let known = index.label_counts();
    let mut resolved = BTreeMap::new();
    let mut bad = BTreeSet::new();
    for label in manifest.labels() {
        let target = map.get(&label).cloned().unwrap_or_else(|| label.clone());
        if known.contains_key(&target) {
            resolved.insert(label, target);
        } else {
            bad.insert(label);
        }
    }
    if !bad.is_empty() {
        return Err(EvalError::UnmappedLabels(bad.into_iter().collect()));
    }
    Ok(resolved)
}

/// Searches dataset B's test split against A's index with A's model, once as
/// decoded and once histogram-matched to `reference` when given.
pub fn cross_evaluate(
    model: &CaeModel,
    index: &EmbeddingIndex,
    manifest_b: &Manifest,
    reference: Option<&ChannelCdf>,
    label_map: &LabelMap,
    config: &EvalConfig,
) -> Result<CrossEvalReport, EvalError> {
    Ok(cross_evaluate_detailed(model, index, manifest_b, reference, label_map, config)?.0)
}

/// Like [`cross_evaluate`], also returning the outcomes `(unmatched, matched)`.
pub fn cross_evaluate_detailed(
    model: &CaeModel,
    index: &EmbeddingIndex,
    manifest_b: &Manifest,
    reference: Option<&ChannelCdf>,
    label_map: &LabelMap,
    config: &EvalConfig,
) -> Result<(CrossEvalReport, EvalOutcome, Option<EvalOutcome>), EvalError> {
    let resolved = resolve_labels(manifest_b, label_map, index)?;
    let label_of = |l: &str| resolved[l].clone();
    let split = Split::Test.as_str();

    let queries = test_queries(model, manifest_b, None, label_of)?;
    let mut unmatched = evaluate_queries(index, &queries, config, split)?;
    unmatched.report.metadata.variant = Some("unmatched".into());

    let matched = match reference {
        Some(cdf) => {
            let queries = test_queries(model, manifest_b, Some(cdf), label_of)?;
            let mut outcome = evaluate_queries(index, &queries, config, split)?;
            outcome.report.metadata.variant = Some("histogram-matched".into());
            Some(outcome)
        }
        None => None,
    };
    let report = CrossEvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        unmatched: unmatched.report.clone(),
        matched: matched.as_ref().map(|m| m.report.clone()),
    };
    Ok((report, unmatched, matched))
}
