//! Retrieval scoring: ACC@K, per-query precision/recall, majority-vote
//! confusion matrices, correct-count histograms and report assembly.

mod metrics;
mod report;
mod sheet;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::index::IndexError;

pub use metrics::{
    classification_scores, confusion_matrix, correct_count_histogram, ev1_acc_at_k, ev2_precision_recall,
    predict_label, relevant_count, ClassScores, ClassificationScores, ConfusionMatrix, QueryLabels,
};
pub use report::{
    cross_evaluate, cross_evaluate_detailed, evaluate_queries, index_fingerprint, resolve_labels, run_evaluation,
    run_evaluation_detailed, CrossEvalReport, EvalConfig, EvalOutcome, EvalReport, KMetrics, LabelMap, Query,
    ReportMetadata, RetrievalScores, REPORT_SCHEMA_VERSION,
};
pub use sheet::{contact_sheet, render_contact_sheet, SheetRow, MATCH_COLOR, MISMATCH_COLOR, QUERY_COLOR};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no label for query `{0}`")]
    MissingLabel(String),
    #[error("query `{query}` has {found} results, need {k}")]
    TooFewHits { query: String, k: usize, found: usize },
    #[error("label `{0}` is not in the label set")]
    UnknownLabel(String),
    #[error("labels with no mapping into the index label set: {}", .0.join(", "))]
    UnmappedLabels(Vec<String>),
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("evaluation config: {0}")]
    Config(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
