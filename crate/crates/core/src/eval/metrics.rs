use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::index::RetrievalResult;

/// Query id → true label.
pub type QueryLabels = BTreeMap<String, String>;

fn true_label<'a>(labels: &'a QueryLabels, result: &RetrievalResult) -> Result<&'a str, EvalError> {
    labels.get(&result.query_id).map(String::as_str).ok_or_else(|| EvalError::MissingLabel(result.query_id.clone()))
}

fn top(result: &RetrievalResult, k: usize) -> Result<&[crate::index::Hit], EvalError> {
    result.hits.get(..k).ok_or_else(|| EvalError::TooFewHits {
        query: result.query_id.clone(),
        k,
        found: result.hits.len(),
    })
}

/// Number of the top `k` hits whose label is `label`.
pub fn relevant_count(result: &RetrievalResult, label: &str, k: usize) -> Result<usize, EvalError> {
    Ok(top(result, k)?.iter().filter(|h| h.label == label).count())
}

/// Fraction of queries with at least one correct label among the top `k`.
pub fn ev1_acc_at_k(results: &[RetrievalResult], labels: &QueryLabels, k: usize) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut hits = 0usize;
    for r in results {
        if relevant_count(r, true_label(labels, r)?, k)? > 0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// `(R/k, R/m)` for `R` relevant hits among the top `k`; recall is 0 when `m = 0`.
pub fn ev2_precision_recall(
    result: &RetrievalResult,
    label: &str,
    k: usize,
    relevant_in_index: usize,
) -> Result<(f64, f64), EvalError> {
    if k == 0 {
        return Err(EvalError::Config("k must be positive".into()));
    }
    let r = relevant_count(result, label, k)? as f64;
    let recall = if relevant_in_index == 0 { 0.0 } else { r / relevant_in_index as f64 };
    Ok((r / k as f64, recall))
}

/// Majority label of the top `k`. Ties go to the smaller mean distance,
/// then to the lexicographically smaller label.
pub fn predict_label(result: &RetrievalResult, k: usize) -> Result<String, EvalError> {
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for h in top(result, k)? {
        let t = tally.entry(h.label.as_str()).or_insert((0, 0.0));
        t.0 += 1;
        t.1 += h.distance;
    }
    let best = tally
        .iter()
        .min_by(|(la, (na, sa)), (lb, (nb, sb))| {
            nb.cmp(na).then_with(|| (sa / *na as f64).total_cmp(&(sb / *nb as f64))).then_with(|| la.cmp(lb))
        })
        .map(|(l, _)| l.to_string());
    best.ok_or_else(|| EvalError::TooFewHits { query: result.query_id.clone(), k, found: 0 })
}

/// Rows are true labels, columns predicted labels, both in `labels` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        self.counts.iter().map(|row| row[j]).sum()
    }
}

pub fn confusion_matrix(
    results: &[RetrievalResult],
    labels: &QueryLabels,
    k: usize,
    label_set: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    let pos = |l: &str| label_set.iter().position(|x| x == l).ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
    let mut counts = vec![vec![0usize; label_set.len()]; label_set.len()];
    for r in results {
        let t = pos(true_label(labels, r)?)?;
        let p = pos(&predict_label(r, k)?)?;
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { labels: label_set.to_vec(), counts })
}

/// Bin `j` counts queries with exactly `j` correct labels in the top `k`.
pub fn correct_count_histogram(
    results: &[RetrievalResult],
    labels: &QueryLabels,
    k: usize,
) -> Result<Vec<usize>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mut bins = vec![0usize; k + 1];
    for r in results {
        bins[relevant_count(r, true_label(labels, r)?, k)?] += 1;
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

/// Per-class and macro-averaged precision/recall of the predicted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class: BTreeMap<String, ClassScores>,
}

/// Averages over the labels that occur as a true or a predicted label.
pub fn classification_scores(cm: &ConfusionMatrix) -> ClassificationScores {
    let mut per_class = BTreeMap::new();
    let mut active = BTreeSet::new();
    for (i, label) in cm.labels.iter().enumerate() {
        let support = cm.row_sum(i);
        let predicted = cm.col_sum(i);
        let tp = cm.counts[i][i] as f64;
        let ratio = |d: usize| if d == 0 { 0.0 } else { tp / d as f64 };
        if support > 0 || predicted > 0 {
            active.insert(label.clone());
        }
        per_class.insert(label.clone(), ClassScores { precision: ratio(predicted), recall: ratio(support), support });
    }
    let mean = |f: fn(&ClassScores) -> f64| {
        if active.is_empty() {
            0.0
        } else {
            active.iter().map(|l| f(&per_class[l])).sum::<f64>() / active.len() as f64
        }
    };
    ClassificationScores { macro_precision: mean(|s| s.precision), macro_recall: mean(|s| s.recall), per_class }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Hit;

    fn result(q: &str, hits: &[(&str, f64)]) -> RetrievalResult {
        RetrievalResult {
            query_id: q.into(),
            hits: hits
                .iter()
                .enumerate()
                .map(|(i, (l, d))| Hit { id: format!("h{i}"), label: l.to_string(), distance: *d })
                .collect(),
        }
    }

    #[test]
    fn predict_label_rules() {
        let r = result("q", &[("G3", 0.1), ("G4", 0.2), ("G3", 0.3), ("NC", 0.4), ("G3", 0.5)]);
        assert_eq!(predict_label(&r, 5).unwrap(), "G3");
        let r = result("q", &[("G3", 0.1), ("G3", 0.2), ("G4", 0.17), ("G4", 0.2), ("NC", 0.3)]);
        assert_eq!(predict_label(&r, 5).unwrap(), "G3");
        let r = result("q", &[("b", 0.5), ("a", 0.5)]);
        assert_eq!(predict_label(&r, 2).unwrap(), "a");
        assert!(predict_label(&r, 3).is_err());
    }

    #[test]
    fn ev2_arithmetic() {
        let r = result("q", &[("x", 0.1), ("y", 0.2), ("x", 0.3), ("x", 0.4), ("z", 0.5)]);
        assert_eq!(ev2_precision_recall(&r, "x", 5, 10).unwrap(), (0.6, 0.3));
        assert_eq!(ev2_precision_recall(&r, "x", 1, 0).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn missing_query_label_is_an_error() {
        let r = result("q", &[("x", 0.1)]);
        assert!(matches!(ev1_acc_at_k(&[r], &QueryLabels::new(), 1), Err(EvalError::MissingLabel(q)) if q == "q"));
    }
}
