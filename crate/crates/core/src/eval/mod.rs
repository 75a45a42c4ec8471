//! Query evaluation against bit-packed documents, confusion counts and the
//! selectivity/completeness loss.

mod columns;

use std::collections::HashMap;
use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocBitVector, Label};
use crate::query::ClauseQuery;

pub use columns::ColumnEvaluator;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("phrase id {id} out of range for vectors of {len} bits")]
    PhraseIdOutOfRange { id: u32, len: usize },
    #[error("loss needs at least one relevant and one irrelevant labeled document")]
    NoLabeledData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn labeled_relevant(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn labeled_irrelevant(&self) -> u64 {
        self.fp + self.tn
    }

    /// FP / labeled irrelevant.
    pub fn fp_rate(&self) -> Option<f64> {
        let d = self.labeled_irrelevant();
        (d > 0).then(|| self.fp as f64 / d as f64)
    }

    /// FN / labeled relevant.
    pub fn fn_rate(&self) -> Option<f64> {
        let d = self.labeled_relevant();
        (d > 0).then(|| self.fn_ as f64 / d as f64)
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    fn record(&mut self, label: Label, matched: bool) {
        match (label, matched) {
            (Label::Relevant, true) => self.tp += 1,
            (Label::Relevant, false) => self.fn_ += 1,
            (Label::Irrelevant, true) => self.fp += 1,
            (Label::Irrelevant, false) => self.tn += 1,
            (Label::Unlabeled, _) => {}
        }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    pub eps_fp: f64,
    pub eps_fn: f64,
    pub delta_fp: f64,
    pub delta_fn: f64,
    /// Multiplicative penalty per genome element.
    pub lambda_len: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams { eps_fp: 0.01, eps_fn: 0.01, delta_fp: 0.05, delta_fn: 0.05, lambda_len: 0.001 }
    }
}

/// `(fp + eps_fp)(fn + eps_fn) / ((1 + delta_fp - fp)(1 + delta_fn - fn))`,
/// scaled by `1 + lambda_len * genome_len`. A non-positive denominator
/// factor yields `+inf` so the query ranks last.
pub fn loss_from_rates(fp_rate: f64, fn_rate: f64, genome_len: usize, params: &LossParams) -> f64 {
    let den_fp = 1.0 + params.delta_fp - fp_rate;
    let den_fn = 1.0 + params.delta_fn - fn_rate;
    if den_fp <= 0.0 || den_fn <= 0.0 {
        return f64::INFINITY;
    }
    let ratio = (fp_rate + params.eps_fp) * (fn_rate + params.eps_fn) / (den_fp * den_fn);
    ratio * (1.0 + params.lambda_len * genome_len as f64)
}

pub fn loss(counts: &ConfusionCounts, genome_len: usize, params: &LossParams) -> Result<f64, EvalError> {
    match (counts.fp_rate(), counts.fn_rate()) {
        (Some(fp), Some(fn_)) => Ok(loss_from_rates(fp, fn_, genome_len, params)),
        _ => Err(EvalError::NoLabeledData),
    }
}

/// Conjunction over non-empty clauses of the disjunction of `sign XNOR bit`.
pub fn matches(query: &ClauseQuery, doc: &DocBitVector) -> Result<bool, EvalError> {
    let len = doc.bit_length();
    if let Some(id) = query.max_id().filter(|&id| id as usize >= len) {
        return Err(EvalError::PhraseIdOutOfRange { id, len });
    }
    Ok(query.eval_with(|id| doc.get(id as usize)))
}

/// Row-wise evaluation over labeled documents, split across the rayon pool.
/// Documents missing from `labels` count as unlabeled.
pub fn evaluate_corpus(
    query: &ClauseQuery,
    vectors: &[DocBitVector],
    labels: &HashMap<String, Label>,
) -> Result<ConfusionCounts, EvalError> {
    vectors
        .par_iter()
        .map(|v| {
            let label = labels.get(v.doc_id()).copied().unwrap_or_default();
            let mut c = ConfusionCounts::default();
            if label != Label::Unlabeled {
                c.record(label, matches(query, v)?);
            }
            Ok(c)
        })
        .try_reduce(ConfusionCounts::default, |a, b| Ok(a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, Document};

    fn params(eps: f64, delta: f64, lambda: f64) -> LossParams {
        LossParams { eps_fp: eps, eps_fn: eps, delta_fp: delta, delta_fn: delta, lambda_len: lambda }
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_from_rates(0.0, 0.0, 0, &params(0.0, 0.0, 0.0)), 0.0);
        let v = loss_from_rates(0.1, 0.2, 0, &params(0.01, 0.0, 0.0));
        assert!((v - 0.11 * 0.21 / (0.9 * 0.8)).abs() < 1e-15);
        assert!((v - 0.032083333333).abs() < 1e-9);
        assert_eq!(loss_from_rates(1.0, 1.0, 0, &params(0.0, 0.0, 0.0)), f64::INFINITY);
    }

    #[test]
    fn length_penalty_is_multiplicative() {
        let p = params(0.01, 0.05, 0.001);
        let base = loss_from_rates(0.3, 0.4, 0, &p);
        assert!((loss_from_rates(0.3, 0.4, 10, &p) - base * 1.01).abs() < 1e-15);
    }

    #[test]
    fn loss_needs_both_classes() {
        let c = ConfusionCounts { tp: 3, fn_: 1, ..Default::default() };
        assert_eq!(loss(&c, 0, &LossParams::default()), Err(EvalError::NoLabeledData));
        let c = ConfusionCounts { tp: 3, fp: 1, tn: 1, fn_: 1 };
        let want = loss_from_rates(0.5, 0.25, 4, &LossParams::default());
        assert_eq!(loss(&c, 4, &LossParams::default()), Ok(want));
    }

    #[test]
    fn eps_fn_raises_loss_of_complete_unselective_queries() {
        let mut p = params(0.0, 0.05, 0.0);
        p.eps_fp = 0.01;
        let base = loss_from_rates(0.8, 0.0, 0, &p);
        p.eps_fn = 0.05;
        assert!(loss_from_rates(0.8, 0.0, 0, &p) > base);
        assert_eq!(base, 0.0);
    }

    fn corpus() -> crate::corpus::CorpusIndex {
        build_index(vec![
            Document::new("d1", "phrase1 phrase3 x").with_label(Label::Relevant),
            Document::new("d2", "phrase2 x").with_label(Label::Relevant),
            Document::new("d3", "phrase1 phrase2 phrase3").with_label(Label::Irrelevant),
            Document::new("d4", "x").with_label(Label::Unlabeled),
        ])
        .unwrap()
    }

    #[test]
    fn matching_examples() {
        let idx = corpus();
        let id = |w: &str| idx.vocab().id(&crate::corpus::Phrase::parse(w).unwrap()).unwrap();
        let (p1, p2, p3) = (id("phrase1"), id("phrase2"), id("phrase3"));
        let q = ClauseQuery::from_pairs(&[&[(p1, false), (p2, false)], &[(p3, true)]]);
        assert!(!matches(&q, &idx.vectors()[0]).unwrap());
        assert!(matches(&q, &idx.vectors()[1]).unwrap());
        assert!(matches(&ClauseQuery::default(), &idx.vectors()[3]).unwrap());
        let excl = ClauseQuery::from_pairs(&[&[(p3, true)]]);
        assert!(!matches(&excl, &idx.vectors()[0]).unwrap());
        assert!(matches(&excl, &idx.vectors()[1]).unwrap());
        let bad = ClauseQuery::from_pairs(&[&[(99, false)]]);
        assert!(matches!(matches(&bad, &idx.vectors()[0]), Err(EvalError::PhraseIdOutOfRange { id: 99, .. })));
    }

    #[test]
    fn unlabeled_documents_are_excluded() {
        let idx = corpus();
        let c = evaluate_corpus(&ClauseQuery::default(), idx.vectors(), &idx.label_map()).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 1, tn: 0, fn_: 0 });
    }

    #[test]
    fn match_all_and_match_none_identities() {
        let mut docs = Vec::new();
        for i in 0..10 {
            let label = if i < 3 { Label::Relevant } else { Label::Irrelevant };
            docs.push(Document::new(format!("d{i}"), "common words").with_label(label));
        }
        docs.push(Document::new("rare1", "zebra crossing").with_label(Label::Unlabeled));
        docs.push(Document::new("rare2", "zebra stripes").with_label(Label::Unlabeled));
        let idx = build_index(docs).unwrap();
        let labels = idx.label_map();
        let all = evaluate_corpus(&ClauseQuery::default(), idx.vectors(), &labels).unwrap();
        assert_eq!(all, ConfusionCounts { tp: 3, fp: 7, tn: 0, fn_: 0 });
        let zebra = idx.vocab().id(&crate::corpus::Phrase::parse("zebra").unwrap()).unwrap();
        let none = ClauseQuery::from_pairs(&[&[(zebra, false)]]);
        let c = evaluate_corpus(&none, idx.vectors(), &labels).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, tn: 7, fn_: 3 });
    }

    #[test]
    fn f1_and_rates() {
        let c = ConfusionCounts { tp: 8, fp: 2, tn: 88, fn_: 2 };
        assert!((c.f1() - 0.8).abs() < 1e-12);
        assert_eq!(c.fp_rate(), Some(2.0 / 90.0));
        assert_eq!(c.fn_rate(), Some(0.2));
        assert_eq!(ConfusionCounts::default().f1(), 0.0);
    }
}
