//! Passage selection followed by span enumeration within the chosen passage.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::corpus::DialogueExample;
use crate::error::{Error, Result};
use crate::model::KnowledgeModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Longest predicted span, in semantic units.
    pub max_knowledge_len: usize,
    /// Score spans by summed log-probabilities instead of probabilities.
    pub log_prob_scoring: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            max_knowledge_len: 5,
            log_prob_scoring: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub passage_id: String,
    pub begin_su: usize,
    pub end_su: usize,
    pub text: String,
    pub passage_prob: f64,
    pub span_score: f64,
}

/// Best `(b, e, score)` maximizing `begin[b] + end[e]` with
/// `b ≤ e < b + max_len`; ties go to the smaller `b`, then the smaller `e`.
pub fn enumerate_best_span(begin: &[f64], end: &[f64], max_len: usize) -> (usize, usize, f64) {
    assert_eq!(begin.len(), end.len(), "begin/end length mismatch");
    assert!(!begin.is_empty(), "empty span distribution");
    assert!(max_len >= 1, "max_len must be >= 1");
    let mut best = (0, 0, f64::NEG_INFINITY);
    for b in 0..begin.len() {
        let last = (b + max_len).min(end.len());
        for e in b..last {
            let score = begin[b] + end[e];
            if score > best.2 {
                best = (b, e, score);
            }
        }
    }
    best
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn predict(
    model: &KnowledgeModel,
    example: &DialogueExample,
    config: &InferenceConfig,
) -> Result<Prediction> {
    if config.max_knowledge_len == 0 {
        return Err(Error::Config("max_knowledge_len must be >= 1".into()));
    }
    let prep = model.prepare(example)?;
    let (psg, begin, end, index) = model.logits(&prep)?;
    let psg_probs = softmax(&psg);
    let k = argmax(&psg_probs);
    let range = index.offset(k)..index.offset(k) + index.count(k);
    let mut pb = softmax(&begin[range.clone()]);
    let mut pe = softmax(&end[range]);
    if config.log_prob_scoring {
        pb.iter_mut().for_each(|p| *p = p.ln());
        pe.iter_mut().for_each(|p| *p = p.ln());
    }
    let (b, e, score) = enumerate_best_span(&pb, &pe, config.max_knowledge_len);
    let passage = &example.candidate_passages[k];
    Ok(Prediction {
        example_id: example.example_id.clone(),
        passage_id: passage.passage_id.clone(),
        begin_su: b,
        end_su: e,
        text: passage.span_text(b, e),
        passage_prob: psg_probs[k],
        span_score: score,
    })
}

/// Predictions for `examples` in input order.
pub fn predict_all(
    model: &KnowledgeModel,
    examples: &[DialogueExample],
    config: &InferenceConfig,
) -> Result<Vec<Prediction>> {
    examples
        .iter()
        .map(|ex| predict(model, ex, config))
        .collect()
}

/// Writes one JSON line per example to `out`.
pub fn batch_predict(
    model: &KnowledgeModel,
    examples: &[DialogueExample],
    config: &InferenceConfig,
    out: &Path,
) -> Result<Vec<Prediction>> {
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let mut preds = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let p = predict(model, ex, config)?;
        let line = serde_json::to_string(&p).expect("prediction serializes");
        writeln!(w, "{line}").map_err(|e| {
            Error::io(
                out,
                std::io::Error::new(e.kind(), format!("example #{i}: {e}")),
            )
        })?;
        preds.push(p);
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(begin: &[f64], end: &[f64], max_len: usize) -> (usize, usize, f64) {
        let mut cands = Vec::new();
        for b in 0..begin.len() {
            for e in b..begin.len() {
                if e - b < max_len {
                    cands.push((b, e, begin[b] + end[e]));
                }
            }
        }
        let top = cands.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        cands.into_iter().find(|c| c.2 == top).unwrap()
    }

    #[test]
    fn worked_example() {
        let (b, e, s) = enumerate_best_span(&[0.7, 0.2, 0.1], &[0.1, 0.6, 0.3], 2);
        assert_eq!((b, e), (0, 1));
        assert!((s - 1.3).abs() < 1e-12);
    }

    #[test]
    fn diagonal_when_max_len_one() {
        let begin = [0.1, 0.5, 0.2, 0.2];
        let end = [0.6, 0.1, 0.2, 0.1];
        let (b, e, _) = enumerate_best_span(&begin, &end, 1);
        assert_eq!((b, e), (0, 0));
        let (b, e, _) = enumerate_best_span(&[0.1, 0.5, 0.4], &[0.2, 0.3, 0.5], 1);
        assert_eq!((b, e), (2, 2));
    }

    #[test]
    fn uniform_ties_pick_first() {
        assert_eq!(enumerate_best_span(&[0.25; 4], &[0.25; 4], 3).0, 0);
        assert_eq!(enumerate_best_span(&[0.25; 4], &[0.25; 4], 3).1, 0);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30),
            max_len in 1usize..6,
        ) {
            let begin: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let end: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let got = enumerate_best_span(&begin, &end, max_len);
            let want = brute(&begin, &end, max_len);
            prop_assert_eq!((got.0, got.1), (want.0, want.1));
            prop_assert!(got.0 <= got.1 && got.1 - got.0 < max_len);
        }
    }
}
