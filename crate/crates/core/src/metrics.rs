//! Exact match, token F1 and passage accuracy, overall and per split.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::DialogueExample;
use crate::error::{Error, Result};
use crate::inference::Prediction;

/// Lowercase, strip punctuation, drop the articles a/an/the and collapse
/// whitespace.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '‘' | '’' | '“' | '”' | '–' | '—' | '…' | '«' | '»' | '¿' | '¡' | '·'
    )
}

pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize(pred) == normalize(gold) {
        1.0
    } else {
        0.0
    }
}

/// Lowercase and strip punctuation, keeping every word.
fn f1_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Multiset token overlap F1. Articles count as tokens here; strings that
/// match under [`normalize`] score 1.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    if normalize(pred) == normalize(gold) {
        return 1.0;
    }
    let pt = f1_tokens(pred);
    let gt = f1_tokens(gold);
    if pt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pt.len() as f64;
    let recall = overlap as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Gold answer for one example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub example_id: String,
    pub passage_id: String,
    pub text: String,
}

impl From<&DialogueExample> for Reference {
    fn from(ex: &DialogueExample) -> Self {
        Self {
            example_id: ex.example_id.clone(),
            passage_id: ex.gold.passage_id.clone(),
            text: ex.gold_text.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub em: f64,
    pub f1: f64,
    pub passage_acc: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: f64,
    pub f1: f64,
    pub passage_acc: f64,
    pub n: usize,
    /// Always holds `overall`; `seen`/`unseen` (or any other split names)
    /// when a split map is given.
    pub splits: BTreeMap<String, SplitMetrics>,
}

#[derive(Default)]
struct Acc {
    em: f64,
    f1: f64,
    psg: f64,
    n: usize,
}

impl Acc {
    fn finish(&self) -> SplitMetrics {
        let n = self.n.max(1) as f64;
        SplitMetrics {
            em: self.em / n,
            f1: self.f1 / n,
            passage_acc: self.psg / n,
            n: self.n,
        }
    }
}

/// Scores `predictions` against `references`. Examples absent from the split
/// map count only toward `overall`.
pub fn evaluate(
    predictions: &[Prediction],
    references: &[Reference],
    splits: Option<&HashMap<String, String>>,
) -> Result<EvalReport> {
    let refs: HashMap<&str, &Reference> = references
        .iter()
        .map(|r| (r.example_id.as_str(), r))
        .collect();
    let missing: Vec<&str> = predictions
        .iter()
        .map(|p| p.example_id.as_str())
        .filter(|id| !refs.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "predictions without references: {}",
            missing.join(", ")
        )));
    }
    let mut seen_ids = HashSet::new();
    let mut overall = Acc::default();
    let mut per_split: BTreeMap<String, Acc> = BTreeMap::new();
    for p in predictions {
        if !seen_ids.insert(p.example_id.as_str()) {
            return Err(Error::Data(format!(
                "duplicate prediction for {}",
                p.example_id
            )));
        }
        let r = refs[p.example_id.as_str()];
        let em = exact_match(&p.text, &r.text);
        let f1 = token_f1(&p.text, &r.text);
        let psg = if p.passage_id == r.passage_id {
            1.0
        } else {
            0.0
        };
        let add = |a: &mut Acc| {
            a.em += em;
            a.f1 += f1;
            a.psg += psg;
            a.n += 1;
        };
        add(&mut overall);
        if let Some(name) = splits.and_then(|m| m.get(&p.example_id)) {
            add(per_split.entry(name.clone()).or_default());
        }
    }
    let o = overall.finish();
    let mut out: BTreeMap<String, SplitMetrics> = per_split
        .iter()
        .map(|(k, a)| (k.clone(), a.finish()))
        .collect();
    out.insert("overall".into(), o);
    Ok(EvalReport {
        em: o.em,
        f1: o.f1,
        passage_acc: o.passage_acc,
        n: o.n,
        splits: out,
    })
}

/// `seen` when the example's document occurs in `train_doc_ids`, else `unseen`.
pub fn seen_unseen_splits<'a>(
    examples: impl IntoIterator<Item = &'a DialogueExample>,
    train_doc_ids: &HashSet<String>,
) -> HashMap<String, String> {
    examples
        .into_iter()
        .map(|ex| {
            let seen = ex
                .doc_id
                .as_ref()
                .is_some_and(|d| train_doc_ids.contains(d));
            (
                ex.example_id.clone(),
                if seen { "seen" } else { "unseen" }.to_string(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, psg: &str, text: &str) -> Prediction {
        Prediction {
            example_id: id.into(),
            passage_id: psg.into(),
            begin_su: 0,
            end_su: 0,
            text: text.into(),
            passage_prob: 1.0,
            span_score: 1.0,
        }
    }

    fn reference(id: &str, psg: &str, text: &str) -> Reference {
        Reference {
            example_id: id.into(),
            passage_id: psg.into(),
            text: text.into(),
        }
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize("The Cat."), "cat");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("A  b   C"), "b c");
        assert_eq!(normalize("an apple, the pear!"), "apple pear");
        assert_eq!(normalize("theatre"), "theatre");
    }

    #[test]
    fn f1_values() {
        assert_eq!(token_f1("a b c", "b c d"), 2.0 / 3.0);
        assert_eq!(token_f1("x y", "x y"), 1.0);
        assert_eq!(token_f1("", "x"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("the", "a"), 1.0);
        assert_eq!(token_f1("The cat", "cat"), 1.0);
        assert_eq!(token_f1("the cat sat", "cat ran"), 0.4);
        assert_eq!(token_f1("x x y", "x y y"), 2.0 / 3.0);
    }

    #[test]
    fn evaluate_means_and_splits() {
        let preds = vec![pred("1", "p", "cat"), pred("2", "q", "dog")];
        let refs = vec![reference("1", "p", "The cat"), reference("2", "p", "bird")];
        let splits: HashMap<String, String> = [
            ("1".to_string(), "seen".to_string()),
            ("2".into(), "unseen".into()),
        ]
        .into();
        let r = evaluate(&preds, &refs, Some(&splits)).unwrap();
        assert_eq!(r.em, 0.5);
        assert_eq!(r.passage_acc, 0.5);
        assert_eq!(r.splits["seen"].em, 1.0);
        assert_eq!(r.splits["unseen"].em, 0.0);
        assert_eq!(r.splits["overall"].n, 2);

        let mut rev = preds.clone();
        rev.reverse();
        assert_eq!(evaluate(&rev, &refs, Some(&splits)).unwrap(), r);
    }

    #[test]
    fn missing_reference_lists_ids() {
        let err = evaluate(&[pred("9", "p", "x")], &[], None).unwrap_err();
        assert!(err.to_string().contains('9'));
    }
}
