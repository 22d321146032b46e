//! Marker-delimited input assembly for one (dialogue context, passage) pair,
//! the encoder abstraction, and pooling of the marker positions.
//!
//! Layout: `[CLS] [USR] u1 [AGT] u2 … [SEP] title [CLS] s1 [CLS] s2 … [SEP]`,
//! with turns most recent first.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::corpus::{Passage, Role, Turn};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    /// Budget for turn markers plus turn tokens.
    pub max_context_tokens: usize,
    /// Budget for the whole sequence.
    pub max_total_tokens: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_context_tokens: 128,
            max_total_tokens: 512,
        }
    }
}

/// Smallest sequence: CLS, one turn marker, SEP, one SU CLS, final SEP.
const MIN_TOTAL: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<TokenId>,
    pub attention_mask: Vec<bool>,
    pub global_cls_pos: usize,
    /// One marker per retained turn, in context order (most recent first).
    pub turn_marker_pos: Vec<(usize, Role)>,
    pub su_cls_pos: Vec<usize>,
    pub retained_su_count: usize,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn retained_turns(&self) -> usize {
        self.turn_marker_pos.len()
    }

    /// Every marker position in sequence order.
    pub fn marker_positions(&self) -> Vec<usize> {
        let mut out = vec![self.global_cls_pos];
        out.extend(self.turn_marker_pos.iter().map(|(p, _)| *p));
        out.extend(&self.su_cls_pos);
        out
    }

    /// Right-pads to `len` with masked-out pad tokens.
    pub fn padded(&self, len: usize, pad: TokenId) -> EncodedInput {
        assert!(len >= self.len(), "cannot pad to a shorter length");
        let mut out = self.clone();
        out.token_ids.resize(len, pad);
        out.attention_mask.resize(len, false);
        out
    }
}

pub fn assemble_input(
    context: &[Turn],
    title: &str,
    passage: &Passage,
    limits: Limits,
    tokenizer: &impl Tokenizer,
) -> Result<EncodedInput> {
    if context.is_empty() {
        return Err(Error::Data("empty dialogue context".into()));
    }
    if context[0].role != Role::User {
        return Err(Error::Data(
            "latest context turn must be a user turn".into(),
        ));
    }
    if passage.is_empty() {
        return Err(Error::Data(format!(
            "passage {} has no semantic units",
            passage.passage_id
        )));
    }
    if limits.max_context_tokens < 1 || limits.max_total_tokens < MIN_TOTAL {
        return Err(Error::Config(format!(
            "limits too small: context {} (need >= 1), total {} (need >= {MIN_TOTAL})",
            limits.max_context_tokens, limits.max_total_tokens
        )));
    }
    let m = tokenizer.markers();

    // Dialogue side: keep the most recent turns within budget; the oldest
    // retained turn may lose its trailing tokens.
    let ctx_budget = limits
        .max_context_tokens
        .min(limits.max_total_tokens - (MIN_TOTAL - 1));
    let mut ids = vec![m.cls];
    let mut turn_marker_pos = Vec::new();
    let mut used = 0;
    for turn in context {
        let remaining = ctx_budget - used;
        if remaining == 0 {
            break;
        }
        let mut toks = tokenizer.tokenize(&turn.text);
        let need = 1 + toks.len();
        let truncated = need > remaining;
        if truncated {
            toks.truncate(remaining - 1);
        }
        turn_marker_pos.push((ids.len(), turn.role));
        ids.push(match turn.role {
            Role::User => m.usr,
            Role::Agent => m.agt,
        });
        used += 1 + toks.len();
        ids.extend(toks);
        if truncated {
            break;
        }
    }
    ids.push(m.sep);

    // Passage side: title, then SUs while they fit; at least one SU CLS.
    let mut budget = limits.max_total_tokens - ids.len() - 1;
    let mut title_toks = tokenizer.tokenize(title);
    title_toks.truncate(budget.saturating_sub(1));
    budget -= title_toks.len();
    ids.extend(title_toks);
    let mut su_cls_pos = Vec::new();
    for unit in &passage.units {
        let mut toks = tokenizer.tokenize(&unit.text);
        if 1 + toks.len() > budget {
            if su_cls_pos.is_empty() {
                toks.truncate(budget - 1);
            } else {
                break;
            }
        }
        budget -= 1 + toks.len();
        su_cls_pos.push(ids.len());
        ids.push(m.cls);
        ids.extend(toks);
    }
    ids.push(m.sep);

    let len = ids.len();
    Ok(EncodedInput {
        token_ids: ids,
        attention_mask: vec![true; len],
        global_cls_pos: 0,
        turn_marker_pos,
        retained_su_count: su_cls_pos.len(),
        su_cls_pos,
    })
}

/// Pooled `z`, per-turn `U` and per-SU `S` vectors of one encoded input.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledReps {
    pub z: Tensor,
    pub u: Tensor,
    pub roles: Vec<Role>,
    pub s: Tensor,
}

pub fn gather(hidden: &Tensor, enc: &EncodedInput) -> PooledReps {
    assert_eq!(hidden.nrows(), enc.len(), "hidden length mismatch");
    let turn_rows: Vec<usize> = enc.turn_marker_pos.iter().map(|(p, _)| *p).collect();
    PooledReps {
        z: hidden.select(Axis(0), &[enc.global_cls_pos]),
        u: hidden.select(Axis(0), &turn_rows),
        roles: enc.turn_marker_pos.iter().map(|(_, r)| *r).collect(),
        s: hidden.select(Axis(0), &enc.su_cls_pos),
    }
}

/// Graph counterpart of [`PooledReps`].
#[derive(Clone, Copy, Debug)]
pub struct PooledVars {
    pub z: Var,
    pub u: Var,
    pub s: Var,
}

pub fn gather_vars(g: &Graph, hidden: Var, enc: &EncodedInput) -> PooledVars {
    let turn_rows: Vec<usize> = enc.turn_marker_pos.iter().map(|(p, _)| *p).collect();
    PooledVars {
        z: g.row(hidden, enc.global_cls_pos),
        u: g.gather_rows(hidden, &turn_rows),
        s: g.gather_rows(hidden, &enc.su_cls_pos),
    }
}

/// A bidirectional sequence encoder that exposes its embedding layer
/// separately so callers can perturb the embedded sequence.
pub trait SequenceEncoder {
    fn hidden_dim(&self) -> usize;
    fn max_len(&self) -> usize;
    /// `T × d` embedded sequence.
    fn embed(&self, g: &Graph, params: &ParamStore, ids: &[TokenId]) -> Var;
    fn encode_from_embeddings(
        &self,
        g: &Graph,
        params: &ParamStore,
        embeddings: Var,
        mask: &[bool],
    ) -> Var;

    fn encode(&self, g: &Graph, params: &ParamStore, ids: &[TokenId], mask: &[bool]) -> Var {
        let e = self.embed(g, params, ids);
        self.encode_from_embeddings(g, params, e, mask)
    }
}

/// Pads every input to a common length and encodes each under its mask.
pub fn encode_batch(
    inputs: &[EncodedInput],
    encoder: &impl SequenceEncoder,
    params: &ParamStore,
    pad: TokenId,
) -> Result<Vec<PooledReps>> {
    let Some(len) = inputs.iter().map(EncodedInput::len).max() else {
        return Ok(Vec::new());
    };
    if len > encoder.max_len() {
        return Err(Error::shape("encoder input length", encoder.max_len(), len));
    }
    inputs
        .iter()
        .map(|inp| {
            let padded = inp.padded(len, pad);
            let g = Graph::frozen();
            let h = encoder.encode(&g, params, &padded.token_ids, &padded.attention_mask);
            let hidden: Array2<f64> = g.value(h).clone();
            Ok(gather(&hidden, &padded))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::WordTokenizer;

    fn turn(role: Role, text: &str) -> Turn {
        Turn {
            role,
            text: text.into(),
            grounding: None,
        }
    }

    fn passage(units: &[&str]) -> Passage {
        Passage::from_units(
            "p",
            None,
            units
                .iter()
                .enumerate()
                .map(|(i, u)| (u.to_string(), (0, i))),
        )
    }

    #[test]
    fn layout_of_two_turns() {
        let tok = WordTokenizer::build(["hi hello t a b"], 1);
        let m = tok.markers();
        let enc = assemble_input(
            &[turn(Role::User, "hi"), turn(Role::Agent, "hello")],
            "t",
            &passage(&["a", "b"]),
            Limits::default(),
            &tok,
        )
        .unwrap();
        let w = |s: &str| tok.tokenize(s)[0];
        assert_eq!(
            enc.token_ids,
            vec![
                m.cls,
                m.usr,
                w("hi"),
                m.agt,
                w("hello"),
                m.sep,
                w("t"),
                m.cls,
                w("a"),
                m.cls,
                w("b"),
                m.sep
            ]
        );
        assert_eq!(enc.retained_su_count, 2);
        assert_eq!(enc.su_cls_pos, vec![7, 9]);
        assert_eq!(enc.turn_marker_pos, vec![(1, Role::User), (3, Role::Agent)]);
        let markers: Vec<_> = enc
            .token_ids
            .iter()
            .filter(|t| [m.cls, m.usr, m.agt, m.sep].contains(t))
            .copied()
            .collect();
        assert_eq!(
            markers,
            vec![m.cls, m.usr, m.agt, m.sep, m.cls, m.cls, m.sep]
        );
    }

    #[test]
    fn oldest_turns_dropped_first() {
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let tok = WordTokenizer::build([text.as_str()], 1);
        // ten turns of 29 tokens + marker = 300 tokens
        let ctx: Vec<Turn> = (0..10)
            .map(|i| {
                let role = if i % 2 == 0 { Role::User } else { Role::Agent };
                turn(role, &words[..29].join(" "))
            })
            .collect();
        let limits = Limits {
            max_context_tokens: 128,
            max_total_tokens: 512,
        };
        let enc = assemble_input(&ctx, "", &passage(&["w1"]), limits, &tok).unwrap();
        let sep = enc
            .token_ids
            .iter()
            .position(|&t| t == tok.markers().sep)
            .unwrap();
        assert!(sep - 1 <= 128);
        assert_eq!(enc.retained_turns(), 5);
        // the most recent four turns are complete
        assert_eq!(enc.turn_marker_pos[0].0, 1);
        assert_eq!(enc.turn_marker_pos[1].0, 31);
    }

    #[test]
    fn trailing_units_dropped() {
        let tok = WordTokenizer::build(["alpha beta gamma hi"], 1);
        let units: Vec<&str> = vec!["alpha beta gamma alpha beta gamma"; 100];
        let enc = assemble_input(
            &[turn(Role::User, "hi")],
            "",
            &passage(&units),
            Limits::default(),
            &tok,
        )
        .unwrap();
        assert!(enc.retained_su_count < 100);
        assert!(enc.len() <= 512);
        assert_eq!(enc.su_cls_pos.len(), enc.retained_su_count);
        let positions = enc.marker_positions();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn limits_too_small() {
        let tok = WordTokenizer::build(["hi"], 1);
        let err = assemble_input(
            &[turn(Role::User, "hi")],
            "",
            &passage(&["hi"]),
            Limits {
                max_context_tokens: 4,
                max_total_tokens: 4,
            },
            &tok,
        );
        assert!(err.is_err());
        let ok = assemble_input(
            &[turn(Role::User, "hi there")],
            "long title words",
            &passage(&["hi hi hi"]),
            Limits {
                max_context_tokens: 1,
                max_total_tokens: 5,
            },
            &tok,
        )
        .unwrap();
        assert_eq!(ok.len(), 5);
        assert_eq!(ok.retained_su_count, 1);
    }

    #[test]
    fn gather_selects_marker_rows() {
        let enc = EncodedInput {
            token_ids: vec![0; 9],
            attention_mask: vec![true; 9],
            global_cls_pos: 0,
            turn_marker_pos: vec![(1, Role::User), (3, Role::Agent)],
            su_cls_pos: vec![5, 7],
            retained_su_count: 2,
        };
        let hidden = Array2::from_shape_fn((9, 2), |(r, c)| (r * 10 + c) as f64);
        let pooled = gather(&hidden, &enc);
        assert_eq!(pooled.z.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(pooled.u.column(0).to_vec(), vec![10.0, 30.0]);
        assert_eq!(pooled.s.column(0).to_vec(), vec![50.0, 70.0]);

        // non-marker rows do not matter
        let mut shuffled = hidden.clone();
        for (a, b) in [(2, 8), (4, 6)] {
            let ra = hidden.row(a).to_owned();
            let rb = hidden.row(b).to_owned();
            shuffled.row_mut(a).assign(&rb);
            shuffled.row_mut(b).assign(&ra);
        }
        assert_eq!(gather(&shuffled, &enc), pooled);
    }
}
