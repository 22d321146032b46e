//! The knowledge-identification model: encoder, contextualizer and output
//! heads over one parameter store, plus per-example preparation, forward
//! pass and joint training loss.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::contextualizer::{contextualize, ContextWindow, ContextualizerParams};
use crate::corpus::{DialogueExample, Role};
use crate::encoder::{EncoderConfig, TinyEncoder};
use crate::encoding::{
    assemble_input, gather_vars, EncodedInput, Limits, PooledVars, SequenceEncoder,
};
use crate::error::{Error, Result};
use crate::objectives::{
    adversarial_loss, divergence_sum, history_loss, joint_loss, next_loss, next_turn_logits,
    AdversarialConfig, GoldTarget, HeadLogits, HistoryHeadVars, HistoryHeads, HistoryTarget,
    LossBreakdown, LossParts, NextTurnHeads, NextTurnLogits, Perturbable,
};
use crate::params::{ParamId, ParamStore};
use crate::tokenizer::{Tokenizer, WordTokenizer};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub limits: Limits,
    pub window: ContextWindow,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.limits.max_total_tokens > self.encoder.max_len {
            return Err(Error::Config(format!(
                "max_total_tokens {} exceeds encoder max_len {}",
                self.limits.max_total_tokens, self.encoder.max_len
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub beta: f64,
    pub adversarial: AdversarialConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 5.0,
            adversarial: AdversarialConfig::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config(format!(
                "alpha and beta must be >= 0, got {} and {}",
                self.alpha, self.beta
            )));
        }
        let adv = &self.adversarial;
        if adv.radius.is_nan() || adv.radius < 0.0 || adv.step_size.is_nan() || adv.step_size < 0.0
        {
            return Err(Error::Config(format!(
                "adversarial radius and step_size must be >= 0, got {} and {}",
                adv.radius, adv.step_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeModel {
    pub config: ModelConfig,
    pub tokenizer: WordTokenizer,
    pub encoder: TinyEncoder,
    pub ctx: ContextualizerParams,
    pub next: NextTurnHeads,
    pub hist: HistoryHeads,
    pub params: ParamStore,
}

/// Model inputs for one example, one encoded sequence per candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedExample {
    pub example_id: String,
    pub inputs: Vec<EncodedInput>,
    /// Row offset of each candidate's block in the perturbation tensor.
    pub offsets: Vec<usize>,
    /// `None` when the gold span is not reachable after truncation.
    pub gold: Option<GoldTarget>,
    pub history: Vec<HistoryTarget>,
    /// History labels dropped because their turn or SUs were truncated.
    pub history_excluded: usize,
}

impl PreparedExample {
    pub fn total_tokens(&self) -> usize {
        self.inputs.iter().map(EncodedInput::len).sum()
    }
}

pub struct ForwardPass {
    pub logits: NextTurnLogits,
    pub pooled: Vec<PooledVars>,
}

impl ForwardPass {
    pub fn heads(&self) -> HeadLogits {
        HeadLogits {
            psg: self.logits.psg,
            begin: self.logits.begin,
            end: self.logits.end,
        }
    }
}

impl KnowledgeModel {
    /// Fresh parameters drawn from a generator seeded with the encoder seed.
    pub fn new(config: ModelConfig, tokenizer: WordTokenizer) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.encoder.seed);
        let mut params = ParamStore::new();
        let d = config.encoder.d;
        let encoder = TinyEncoder::new(
            config.encoder.clone(),
            tokenizer.vocab_size(),
            &mut params,
            &mut rng,
        )?;
        let ctx = ContextualizerParams::new(d, &mut params, &mut rng);
        let next = NextTurnHeads::new(d, &mut params, &mut rng);
        let hist = HistoryHeads::new(d, &mut params, &mut rng);
        Ok(Self {
            config,
            tokenizer,
            encoder,
            ctx,
            next,
            hist,
            params,
        })
    }

    /// Builds the architecture for `config` and fills it with `tensors`,
    /// which must name every parameter with the expected shape.
    pub fn from_tensors(
        config: ModelConfig,
        tokenizer: WordTokenizer,
        mut tensors: std::collections::HashMap<String, Tensor>,
    ) -> Result<Self> {
        let mut model = Self::new(config, tokenizer)?;
        let d = model.config.encoder.d;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let name = model.params.name(id).to_string();
            let value = tensors
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let expected = model.params.value(id).dim();
            if value.dim() != expected {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {:?}, model expects {expected:?} (model d = {d}, checkpoint d = {})",
                    value.dim(),
                    infer_d(&name, value.dim()).map_or("?".to_string(), |x| x.to_string())
                )));
            }
            *model.params.value_mut(id) = value;
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.config.encoder.d
    }

    pub fn prepare(&self, ex: &DialogueExample) -> Result<PreparedExample> {
        if ex.candidate_passages.is_empty() {
            return Err(Error::Data(format!(
                "example {} has no candidates",
                ex.example_id
            )));
        }
        let mut inputs = Vec::with_capacity(ex.candidate_passages.len());
        let mut offsets = Vec::with_capacity(ex.candidate_passages.len());
        let mut offset = 0;
        for p in &ex.candidate_passages {
            let title = p.title.as_deref().unwrap_or("");
            let inp = assemble_input(&ex.context, title, p, self.config.limits, &self.tokenizer)
                .map_err(|e| match e {
                    Error::Data(m) => Error::Data(format!("example {}: {m}", ex.example_id)),
                    other => other,
                })?;
            offsets.push(offset);
            offset += inp.len();
            inputs.push(inp);
        }
        let retained_turns = inputs
            .iter()
            .map(EncodedInput::retained_turns)
            .min()
            .unwrap_or(0);
        let reachable = |k: usize, b: usize, e: usize| b <= e && e < inputs[k].retained_su_count;

        let gold = ex.gold_index().and_then(|k| {
            reachable(k, ex.gold.begin_su, ex.gold.end_su).then_some(GoldTarget {
                passage: k,
                begin: ex.gold.begin_su,
                end: ex.gold.end_su,
            })
        });

        let mut history = Vec::new();
        let mut history_excluded = 0;
        for (&turn, label) in &ex.history_labels {
            let target = ex.passage_index(&label.passage_id).and_then(|k| {
                (turn < retained_turns && reachable(k, label.begin_su, label.end_su)).then_some(
                    HistoryTarget {
                        turn,
                        passage: k,
                        begin: label.begin_su,
                        end: label.end_su,
                    },
                )
            });
            match target {
                Some(t) => history.push(t),
                None => history_excluded += 1,
            }
        }
        if history_excluded > 0 {
            log::debug!(
                "example {}: {history_excluded} history labels truncated away",
                ex.example_id
            );
        }
        Ok(PreparedExample {
            example_id: ex.example_id.clone(),
            inputs,
            offsets,
            gold,
            history,
            history_excluded,
        })
    }

    /// Encodes every candidate, contextualizes its spans and applies the
    /// next-turn heads. `epsilon` (total tokens × d) is added to the
    /// embedded sequences.
    pub fn forward(
        &self,
        g: &Graph,
        prep: &PreparedExample,
        epsilon: Option<Var>,
    ) -> Result<ForwardPass> {
        let ps = &self.params;
        let mut pairs = Vec::with_capacity(prep.inputs.len());
        let mut pooled = Vec::with_capacity(prep.inputs.len());
        for (inp, &offset) in prep.inputs.iter().zip(&prep.offsets) {
            let mut emb = self.encoder.embed(g, ps, &inp.token_ids);
            if let Some(eps) = epsilon {
                let rows: Vec<usize> = (offset..offset + inp.len()).collect();
                emb = g.add(emb, g.gather_rows(eps, &rows));
            }
            let hidden = self
                .encoder
                .encode_from_embeddings(g, ps, emb, &inp.attention_mask);
            let pv = gather_vars(g, hidden, inp);
            let roles: Vec<Role> = inp.turn_marker_pos.iter().map(|(_, r)| *r).collect();
            let sdot = contextualize(
                g,
                ps,
                &self.ctx,
                pv.s,
                pv.z,
                pv.u,
                &roles,
                self.config.window,
            );
            pairs.push((pv.z, sdot));
            pooled.push(pv);
        }
        let logits = next_turn_logits(
            g,
            &pairs,
            g.param(ps, self.next.w_p),
            g.param(ps, self.next.w_b),
            g.param(ps, self.next.w_e),
        )?;
        Ok(ForwardPass { logits, pooled })
    }

    /// Joint loss of one example on `g`.
    pub fn example_loss(
        &self,
        g: &Graph,
        prep: &PreparedExample,
        objective: &ObjectiveConfig,
        rng: &mut impl Rng,
    ) -> Result<(Var, LossBreakdown)> {
        let gold = prep.gold.ok_or_else(|| {
            Error::Data(format!(
                "example {} has no reachable gold span",
                prep.example_id
            ))
        })?;
        let fwd = self.forward(g, prep, None)?;
        let (lp, lb, le) = next_loss(g, &fwd.logits, gold)?;
        let l_next = g.add_all(&[lp, lb, le]);
        let mut parts = LossParts {
            next: (g.scalar(lp), g.scalar(lb), g.scalar(le)),
            ..LossParts::default()
        };
        let mut terms = vec![l_next];

        if objective.alpha > 0.0 && !prep.history.is_empty() {
            let ps = &self.params;
            let heads = HistoryHeadVars {
                w_h: g.param(ps, self.hist.w_h),
                w_ph: g.param(ps, self.hist.w_ph),
                w_bh: g.param(ps, self.hist.w_bh),
                w_eh: g.param(ps, self.hist.w_eh),
            };
            let u: Vec<Var> = fwd.pooled.iter().map(|p| p.u).collect();
            let s: Vec<Var> = fwd.pooled.iter().map(|p| p.s).collect();
            let (hp, hb, he) = history_loss(g, &u, &s, &prep.history, heads);
            parts.hist = (g.scalar(hp), g.scalar(hb), g.scalar(he));
            terms.push(g.scale(g.add_all(&[hp, hb, he]), objective.alpha));
        }

        if objective.beta > 0.0 && objective.adversarial.radius > 0.0 {
            let clean = fwd.heads().values(g);
            let view = PerturbedExample { model: self, prep };
            let outcome = adversarial_loss(&view, &clean, &objective.adversarial, rng)?;
            let eps = g.constant(outcome.epsilon);
            let perturbed = self.forward(g, prep, Some(eps))?;
            let h = fwd.heads();
            let div = divergence_sum(g, [h.psg, h.begin, h.end], perturbed.heads());
            parts.adv = g.scalar(div);
            terms.push(g.scale(div, objective.beta));
        }

        let breakdown = joint_loss(parts, objective.alpha, objective.beta);
        if !breakdown.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                example_id: prep.example_id.clone(),
                value: breakdown.total,
            });
        }
        Ok((g.add_all(&terms), breakdown))
    }

    /// Loss breakdown and gradient of the total for every bound parameter.
    pub fn loss_and_grads(
        &self,
        prep: &PreparedExample,
        objective: &ObjectiveConfig,
        rng: &mut impl Rng,
    ) -> Result<(LossBreakdown, Vec<(ParamId, Tensor)>)> {
        let g = Graph::new();
        let (total, breakdown) = self.example_loss(&g, prep, objective, rng)?;
        let grads = g.backward(total);
        let out = g
            .bound_params()
            .into_iter()
            .filter_map(|(id, v)| grads.get(v).map(|t| (id, t.clone())))
            .collect();
        Ok((breakdown, out))
    }

    /// Loss breakdown without gradients.
    pub fn loss(
        &self,
        prep: &PreparedExample,
        objective: &ObjectiveConfig,
        rng: &mut impl Rng,
    ) -> Result<LossBreakdown> {
        let g = Graph::frozen();
        Ok(self.example_loss(&g, prep, objective, rng)?.1)
    }

    /// Head logit values of a clean forward pass.
    pub fn logits(
        &self,
        prep: &PreparedExample,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, crate::objectives::SuIndexMap)> {
        let g = Graph::frozen();
        let fwd = self.forward(&g, prep, None)?;
        let col = |v: Var| g.value(v).iter().copied().collect::<Vec<f64>>();
        Ok((
            col(fwd.logits.psg),
            col(fwd.logits.begin),
            col(fwd.logits.end),
            fwd.logits.index.clone(),
        ))
    }
}

/// Guess the hidden width implied by a stored tensor shape.
fn infer_d(name: &str, dim: (usize, usize)) -> Option<usize> {
    if name.ends_with("w_b") || name.ends_with("w_e") {
        Some(dim.0 / 3)
    } else if name.ends_with("token_emb") || name.ends_with("pos_emb") || name.ends_with(".w1") {
        Some(dim.1)
    } else {
        Some(dim.0)
    }
}

/// A prepared example viewed as a function of the embedding perturbation.
pub struct PerturbedExample<'a> {
    pub model: &'a KnowledgeModel,
    pub prep: &'a PreparedExample,
}

impl Perturbable for PerturbedExample<'_> {
    fn perturbation_shape(&self) -> (usize, usize) {
        (self.prep.total_tokens(), self.model.d())
    }

    fn perturbed_logits(&self, g: &Graph, epsilon: Var) -> HeadLogits {
        self.model
            .forward(g, self.prep, Some(epsilon))
            .expect("shapes validated by the clean pass")
            .heads()
    }
}

/// Zero perturbation of the right shape.
pub fn zero_perturbation(model: &KnowledgeModel, prep: &PreparedExample) -> Tensor {
    Array2::zeros((prep.total_tokens(), model.d()))
}
