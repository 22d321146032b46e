//! Small randomly initialised bidirectional self-attention encoder used as
//! the reference [`SequenceEncoder`].

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::encoding::SequenceEncoder;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tokenizer::TokenId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub layers: usize,
    pub d: usize,
    pub heads: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            d: 32,
            heads: 4,
            max_len: 512,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "encoder d = {} must be a positive multiple of heads = {}",
                self.d, self.heads
            )));
        }
        if self.max_len == 0 {
            return Err(Error::Config("encoder max_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Layer {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_g: ParamId,
    ln1_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct TinyEncoder {
    config: EncoderConfig,
    token_emb: ParamId,
    pos_emb: ParamId,
    emb_ln_g: ParamId,
    emb_ln_b: ParamId,
    layers: Vec<Layer>,
}

/// Additive bias for masked attention keys.
const MASKED: f64 = -1e9;

impl TinyEncoder {
    /// Registers all encoder parameters in `params` under `encoder.*`.
    pub fn new(
        config: EncoderConfig,
        vocab_size: usize,
        params: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let ff = 4 * d;
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let gaussian = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| {
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
        };
        let token_emb = params.insert("encoder.token_emb", gaussian(vocab_size, d, rng));
        let pos_emb = params.insert("encoder.pos_emb", gaussian(config.max_len, d, rng));
        let emb_ln_g = params.ones("encoder.emb_ln.gamma", 1, d);
        let emb_ln_b = params.zeros("encoder.emb_ln.beta", 1, d);

        let bound_d = 1.0 / (d as f64).sqrt();
        let bound_ff = 1.0 / (ff as f64).sqrt();
        let layers = (0..config.layers)
            .map(|l| {
                let p = |n: &str| format!("encoder.layer{l}.{n}");
                Layer {
                    wq: params.uniform(p("wq"), d, d, bound_d, rng),
                    bq: params.zeros(p("bq"), 1, d),
                    wk: params.uniform(p("wk"), d, d, bound_d, rng),
                    bk: params.zeros(p("bk"), 1, d),
                    wv: params.uniform(p("wv"), d, d, bound_d, rng),
                    bv: params.zeros(p("bv"), 1, d),
                    wo: params.uniform(p("wo"), d, d, bound_d, rng),
                    bo: params.zeros(p("bo"), 1, d),
                    ln1_g: params.ones(p("ln1.gamma"), 1, d),
                    ln1_b: params.zeros(p("ln1.beta"), 1, d),
                    w1: params.uniform(p("w1"), d, ff, bound_d, rng),
                    b1: params.zeros(p("b1"), 1, ff),
                    w2: params.uniform(p("w2"), ff, d, bound_ff, rng),
                    b2: params.zeros(p("b2"), 1, d),
                    ln2_g: params.ones(p("ln2.gamma"), 1, d),
                    ln2_b: params.zeros(p("ln2.beta"), 1, d),
                }
            })
            .collect();
        Ok(Self {
            config,
            token_emb,
            pos_emb,
            emb_ln_g,
            emb_ln_b,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn layer_norm(&self, g: &Graph, ps: &ParamStore, x: Var, gamma: ParamId, beta: ParamId) -> Var {
        let n = g.layer_norm_rows(x);
        let scaled = g.mul(n, g.param(ps, gamma));
        g.add(scaled, g.param(ps, beta))
    }

    fn linear(&self, g: &Graph, ps: &ParamStore, x: Var, w: ParamId, b: ParamId) -> Var {
        let y = g.matmul(x, g.param(ps, w));
        g.add(y, g.param(ps, b))
    }

    fn attention(&self, g: &Graph, ps: &ParamStore, x: Var, layer: &Layer, key_bias: Var) -> Var {
        let q = self.linear(g, ps, x, layer.wq, layer.bq);
        let k = self.linear(g, ps, x, layer.wk, layer.bk);
        let v = self.linear(g, ps, x, layer.wv, layer.bv);
        let dh = self.config.d / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.config.heads)
            .map(|h| {
                let qh = g.slice_cols(q, h * dh, dh);
                let kh = g.slice_cols(k, h * dh, dh);
                let vh = g.slice_cols(v, h * dh, dh);
                let scores = g.scale(g.matmul_t(qh, kh), scale);
                let probs = g.softmax_rows(g.add(scores, key_bias));
                g.matmul(probs, vh)
            })
            .collect();
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)
        };
        self.linear(g, ps, merged, layer.wo, layer.bo)
    }
}

impl SequenceEncoder for TinyEncoder {
    fn hidden_dim(&self) -> usize {
        self.config.d
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn embed(&self, g: &Graph, ps: &ParamStore, ids: &[TokenId]) -> Var {
        assert!(
            ids.len() <= self.config.max_len,
            "sequence of {} exceeds max_len {}",
            ids.len(),
            self.config.max_len
        );
        let rows: Vec<usize> = ids.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = g.gather_rows(g.param(ps, self.token_emb), &rows);
        let pos = g.gather_rows(g.param(ps, self.pos_emb), &positions);
        let sum = g.add(tok, pos);
        self.layer_norm(g, ps, sum, self.emb_ln_g, self.emb_ln_b)
    }

    fn encode_from_embeddings(&self, g: &Graph, ps: &ParamStore, emb: Var, mask: &[bool]) -> Var {
        let (t, d) = g.shape(emb);
        assert_eq!(t, mask.len(), "mask length mismatch");
        assert_eq!(d, self.config.d, "embedding width mismatch");
        let bias = Array2::from_shape_fn((1, t), |(_, j)| if mask[j] { 0.0 } else { MASKED });
        let key_bias = g.constant(bias);
        let mut x = emb;
        for layer in &self.layers {
            let a = self.attention(g, ps, x, layer, key_bias);
            x = self.layer_norm(g, ps, g.add(x, a), layer.ln1_g, layer.ln1_b);
            let h = g.gelu(self.linear(g, ps, x, layer.w1, layer.b1));
            let f = self.linear(g, ps, h, layer.w2, layer.b2);
            x = self.layer_norm(g, ps, g.add(x, f), layer.ln2_g, layer.ln2_b);
        }
        x
    }
}
