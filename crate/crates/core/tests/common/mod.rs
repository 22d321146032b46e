#![allow(dead_code)]

use std::collections::BTreeMap;

use knowsel::contextualizer::ContextWindow;
use knowsel::corpus::{
    Corpus, CorpusFormat, DialogueExample, KnowledgeLabel, Passage, Role, Segmentation, Turn,
};
use knowsel::encoder::EncoderConfig;
use knowsel::encoding::Limits;
use knowsel::model::{KnowledgeModel, ModelConfig};
use knowsel::synthetic::{generate, SyntheticConfig};
use knowsel::tokenizer::WordTokenizer;
use knowsel::trainer::TrainConfig;
use rand::Rng;

pub fn synthetic_corpus(dialogues: usize, seed: u64, segmentation: Segmentation) -> Corpus {
    let (docs, dials) = generate(&SyntheticConfig {
        dialogues,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    Corpus::from_raw(&docs, &dials, CorpusFormat::Doc2DialLike, segmentation).unwrap()
}

/// Settings for from-scratch training of the tiny encoder on synthetic data.
pub fn tiny_train_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.model.encoder = EncoderConfig {
        layers: 2,
        d: 32,
        heads: 4,
        max_len: 128,
        seed: 0,
    };
    cfg.model.limits = Limits {
        max_context_tokens: 64,
        max_total_tokens: 128,
    };
    cfg.optim.learning_rate = 1e-3;
    cfg.optim.warmup_steps = 20;
    cfg.optim.grad_accum = 4;
    cfg
}

const WORDS: [&str; 12] = [
    "river", "stone", "cloud", "maple", "ember", "frost", "delta", "amber", "grove", "pixel",
    "orbit", "cedar",
];

fn sentence(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random example with `k` candidates of 1..=max_sus units, a gold span and
/// one history label.
pub fn random_example(rng: &mut impl Rng, k: usize, max_sus: usize) -> DialogueExample {
    let passages: Vec<Passage> = (0..k)
        .map(|p| {
            let n = rng.gen_range(1..=max_sus);
            let units: Vec<(String, (usize, usize))> = (0..n)
                .map(|j| {
                    let len = rng.gen_range(1..4);
                    (sentence(rng, len), (p, j))
                })
                .collect();
            Passage::from_units(format!("doc#{p}"), Some(format!("doc part {p}")), units)
        })
        .collect();
    let gk = rng.gen_range(0..k);
    let gb = rng.gen_range(0..passages[gk].len());
    let ge = rng.gen_range(gb..passages[gk].len());
    let hk = rng.gen_range(0..k);
    let hb = rng.gen_range(0..passages[hk].len());
    let mut history = BTreeMap::new();
    history.insert(
        1,
        KnowledgeLabel {
            passage_id: passages[hk].passage_id.clone(),
            begin_su: hb,
            end_su: hb,
        },
    );
    let turn = |role, text: String| Turn {
        role,
        text,
        grounding: None,
    };
    DialogueExample {
        example_id: format!("rand:{}", rng.gen::<u32>()),
        dial_id: "rand".into(),
        doc_id: Some("doc".into()),
        context: vec![
            turn(Role::User, sentence(rng, 3)),
            turn(Role::Agent, sentence(rng, 4)),
            turn(Role::User, sentence(rng, 2)),
        ],
        gold_text: passages[gk].span_text(gb, ge),
        gold: KnowledgeLabel {
            passage_id: passages[gk].passage_id.clone(),
            begin_su: gb,
            end_su: ge,
        },
        candidate_passages: passages,
        history_labels: history,
    }
}

pub fn word_tokenizer() -> WordTokenizer {
    let mut texts: Vec<String> = WORDS.iter().map(|w| w.to_string()).collect();
    texts.extend(["doc", "part", "0", "1", "2", "3", "4", "5"].map(String::from));
    WordTokenizer::build(texts.iter().map(String::as_str), 1)
}

pub fn tiny_model(d: usize, heads: usize, seed: u64) -> KnowledgeModel {
    let config = ModelConfig {
        encoder: EncoderConfig {
            layers: 1,
            d,
            heads,
            max_len: 96,
            seed,
        },
        limits: Limits {
            max_context_tokens: 32,
            max_total_tokens: 96,
        },
        window: ContextWindow::default(),
    };
    KnowledgeModel::new(config, word_tokenizer()).unwrap()
}

/// Reorders candidates by `perm` (new position i holds old `perm[i]`).
pub fn permute_candidates(ex: &DialogueExample, perm: &[usize]) -> DialogueExample {
    let mut out = ex.clone();
    out.candidate_passages = perm
        .iter()
        .map(|&i| ex.candidate_passages[i].clone())
        .collect();
    out
}
