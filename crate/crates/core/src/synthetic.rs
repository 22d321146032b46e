//! Seeded synthetic corpora where every grounded agent turn is cued by a
//! word in the preceding user turn.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    section_id, KnowledgeLabel, RawDialogue, RawDocument, RawSection, RawSu, RawTurn, Role,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub dialogues: usize,
    pub passages_per_doc: usize,
    pub sus_per_passage: usize,
    /// Number of distinct filler words.
    pub vocab_size: usize,
    /// Filler words per semantic unit.
    pub su_words: usize,
    /// User/agent exchanges per dialogue; every agent turn is grounded.
    pub exchanges: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dialogues: 32,
            passages_per_doc: 3,
            sus_per_passage: 4,
            vocab_size: 60,
            su_words: 4,
            exchanges: 2,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dialogues == 0
            || self.passages_per_doc == 0
            || self.sus_per_passage == 0
            || self.vocab_size == 0
            || self.exchanges == 0
        {
            return Err(Error::Config(
                "synthetic corpus sizes must all be positive".into(),
            ));
        }
        Ok(())
    }
}

fn filler(i: usize) -> String {
    format!("w{i}")
}

fn cue(i: usize) -> String {
    format!("cue{i}")
}

/// One document per dialogue. Each SU of a document carries its own cue
/// word; a user turn names the cue of the SU the next agent turn uses.
pub fn generate(config: &SyntheticConfig) -> Result<(Vec<RawDocument>, Vec<RawDialogue>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let units = config.passages_per_doc * config.sus_per_passage;
    let cue_pool = 2 * units;
    let mut docs = Vec::with_capacity(config.dialogues);
    let mut dialogues = Vec::with_capacity(config.dialogues);
    for n in 0..config.dialogues {
        let doc_id = format!("doc{n}");
        let mut cues: Vec<usize> = (0..cue_pool).collect();
        cues.shuffle(&mut rng);
        let sections = (0..config.passages_per_doc)
            .map(|p| RawSection {
                title: format!("part {p}"),
                sus: (0..config.sus_per_passage)
                    .map(|j| {
                        let mut words: Vec<String> = (0..config.su_words)
                            .map(|_| filler(rng.gen_range(0..config.vocab_size)))
                            .collect();
                        let at = rng.gen_range(0..=words.len());
                        words.insert(at, cue(cues[p * config.sus_per_passage + j]));
                        RawSu {
                            text: words.join(" "),
                        }
                    })
                    .collect(),
            })
            .collect();
        docs.push(RawDocument {
            doc_id: doc_id.clone(),
            title: format!("topic {n}"),
            sections,
        });

        let mut turns = Vec::with_capacity(2 * config.exchanges);
        for _ in 0..config.exchanges {
            let target = rng.gen_range(0..units);
            let (p, j) = (
                target / config.sus_per_passage,
                target % config.sus_per_passage,
            );
            let w1 = filler(rng.gen_range(0..config.vocab_size));
            let w2 = filler(rng.gen_range(0..config.vocab_size));
            turns.push(RawTurn {
                role: Role::User,
                text: format!("tell me about {} {w1} {w2}", cue(cues[target])),
                grounding: None,
                candidate_doc_ids: None,
            });
            turns.push(RawTurn {
                role: Role::Agent,
                text: format!("here is something {w2}"),
                grounding: Some(KnowledgeLabel {
                    passage_id: section_id(&doc_id, p),
                    begin_su: j,
                    end_su: j,
                }),
                candidate_doc_ids: None,
            });
        }
        dialogues.push(RawDialogue {
            dial_id: format!("dial{n}"),
            doc_id: Some(doc_id),
            turns,
        });
    }
    Ok((docs, dialogues))
}
