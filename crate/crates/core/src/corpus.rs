//! Grounding documents, dialogues, and per-agent-turn examples.
//!
//! Raw inputs use a neutral JSONL layout. Documents are lists of titled
//! sections, each a list of semantic units (SUs). Dialogue groundings always
//! address a *section* as `"{doc_id}#{section}"` with SU indices inside that
//! section; loading re-targets them onto whichever segmentation was chosen.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Passage id of the pseudo-passage offered when no knowledge is used.
pub const NO_PASSAGE_ID: &str = "no_passages_used";
pub const NO_PASSAGE_TEXT: &str = "no passages used";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticUnit {
    pub su_id: usize,
    pub text: String,
    /// Half-open character interval within [`Passage::text`].
    pub char_span: (usize, usize),
    /// Section and SU index this unit came from in the raw document.
    pub origin: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub title: Option<String>,
    pub units: Vec<SemanticUnit>,
}

impl Passage {
    /// Builds a passage from unit texts, assigning ids and character spans.
    pub fn from_units(
        passage_id: impl Into<String>,
        title: Option<String>,
        units: impl IntoIterator<Item = (String, (usize, usize))>,
    ) -> Self {
        let mut out = Vec::new();
        let mut offset = 0;
        for (i, (text, origin)) in units.into_iter().enumerate() {
            if i > 0 {
                offset += 1;
            }
            let len = text.chars().count();
            out.push(SemanticUnit {
                su_id: i,
                text,
                char_span: (offset, offset + len),
                origin,
            });
            offset += len;
        }
        Passage {
            passage_id: passage_id.into(),
            title,
            units: out,
        }
    }

    pub fn no_passage() -> Self {
        Passage::from_units(NO_PASSAGE_ID, None, [(NO_PASSAGE_TEXT.to_string(), (0, 0))])
    }

    /// SU texts joined by single spaces.
    pub fn text(&self) -> String {
        self.units
            .iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Text of SUs `begin..=end`.
    pub fn span_text(&self, begin: usize, end: usize) -> String {
        self.units[begin..=end]
            .iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub passages: Vec<Passage>,
}

impl Document {
    pub fn passage(&self, passage_id: &str) -> Option<&Passage> {
        self.passages.iter().find(|p| p.passage_id == passage_id)
    }

    pub fn su_count(&self) -> usize {
        self.passages.iter().map(Passage::len).sum()
    }

    /// Finds the passage and position holding raw SU `(section, su)`.
    fn locate(&self, section: usize, su: usize) -> Option<(usize, usize)> {
        self.passages.iter().enumerate().find_map(|(pi, p)| {
            p.units
                .iter()
                .position(|u| u.origin == (section, su))
                .map(|ui| (pi, ui))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Agent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeLabel {
    pub passage_id: String,
    pub begin_su: usize,
    pub end_su: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub grounding: Option<KnowledgeLabel>,
}

/// A turn inside a loaded dialogue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    #[serde(flatten)]
    pub turn: Turn,
    /// Per-turn candidate passage ids (wow-like corpora only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
    /// Set when the raw grounding addressed SUs that do not exist.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub invalid_grounding: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dial_id: String,
    pub doc_id: Option<String>,
    pub turns: Vec<DialogueTurn>,
}

/// One next-turn prediction problem. `context[0]` is the latest user turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueExample {
    pub example_id: String,
    pub dial_id: String,
    pub doc_id: Option<String>,
    pub context: Vec<Turn>,
    pub candidate_passages: Vec<Passage>,
    pub gold: KnowledgeLabel,
    pub gold_text: String,
    /// Keyed by position in `context`.
    pub history_labels: BTreeMap<usize, KnowledgeLabel>,
}

impl DialogueExample {
    pub fn gold_index(&self) -> Option<usize> {
        self.candidate_passages
            .iter()
            .position(|p| p.passage_id == self.gold.passage_id)
    }

    pub fn passage_index(&self, passage_id: &str) -> Option<usize> {
        self.candidate_passages
            .iter()
            .position(|p| p.passage_id == passage_id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    Sections,
    Sentences,
    Whole,
}

impl FromStr for Segmentation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sections" => Ok(Self::Sections),
            "sentences" => Ok(Self::Sentences),
            "whole" => Ok(Self::Whole),
            other => Err(Error::Config(format!("unknown segmentation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    #[serde(rename = "doc2dial")]
    Doc2DialLike,
    #[serde(rename = "wow")]
    WowLike,
}

impl FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doc2dial" | "doc2dial-like" => Ok(Self::Doc2DialLike),
            "wow" | "wow-like" => Ok(Self::WowLike),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

impl fmt::Display for CorpusFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Doc2DialLike => "doc2dial",
            Self::WowLike => "wow",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSu {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSection {
    #[serde(default)]
    pub title: String,
    pub sus: Vec<RawSu>,
}

/// One line of `documents.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub sections: Vec<RawSection>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub role: Role,
    pub text: String,
    #[serde(default)]
    pub grounding: Option<KnowledgeLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_doc_ids: Option<Vec<String>>,
}

/// One line of `dialogues.jsonl`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDialogue {
    pub dial_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub turns: Vec<RawTurn>,
}

pub fn section_id(doc_id: &str, section: usize) -> String {
    format!("{doc_id}#{section}")
}

fn parse_section_id(id: &str) -> Option<(&str, usize)> {
    let (doc, sec) = id.rsplit_once('#')?;
    Some((doc, sec.parse().ok()?))
}

/// Splits a raw document into passages.
pub fn segment_document(raw: &RawDocument, strategy: Segmentation) -> Result<Document> {
    let total: usize = raw.sections.iter().map(|s| s.sus.len()).sum();
    if total == 0 {
        return Err(Error::Data(format!(
            "document {:?} has no semantic units",
            raw.doc_id
        )));
    }
    let title_for = |section: &RawSection| -> Option<String> {
        let t = [raw.title.as_str(), section.title.as_str()]
            .iter()
            .filter(|s| !s.is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join(" ");
        (!t.is_empty()).then_some(t)
    };
    let units_of = |si: usize, section: &RawSection| {
        section
            .sus
            .iter()
            .enumerate()
            .map(move |(j, su)| (su.text.clone(), (si, j)))
            .collect::<Vec<_>>()
    };

    let passages = match strategy {
        Segmentation::Sections => raw
            .sections
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.sus.is_empty())
            .map(|(i, s)| {
                Passage::from_units(section_id(&raw.doc_id, i), title_for(s), units_of(i, s))
            })
            .collect(),
        Segmentation::Sentences => raw
            .sections
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                units_of(i, s).into_iter().map(move |(text, origin)| {
                    Passage::from_units(
                        format!("{}#{}.{}", raw.doc_id, origin.0, origin.1),
                        title_for(s),
                        [(text, origin)],
                    )
                })
            })
            .collect(),
        Segmentation::Whole => {
            let units = raw
                .sections
                .iter()
                .enumerate()
                .flat_map(|(i, s)| units_of(i, s))
                .collect::<Vec<_>>();
            let title = (!raw.title.is_empty()).then(|| raw.title.clone());
            vec![Passage::from_units(
                format!("{}#all", raw.doc_id),
                title,
                units,
            )]
        }
    };

    Ok(Document {
        doc_id: raw.doc_id.clone(),
        title: raw.title.clone(),
        passages,
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("serializable record");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Segmented documents plus dialogues whose references all resolve.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub format: CorpusFormat,
    pub documents: Vec<Document>,
    pub dialogues: Vec<Dialogue>,
    doc_index: HashMap<String, usize>,
    passage_index: HashMap<String, (usize, usize)>,
}

impl Corpus {
    /// Segments raw documents and resolves every dialogue reference.
    pub fn from_raw(
        raw_docs: &[RawDocument],
        raw_dialogues: &[RawDialogue],
        format: CorpusFormat,
        strategy: Segmentation,
    ) -> Result<Self> {
        let documents = raw_docs
            .iter()
            .map(|d| segment_document(d, strategy))
            .collect::<Result<Vec<_>>>()?;
        let mut doc_index = HashMap::new();
        let mut passage_index = HashMap::new();
        for (di, d) in documents.iter().enumerate() {
            if doc_index.insert(d.doc_id.clone(), di).is_some() {
                return Err(Error::Data(format!("duplicate doc_id {:?}", d.doc_id)));
            }
            for (pi, p) in d.passages.iter().enumerate() {
                passage_index.insert(p.passage_id.clone(), (di, pi));
            }
        }
        let mut corpus = Corpus {
            format,
            documents,
            dialogues: Vec::new(),
            doc_index,
            passage_index,
        };

        let mut unresolved = Vec::new();
        for raw in raw_dialogues {
            match corpus.resolve_dialogue(raw) {
                Ok(d) => corpus.dialogues.push(d),
                Err(reason) => unresolved.push(format!("{} ({reason})", raw.dial_id)),
            }
        }
        if !unresolved.is_empty() {
            return Err(Error::Data(format!(
                "unresolved references in dialogues: {}",
                unresolved.join(", ")
            )));
        }
        Ok(corpus)
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.doc_index.get(doc_id).map(|&i| &self.documents[i])
    }

    /// Looks up a passage by id, including the pseudo-passage.
    pub fn passage(&self, passage_id: &str) -> Option<Passage> {
        if passage_id == NO_PASSAGE_ID {
            return Some(Passage::no_passage());
        }
        self.passage_index
            .get(passage_id)
            .map(|&(d, p)| self.documents[d].passages[p].clone())
    }

    fn resolve_dialogue(&self, raw: &RawDialogue) -> std::result::Result<Dialogue, String> {
        let doc = match (&raw.doc_id, self.format) {
            (Some(id), _) => Some(
                self.document(id)
                    .ok_or_else(|| format!("missing document {id:?}"))?,
            ),
            (None, CorpusFormat::Doc2DialLike) => return Err("no doc_id".into()),
            (None, CorpusFormat::WowLike) => None,
        };
        let mut turns = Vec::with_capacity(raw.turns.len());
        for (ti, t) in raw.turns.iter().enumerate() {
            let mut candidates = Vec::new();
            if self.format == CorpusFormat::WowLike {
                for id in t.candidate_doc_ids.iter().flatten() {
                    let d = self
                        .document(id)
                        .ok_or_else(|| format!("turn {ti}: missing document {id:?}"))?;
                    candidates.extend(d.passages.iter().map(|p| p.passage_id.clone()));
                }
                if t.role == Role::Agent {
                    candidates.push(NO_PASSAGE_ID.to_string());
                }
            }
            let mut invalid_grounding = false;
            let grounding = match &t.grounding {
                None => None,
                Some(label) if label.passage_id == NO_PASSAGE_ID => {
                    if label.begin_su != 0 || label.end_su != 0 {
                        invalid_grounding = true;
                        None
                    } else {
                        Some(label.clone())
                    }
                }
                Some(label) => {
                    let (doc_id, section) =
                        parse_section_id(&label.passage_id).ok_or_else(|| {
                            format!("turn {ti}: bad passage id {:?}", label.passage_id)
                        })?;
                    let target = self
                        .document(doc_id)
                        .ok_or_else(|| format!("turn {ti}: missing document {doc_id:?}"))?;
                    if let Some(d) = doc {
                        if d.doc_id != target.doc_id {
                            return Err(format!(
                                "turn {ti}: grounding in {doc_id:?}, dialogue document is {:?}",
                                d.doc_id
                            ));
                        }
                    }
                    if section >= raw_section_count(target) {
                        return Err(format!("turn {ti}: missing passage {:?}", label.passage_id));
                    }
                    match retarget(target, section, label.begin_su, label.end_su) {
                        Some(l) => Some(l),
                        None => {
                            invalid_grounding = true;
                            None
                        }
                    }
                }
            };
            turns.push(DialogueTurn {
                turn: Turn {
                    role: t.role,
                    text: t.text.clone(),
                    grounding,
                },
                candidates,
                invalid_grounding,
            });
        }
        Ok(Dialogue {
            dial_id: raw.dial_id.clone(),
            doc_id: raw.doc_id.clone(),
            turns,
        })
    }
}

fn raw_section_count(doc: &Document) -> usize {
    doc.passages
        .iter()
        .flat_map(|p| p.units.iter().map(|u| u.origin.0 + 1))
        .max()
        .unwrap_or(0)
}

/// Maps a section-level span onto the segmented document. A span that
/// crosses a passage boundary is clipped to the passage holding its start.
fn retarget(doc: &Document, section: usize, begin: usize, end: usize) -> Option<KnowledgeLabel> {
    if begin > end {
        return None;
    }
    let (pi, b) = doc.locate(section, begin)?;
    let (pe, e) = doc.locate(section, end)?;
    let passage = &doc.passages[pi];
    let e = if pe == pi { e } else { passage.len() - 1 };
    Some(KnowledgeLabel {
        passage_id: passage.passage_id.clone(),
        begin_su: b,
        end_su: e,
    })
}

/// Reads `documents.jsonl` and `dialogues.jsonl` from `dir`.
pub fn load_corpus(dir: &Path, format: CorpusFormat, strategy: Segmentation) -> Result<Corpus> {
    let docs: Vec<RawDocument> = read_jsonl(&dir.join("documents.jsonl"))?;
    let dialogues_path = dir.join("dialogues.jsonl");
    let dialogues: Vec<RawDialogue> = if dialogues_path.exists() {
        read_jsonl(&dialogues_path)?
    } else {
        Vec::new()
    };
    Corpus::from_raw(&docs, &dialogues, format, strategy)
}

/// Which history turns contribute labels to the auxiliary objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryAvailability {
    #[default]
    All,
    AgentOnly,
    #[serde(rename = "agent-50%")]
    AgentHalf,
    None,
}

impl FromStr for HistoryAvailability {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "agent-only" => Ok(Self::AgentOnly),
            "agent-50%" | "agent-half" => Ok(Self::AgentHalf),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!(
                "unknown history availability {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateMode {
    /// Gold plus uniformly sampled negatives, in document order.
    Train { seed: u64 },
    /// The first `max_candidates` passages.
    Inference,
}

#[derive(Clone, Copy, Debug)]
pub struct BuildConfig {
    pub max_candidates: usize,
    pub mode: CandidateMode,
    pub history: HistoryAvailability,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub dropped_examples: usize,
    pub reasons: BTreeMap<String, usize>,
    /// History turns with a label, and how many resolved into candidates.
    #[serde(default)]
    pub history_labeled: usize,
    #[serde(default)]
    pub history_resolved: usize,
}

impl SkipReport {
    pub fn drop_example(&mut self, reason: &str) {
        self.dropped_examples += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn history_coverage(&self) -> f64 {
        if self.history_labeled == 0 {
            0.0
        } else {
            self.history_resolved as f64 / self.history_labeled as f64
        }
    }
}

/// One example per labeled agent turn.
pub fn build_examples(
    corpus: &Corpus,
    config: &BuildConfig,
) -> Result<(Vec<DialogueExample>, SkipReport)> {
    if config.max_candidates == 0 {
        return Err(Error::Config("max_candidates must be at least 1".into()));
    }
    let mut rng = match config.mode {
        CandidateMode::Train { seed } => ChaCha8Rng::seed_from_u64(seed),
        CandidateMode::Inference => ChaCha8Rng::seed_from_u64(0),
    };
    let mut report = SkipReport::default();
    let mut examples = Vec::new();

    for dialogue in &corpus.dialogues {
        for (ti, dt) in dialogue.turns.iter().enumerate() {
            if dt.turn.role != Role::Agent {
                continue;
            }
            if dt.invalid_grounding {
                report.drop_example("gold_span_out_of_range");
                continue;
            }
            let Some(gold) = &dt.turn.grounding else {
                continue;
            };
            let pool: Vec<Passage> = match corpus.format {
                CorpusFormat::Doc2DialLike => {
                    let doc_id = dialogue.doc_id.as_deref().expect("resolved dialogue");
                    corpus.document(doc_id).expect("resolved").passages.clone()
                }
                CorpusFormat::WowLike => dt
                    .candidates
                    .iter()
                    .map(|id| corpus.passage(id).expect("resolved candidate"))
                    .collect(),
            };
            let Some(gold_passage) = pool.iter().find(|p| p.passage_id == gold.passage_id) else {
                report.drop_example("gold_not_in_candidates");
                continue;
            };
            if gold.begin_su > gold.end_su || gold.end_su >= gold_passage.len() {
                report.drop_example("gold_span_out_of_range");
                continue;
            }
            let gold_text = gold_passage.span_text(gold.begin_su, gold.end_su);

            let context: Vec<Turn> = dialogue.turns[..ti]
                .iter()
                .rev()
                .map(|t| t.turn.clone())
                .collect();
            if context.first().map(|t| t.role) != Some(Role::User) {
                report.drop_example("context_not_user");
                continue;
            }

            let candidates = select_candidates(&pool, gold, config, &mut rng);

            let mut history_labels = BTreeMap::new();
            let candidate_ids: HashSet<&str> =
                candidates.iter().map(|p| p.passage_id.as_str()).collect();
            for (pos, t) in context.iter().enumerate() {
                let Some(label) = &t.grounding else { continue };
                let keep = match config.history {
                    HistoryAvailability::All => true,
                    HistoryAvailability::AgentOnly => t.role == Role::Agent,
                    HistoryAvailability::AgentHalf => t.role == Role::Agent && rng.gen_bool(0.5),
                    HistoryAvailability::None => false,
                };
                if !keep {
                    continue;
                }
                report.history_labeled += 1;
                if candidate_ids.contains(label.passage_id.as_str()) {
                    report.history_resolved += 1;
                    history_labels.insert(pos, label.clone());
                }
            }

            examples.push(DialogueExample {
                example_id: format!("{}:{ti}", dialogue.dial_id),
                dial_id: dialogue.dial_id.clone(),
                doc_id: dialogue.doc_id.clone(),
                context,
                candidate_passages: candidates,
                gold: gold.clone(),
                gold_text,
                history_labels,
            });
        }
    }
    Ok((examples, report))
}

fn select_candidates(
    pool: &[Passage],
    gold: &KnowledgeLabel,
    config: &BuildConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Passage> {
    match config.mode {
        CandidateMode::Inference => pool.iter().take(config.max_candidates).cloned().collect(),
        CandidateMode::Train { .. } => {
            if pool.len() <= config.max_candidates {
                return pool.to_vec();
            }
            let negatives: Vec<usize> = (0..pool.len())
                .filter(|&i| pool[i].passage_id != gold.passage_id)
                .collect();
            let mut chosen: Vec<usize> = sample(rng, negatives.len(), config.max_candidates - 1)
                .into_iter()
                .map(|i| negatives[i])
                .collect();
            chosen.push(
                pool.iter()
                    .position(|p| p.passage_id == gold.passage_id)
                    .expect("gold in pool"),
            );
            chosen.sort_unstable();
            chosen.into_iter().map(|i| pool[i].clone()).collect()
        }
    }
}
