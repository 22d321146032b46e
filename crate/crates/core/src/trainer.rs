//! Training loop: AdamW with linear warmup and decay, gradient
//! accumulation, per-epoch dev evaluation and best-EM checkpointing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::checkpoint::save_checkpoint;
use crate::corpus::{
    build_examples, load_corpus, BuildConfig, CandidateMode, Corpus, CorpusFormat, DialogueExample,
    HistoryAvailability, Segmentation, SkipReport,
};
use crate::error::{Error, Result};
use crate::inference::{predict_all, InferenceConfig};
use crate::metrics::{evaluate, EvalReport, Reference};
use crate::model::{KnowledgeModel, ModelConfig, ObjectiveConfig, PreparedExample};
use crate::objectives::LossBreakdown;
use crate::params::{ParamId, ParamStore};
use crate::tokenizer::WordTokenizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `documents.jsonl` and `dialogues.jsonl`.
    pub train: PathBuf,
    /// Dev corpus directory; the training corpus is scored when absent.
    pub dev: Option<PathBuf>,
    pub format: CorpusFormat,
    pub segmentation: Segmentation,
    pub history: HistoryAvailability,
    pub max_candidates_train: usize,
    pub max_candidates_eval: usize,
    pub vocab_min_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: PathBuf::from("data/train"),
            dev: None,
            format: CorpusFormat::Doc2DialLike,
            segmentation: Segmentation::Sections,
            history: HistoryAvailability::All,
            max_candidates_train: 10,
            max_candidates_eval: 20,
            vocab_min_count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Examples per optimizer step.
    pub grad_accum: usize,
    /// Global gradient-norm cap.
    pub clip_norm: Option<f64>,
    /// Stop once dev EM reaches this value.
    pub early_stop_em: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            warmup_steps: 1000,
            epochs: 20,
            weight_decay: 0.01,
            grad_accum: 8,
            clip_norm: Some(1.0),
            early_stop_em: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Shuffling, negative sampling and adversarial starts.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub objective: ObjectiveConfig,
    pub inference: InferenceConfig,
    /// Receives `train_log.jsonl` and `best.safetensors`.
    pub output_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.objective.validate()?;
        let o = &self.optim;
        let positive = [
            ("optim.learning_rate", o.learning_rate > 0.0),
            ("optim.epochs", o.epochs > 0),
            ("optim.grad_accum", o.grad_accum > 0),
            ("optim.weight_decay", o.weight_decay >= 0.0),
            ("optim.clip_norm", o.clip_norm.is_none_or(|c| c > 0.0)),
            (
                "data.max_candidates_train",
                self.data.max_candidates_train > 0,
            ),
            (
                "data.max_candidates_eval",
                self.data.max_candidates_eval > 0,
            ),
            (
                "inference.max_knowledge_len",
                self.inference.max_knowledge_len > 0,
            ),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(Error::Config(format!("{name} out of range")));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear schedule: `0 → base` over `warmup` steps, then
/// `base → 0` at `total`.
pub fn learning_rate(step: usize, base: f64, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        base * step as f64 / warmup as f64
    } else if total <= warmup {
        base
    } else {
        base * (total.saturating_sub(step)) as f64 / (total - warmup) as f64
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &ParamStore, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.dim()))
                .collect::<Vec<_>>()
        };
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update; `grads[i]` belongs to the i-th stored parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let ids: Vec<ParamId> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let Some(g) = &grads[i] else { continue };
            let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
            self.m[i].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            self.v[i].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let p = params.value_mut(id);
            ndarray::Zip::from(p)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|p, &m, &v| {
                    *p -= lr * ((m / c1) / ((v / c2).sqrt() + eps) + wd * *p);
                });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Step {
        step: usize,
        epoch: usize,
        lr: f64,
        loss: LossBreakdown,
    },
    Epoch {
        epoch: usize,
        step: usize,
        dev_em: f64,
        dev_f1: f64,
        dev_passage_acc: f64,
    },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev EM.
    pub model: KnowledgeModel,
    pub best_dev: EvalReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub log: Vec<LogRecord>,
    pub skip_report: SkipReport,
}

impl TrainOutcome {
    pub fn step_losses(&self) -> Vec<LossBreakdown> {
        self.log
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { loss, .. } => Some(*loss),
                LogRecord::Epoch { .. } => None,
            })
            .collect()
    }
}

/// Vocabulary over every title, semantic unit and turn of the corpus.
pub fn build_tokenizer(corpus: &Corpus, min_count: usize) -> WordTokenizer {
    let mut texts: Vec<&str> = Vec::new();
    for doc in &corpus.documents {
        for p in &doc.passages {
            if let Some(t) = &p.title {
                texts.push(t);
            }
            texts.extend(p.units.iter().map(|u| u.text.as_str()));
        }
    }
    for d in &corpus.dialogues {
        texts.extend(d.turns.iter().map(|t| t.turn.text.as_str()));
    }
    texts.push(crate::corpus::NO_PASSAGE_TEXT);
    WordTokenizer::build(texts, min_count)
}

fn eval_examples(corpus: &Corpus, config: &TrainConfig) -> Result<Vec<DialogueExample>> {
    let (examples, _) = build_examples(
        corpus,
        &BuildConfig {
            max_candidates: config.data.max_candidates_eval,
            mode: CandidateMode::Inference,
            history: config.data.history,
        },
    )?;
    Ok(examples)
}

pub fn dev_report(
    model: &KnowledgeModel,
    examples: &[DialogueExample],
    config: &InferenceConfig,
) -> Result<EvalReport> {
    let preds = predict_all(model, examples, config)?;
    let refs: Vec<Reference> = examples.iter().map(Reference::from).collect();
    evaluate(&preds, &refs, None)
}

/// Trains on `train_corpus`, scoring `dev_corpus` (or the training
/// dialogues) after every epoch.
pub fn train(
    config: &TrainConfig,
    train_corpus: &Corpus,
    dev_corpus: Option<&Corpus>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let tokenizer = build_tokenizer(train_corpus, config.data.vocab_min_count);
    let mut model = KnowledgeModel::new(config.model.clone(), tokenizer)?;

    let (examples, mut skip_report) = build_examples(
        train_corpus,
        &BuildConfig {
            max_candidates: config.data.max_candidates_train,
            mode: CandidateMode::Train { seed: config.seed },
            history: config.data.history,
        },
    )?;
    let mut prepared: Vec<PreparedExample> = Vec::with_capacity(examples.len());
    for ex in &examples {
        let prep = model.prepare(ex)?;
        if prep.gold.is_some() {
            prepared.push(prep);
        } else {
            skip_report.drop_example("gold_truncated");
        }
    }
    if skip_report.dropped_examples > 0 {
        log::info!(
            "skipped {} training examples: {:?}",
            skip_report.dropped_examples,
            skip_report.reasons
        );
    }
    if prepared.is_empty() {
        return Err(Error::Data("no trainable examples".into()));
    }
    let dev_examples = eval_examples(dev_corpus.unwrap_or(train_corpus), config)?;

    let mut log_file = match &config.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train_log.jsonl");
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            Some((path, BufWriter::new(f)))
        }
        None => None,
    };
    let mut log = Vec::new();
    let mut emit = |rec: LogRecord, log: &mut Vec<LogRecord>| -> Result<()> {
        if let Some((path, w)) = log_file.as_mut() {
            let line = serde_json::to_string(&rec).expect("log record serializes");
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path.as_path(), e))?;
        }
        log.push(rec);
        Ok(())
    };

    let o = &config.optim;
    let steps_per_epoch = prepared.len().div_ceil(o.grad_accum);
    let total_steps = steps_per_epoch * o.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = AdamW::new(&model.params, o.weight_decay);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut step = 0;
    let mut best: Option<(EvalReport, usize, ParamStore)> = None;
    let mut epochs_run = 0;

    for epoch in 0..o.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(o.grad_accum) {
            let mut grads: Vec<Option<Tensor>> = vec![None; model.params.len()];
            let mut parts = Vec::with_capacity(chunk.len());
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (b, g) = model.loss_and_grads(&prepared[i], &config.objective, &mut rng)?;
                parts.push(b);
                for (id, t) in g {
                    let slot = &mut grads[id.0];
                    match slot {
                        Some(acc) => acc.scaled_add(scale, &t),
                        None => *slot = Some(t * scale),
                    }
                }
            }
            if let Some(max) = o.clip_norm {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|t| t.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    grads.iter_mut().flatten().for_each(|t| *t *= max / norm);
                }
            }
            let lr = learning_rate(step, o.learning_rate, o.warmup_steps, total_steps);
            opt.step(&mut model.params, &grads, lr);
            let loss = LossBreakdown::mean(&parts);
            emit(
                LogRecord::Step {
                    step,
                    epoch,
                    lr,
                    loss,
                },
                &mut log,
            )?;
            step += 1;
        }

        epochs_run = epoch + 1;
        let report = dev_report(&model, &dev_examples, &config.inference)?;
        log::info!("epoch {epoch}: dev EM {:.4} F1 {:.4}", report.em, report.f1);
        emit(
            LogRecord::Epoch {
                epoch,
                step,
                dev_em: report.em,
                dev_f1: report.f1,
                dev_passage_acc: report.passage_acc,
            },
            &mut log,
        )?;
        let improved = best.as_ref().is_none_or(|(b, _, _)| report.em > b.em);
        let reached = o.early_stop_em.is_some_and(|t| report.em >= t);
        if improved {
            if let Some(dir) = &config.output_dir {
                save_checkpoint(
                    &model,
                    Some(config),
                    Some(&report),
                    &dir.join("best.safetensors"),
                )?;
            }
            best = Some((report, epoch, model.params.clone()));
        }
        if reached {
            break;
        }
    }

    let (best_dev, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome {
        model,
        best_dev,
        best_epoch,
        epochs_run,
        log,
        skip_report,
    })
}

/// Loads the corpora named in `config` and trains.
pub fn train_from_config(config: &TrainConfig) -> Result<TrainOutcome> {
    let train_corpus = load_corpus(
        &config.data.train,
        config.data.format,
        config.data.segmentation,
    )?;
    let dev_corpus = config
        .data
        .dev
        .as_ref()
        .map(|p| load_corpus(p, config.data.format, config.data.segmentation))
        .transpose()?;
    train(config, &train_corpus, dev_corpus.as_ref())
}
