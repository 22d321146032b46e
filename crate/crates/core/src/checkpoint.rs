//! Model checkpoints: every parameter as an F64 tensor in a safetensors
//! file, with configuration, vocabulary and dev metrics in its metadata.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{KnowledgeModel, ModelConfig};
use crate::tokenizer::WordTokenizer;
use crate::trainer::TrainConfig;

pub const SCHEMA_VERSION: &str = "1";

const KEY_VERSION: &str = "schema_version";
const KEY_MODEL: &str = "model_config";
const KEY_TRAIN: &str = "train_config";
const KEY_VOCAB: &str = "vocab";
const KEY_METRICS: &str = "dev_metrics";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: KnowledgeModel,
    pub train_config: Option<TrainConfig>,
    pub dev_metrics: Option<EvalReport>,
}

fn bad(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn checkpoint_bytes(
    model: &KnowledgeModel,
    train_config: Option<&TrainConfig>,
    dev_metrics: Option<&EvalReport>,
) -> Result<Vec<u8>> {
    let mut meta = HashMap::new();
    meta.insert(KEY_VERSION.to_string(), SCHEMA_VERSION.to_string());
    meta.insert(
        KEY_MODEL.to_string(),
        serde_json::to_string(&model.config).map_err(bad)?,
    );
    meta.insert(KEY_VOCAB.to_string(), model.tokenizer.to_vocab_string());
    if let Some(tc) = train_config {
        meta.insert(
            KEY_TRAIN.to_string(),
            serde_json::to_string(tc).map_err(bad)?,
        );
    }
    if let Some(m) = dev_metrics {
        meta.insert(
            KEY_METRICS.to_string(),
            serde_json::to_string(m).map_err(bad)?,
        );
    }
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = model
        .params
        .iter()
        .map(|(_, name, t)| {
            let bytes = t.iter().flat_map(|x| x.to_le_bytes()).collect();
            (name.to_string(), vec![t.nrows(), t.ncols()], bytes)
        })
        .collect();
    let views = buffers
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F64, shape.clone(), bytes).map(|v| (name.clone(), v))
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(bad)?;
    safetensors::serialize(views, Some(meta)).map_err(bad)
}

pub fn save_checkpoint(
    model: &KnowledgeModel,
    train_config: Option<&TrainConfig>,
    dev_metrics: Option<&EvalReport>,
    path: &Path,
) -> Result<()> {
    let bytes = checkpoint_bytes(model, train_config, dev_metrics)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(bad)?;
    let meta = header
        .metadata()
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no metadata".into()))?;
    let get = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint metadata lacks {k}")))
    };
    let version = get(KEY_VERSION)?;
    if version != SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint schema version {version}, this build reads {SCHEMA_VERSION}"
        )));
    }
    let config: ModelConfig = serde_json::from_str(get(KEY_MODEL)?).map_err(bad)?;
    let tokenizer = WordTokenizer::from_vocab_str(get(KEY_VOCAB)?)?;
    let train_config = meta
        .get(KEY_TRAIN)
        .map(|s| serde_json::from_str(s).map_err(bad))
        .transpose()?;
    let dev_metrics = meta
        .get(KEY_METRICS)
        .map(|s| serde_json::from_str(s).map_err(bad))
        .transpose()?;

    let st = SafeTensors::deserialize(bytes).map_err(bad)?;
    let mut tensors = HashMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 || view.shape().len() != 2 {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: expected 2-D F64, found {:?} {:?}",
                view.dtype(),
                view.shape()
            )));
        }
        let values: Vec<f64> = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let shape = (view.shape()[0], view.shape()[1]);
        tensors.insert(name, Array2::from_shape_vec(shape, values).map_err(bad)?);
    }
    let model = KnowledgeModel::from_tensors(config, tokenizer, tensors)?;
    Ok(Checkpoint {
        model,
        train_config,
        dev_metrics,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
