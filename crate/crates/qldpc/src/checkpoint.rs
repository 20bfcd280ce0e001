//! Versioned JSON checkpoints. Each tensor is stored as its shape plus a
//! base64 string of little-endian `f64` values.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use qldpc_core::gnn::{GnnHyperparams, GnnModel};
use qldpc_core::nbp::{NbpConfig, NbpModel};
use qldpc_core::nn::{GradClip, ParameterStore, Tensor};
use qldpc_core::CssCode;

use crate::error::{read_to_string, write_atomic};
use crate::FormatError;

pub const CHECKPOINT_FORMAT: &str = "qldpc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ClipDoc {
    None,
    GlobalNorm(f64),
    Value(f64),
}

impl From<GradClip> for ClipDoc {
    fn from(c: GradClip) -> Self {
        match c {
            GradClip::None => ClipDoc::None,
            GradClip::GlobalNorm(v) => ClipDoc::GlobalNorm(v),
            GradClip::Value(v) => ClipDoc::Value(v),
        }
    }
}

impl From<ClipDoc> for GradClip {
    fn from(c: ClipDoc) -> Self {
        match c {
            ClipDoc::None => GradClip::None,
            ClipDoc::GlobalNorm(v) => GradClip::GlobalNorm(v),
            ClipDoc::Value(v) => GradClip::Value(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnHyperparamsDoc {
    pub layers: usize,
    pub embed: usize,
    pub message: usize,
    pub hidden: usize,
    pub untied: bool,
    pub simultaneous: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub clip: ClipDoc,
    pub epochs: usize,
    pub plateau_patience: Option<usize>,
    pub plateau_tol: f64,
    pub chunk: usize,
    pub seed: u64,
}

impl From<GnnHyperparams> for GnnHyperparamsDoc {
    fn from(h: GnnHyperparams) -> Self {
        Self {
            layers: h.layers,
            embed: h.embed,
            message: h.message,
            hidden: h.hidden,
            untied: h.untied,
            simultaneous: h.simultaneous,
            lr: h.lr,
            batch_size: h.batch_size,
            clip: h.clip.into(),
            epochs: h.epochs,
            plateau_patience: h.plateau_patience,
            plateau_tol: h.plateau_tol,
            chunk: h.chunk,
            seed: h.seed,
        }
    }
}

impl From<GnnHyperparamsDoc> for GnnHyperparams {
    fn from(h: GnnHyperparamsDoc) -> Self {
        Self {
            layers: h.layers,
            embed: h.embed,
            message: h.message,
            hidden: h.hidden,
            untied: h.untied,
            simultaneous: h.simultaneous,
            lr: h.lr,
            batch_size: h.batch_size,
            clip: h.clip.into(),
            epochs: h.epochs,
            plateau_patience: h.plateau_patience,
            plateau_tol: h.plateau_tol,
            chunk: h.chunk,
            seed: h.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbpConfigDoc {
    pub iterations: usize,
    pub tied: bool,
    pub llr_clamp: f64,
    pub early_stop: bool,
}

impl From<NbpConfig> for NbpConfigDoc {
    fn from(c: NbpConfig) -> Self {
        Self {
            iterations: c.iterations,
            tied: c.tied,
            llr_clamp: c.llr_clamp,
            early_stop: c.early_stop,
        }
    }
}

impl From<NbpConfigDoc> for NbpConfig {
    fn from(c: NbpConfigDoc) -> Self {
        Self {
            iterations: c.iterations,
            tied: c.tied,
            llr_clamp: c.llr_clamp,
            early_stop: c.early_stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    Gnn(GnnHyperparamsDoc),
    Nbp(NbpConfigDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDoc {
    pub name: String,
    pub shape: [usize; 2],
    pub data: String,
    /// Adam moments, present when the optimizer state was saved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_m: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam_v: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    /// Epochs completed over the model's lifetime, across resumes.
    pub epochs: usize,
    /// Optimizer steps taken; resumed runs continue from here.
    pub step: u64,
    pub final_loss: Option<f64>,
    pub wall_seconds: f64,
    pub dataset_size: usize,
    pub dataset_p_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub code_name: String,
    pub code_hash: String,
    pub model: ModelSpec,
    pub training: TrainingMeta,
    pub parameters: Vec<TensorDoc>,
}

pub fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64(text: &str, expected: usize) -> Result<Vec<f64>, FormatError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| FormatError::invalid(format!("bad base64 payload: {e}")))?;
    if bytes.len() != 8 * expected {
        return Err(FormatError::invalid(format!(
            "payload holds {} bytes, expected {}",
            bytes.len(),
            8 * expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect())
}

fn store_to_docs(store: &ParameterStore, with_optimizer: bool) -> Vec<TensorDoc> {
    store
        .iter()
        .map(|(_, p)| TensorDoc {
            name: p.name.clone(),
            shape: [p.value.rows(), p.value.cols()],
            data: encode_f64(p.value.data()),
            adam_m: with_optimizer.then(|| encode_f64(p.m.data())),
            adam_v: with_optimizer.then(|| encode_f64(p.v.data())),
        })
        .collect()
}

fn docs_to_store(docs: &[TensorDoc], step: u64) -> Result<ParameterStore, FormatError> {
    let mut store = ParameterStore::new();
    for d in docs {
        if store.id(&d.name).is_some() {
            return Err(FormatError::invalid(format!("duplicate parameter {:?}", d.name)));
        }
        let [r, c] = d.shape;
        let tensor = |text: &str| decode_f64(text, r * c).map(|v| Tensor::from_vec(r, c, v));
        let id = store.add(d.name.clone(), tensor(&d.data)?);
        let p = store.get_mut(id);
        if let Some(m) = &d.adam_m {
            p.m = tensor(m)?;
        }
        if let Some(v) = &d.adam_v {
            p.v = tensor(v)?;
        }
    }
    store.set_step(step);
    Ok(store)
}

impl Checkpoint {
    fn new(code: &CssCode, model: ModelSpec, store: &ParameterStore, training: TrainingMeta, with_optimizer: bool) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            code_name: code.name.clone(),
            code_hash: format!("{:016x}", code.fingerprint()),
            model,
            training: TrainingMeta {
                step: store.step(),
                ..training
            },
            parameters: store_to_docs(store, with_optimizer),
        }
    }

    pub fn from_gnn(code: &CssCode, model: &GnnModel, training: TrainingMeta, with_optimizer: bool) -> Self {
        Self::new(code, ModelSpec::Gnn(model.hp.into()), &model.store, training, with_optimizer)
    }

    pub fn from_nbp(code: &CssCode, model: &NbpModel, training: TrainingMeta, with_optimizer: bool) -> Self {
        Self::new(code, ModelSpec::Nbp(model.config.into()), &model.store, training, with_optimizer)
    }

    fn check(&self, code: &CssCode) -> Result<(), FormatError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(FormatError::invalid(format!(
                "not a checkpoint (format {:?} version {})",
                self.format, self.version
            )));
        }
        let hash = format!("{:016x}", code.fingerprint());
        if self.code_hash != hash {
            return Err(FormatError::invalid(format!(
                "checkpoint was trained for code {} ({}), not {} ({hash})",
                self.code_name, self.code_hash, code.name
            )));
        }
        Ok(())
    }

    pub fn to_gnn(&self, code: &CssCode) -> Result<GnnModel, FormatError> {
        self.check(code)?;
        let ModelSpec::Gnn(hp) = self.model else {
            return Err(FormatError::invalid("checkpoint holds an NBP model, not a GNN"));
        };
        let store = docs_to_store(&self.parameters, self.training.step)?;
        Ok(GnnModel::from_store(2 * code.n, code.m(), hp.into(), store)?)
    }

    pub fn to_nbp(&self, code: &CssCode) -> Result<NbpModel, FormatError> {
        self.check(code)?;
        let ModelSpec::Nbp(cfg) = self.model else {
            return Err(FormatError::invalid("checkpoint holds a GNN model, not an NBP"));
        };
        let store = docs_to_store(&self.parameters, self.training.step)?;
        Ok(NbpModel::from_store(&code.tanner_graph(), cfg.into(), store)?)
    }

    pub fn to_json(&self) -> Result<String, FormatError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), FormatError> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FormatError> {
        Self::from_json(&read_to_string(path)?)
    }
}
