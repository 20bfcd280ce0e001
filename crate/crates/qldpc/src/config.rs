//! Experiment description shared by the `run` command and the individual
//! subcommands: every default is materialized and every seed explicit.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qldpc_core::bp::BpConfig;
use qldpc_core::codes::{bch_seed_codes, build_bicycle, build_hgp};
use qldpc_core::eval::{BpDecoder, BpOsdDecoder, Decoder, GnnDecoder, NbpDecoder};
use qldpc_core::osd::{OsdConfig, OsdStrategy};
use qldpc_core::CssCode;

use crate::checkpoint::{Checkpoint, ClipDoc, GnnHyperparamsDoc, NbpConfigDoc};
use crate::{bundle, FormatError};

pub const BICYCLE_N: usize = 256;
pub const BICYCLE_K: usize = 32;
pub const BICYCLE_ROW_WEIGHT: usize = 8;
pub const BICYCLE_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CodeSpec {
    /// Hypergraph product of the two built-in BCH seed codes.
    Hgp,
    Bicycle {
        n: usize,
        k: usize,
        row_weight: usize,
        seed: u64,
    },
    /// A saved code bundle.
    File { path: PathBuf },
}

impl CodeSpec {
    pub fn bicycle_default(seed: u64) -> Self {
        CodeSpec::Bicycle {
            n: BICYCLE_N,
            k: BICYCLE_K,
            row_weight: BICYCLE_ROW_WEIGHT,
            seed,
        }
    }

    pub fn build(&self) -> Result<CssCode, FormatError> {
        match self {
            CodeSpec::Hgp => {
                let (a, b) = bch_seed_codes();
                Ok(build_hgp(&a, &b)?)
            }
            &CodeSpec::Bicycle {
                n,
                k,
                row_weight,
                seed,
            } => Ok(build_bicycle(n, k, row_weight, seed)?),
            CodeSpec::File { path } => bundle::load(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BpSpec {
    pub max_iter: usize,
    pub llr_clamp: f64,
    pub early_stop: bool,
}

impl Default for BpSpec {
    fn default() -> Self {
        let c = BpConfig::default();
        Self {
            max_iter: c.max_iter,
            llr_clamp: c.llr_clamp,
            early_stop: c.early_stop,
        }
    }
}

impl From<BpSpec> for BpConfig {
    fn from(s: BpSpec) -> Self {
        BpConfig {
            max_iter: s.max_iter,
            llr_clamp: s.llr_clamp,
            early_stop: s.early_stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OsdStrategyName {
    /// Every flip pattern of weight up to the order.
    Exhaustive,
    /// Single flips plus pairs among the `order` least reliable free bits.
    CombinationSweep,
}

impl From<OsdStrategyName> for OsdStrategy {
    fn from(s: OsdStrategyName) -> Self {
        match s {
            OsdStrategyName::Exhaustive => OsdStrategy::Exhaustive,
            OsdStrategyName::CombinationSweep => OsdStrategy::CombinationSweep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecoderSpec {
    Bp {
        bp: BpSpec,
    },
    BpOsd {
        bp: BpSpec,
        order: usize,
        strategy: OsdStrategyName,
        candidate_limit: Option<usize>,
    },
    /// Neural BP; without `model`, one is trained from `dataset` and `training`.
    Nbp {
        model: Option<PathBuf>,
    },
    /// GNN; without `model`, one is trained from `dataset` and `training`.
    Gnn {
        model: Option<PathBuf>,
        batch: usize,
    },
}

impl DecoderSpec {
    pub fn label(&self) -> &'static str {
        match self {
            DecoderSpec::Bp { .. } => "bp",
            DecoderSpec::BpOsd { .. } => "bp-osd",
            DecoderSpec::Nbp { .. } => "nbp",
            DecoderSpec::Gnn { .. } => "gnn",
        }
    }

    pub fn model_path(&self) -> Option<&PathBuf> {
        match self {
            DecoderSpec::Nbp { model } | DecoderSpec::Gnn { model, .. } => model.as_ref(),
            _ => None,
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, DecoderSpec::Nbp { .. } | DecoderSpec::Gnn { .. })
    }

    /// Instantiates the decoder; learned kinds need `checkpoint`.
    pub fn instantiate(&self, code: &CssCode, checkpoint: Option<&Checkpoint>) -> Result<Box<dyn Decoder>, FormatError> {
        let need = || FormatError::invalid(format!("decoder {} needs a model checkpoint", self.label()));
        Ok(match self {
            DecoderSpec::Bp { bp } => Box::new(BpDecoder::new(code, (*bp).into())),
            DecoderSpec::BpOsd {
                bp,
                order,
                strategy,
                candidate_limit,
            } => Box::new(BpOsdDecoder::new(
                code,
                (*bp).into(),
                OsdConfig {
                    order: *order,
                    candidate_limit: *candidate_limit,
                    strategy: (*strategy).into(),
                },
            )),
            DecoderSpec::Nbp { .. } => {
                let model = checkpoint.ok_or_else(need)?.to_nbp(code)?;
                Box::new(NbpDecoder::new(code, model).map_err(|e| FormatError::invalid(e.to_string()))?)
            }
            DecoderSpec::Gnn { batch, .. } => {
                let model = checkpoint.ok_or_else(need)?.to_gnn(code)?;
                Box::new(GnnDecoder::new(code, model, *batch).map_err(|e| FormatError::invalid(e.to_string()))?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub p_f: f64,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbpTrainingSpec {
    pub model: NbpConfigDoc,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: ClipDoc,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum TrainingSpec {
    Gnn(GnnHyperparamsDoc),
    Nbp(NbpTrainingSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub trials: u64,
    pub seed: u64,
    /// Early stop per point at this many failures, checked per block.
    pub max_failures: Option<u64>,
    pub block: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub prefix: String,
}

impl OutputSpec {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.prefix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub p_f: Vec<f64>,
    pub decoder: DecoderSpec,
    pub dataset: Option<DatasetSpec>,
    pub training: Option<TrainingSpec>,
    pub sweep: SweepSpec,
    pub output: OutputSpec,
}

fn check_probability(what: &str, p: f64) -> Result<(), FormatError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(FormatError::invalid(format!("{what} = {p} must lie strictly between 0 and 1")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Static checks, including that every referenced input file exists.
    pub fn validate(&self) -> Result<(), FormatError> {
        if self.p_f.is_empty() {
            return Err(FormatError::invalid("p_f list is empty"));
        }
        for &p in &self.p_f {
            check_probability("p_f", p)?;
        }
        if self.sweep.trials == 0 {
            return Err(FormatError::invalid("sweep.trials must be at least 1"));
        }
        if self.sweep.workers == 0 {
            return Err(FormatError::invalid("sweep.workers must be at least 1"));
        }
        if let CodeSpec::File { path } = &self.code {
            if !path.is_file() {
                return Err(FormatError::invalid(format!("code file {} does not exist", path.display())));
            }
        }
        if let Some(path) = self.decoder.model_path() {
            if !path.is_file() {
                return Err(FormatError::invalid(format!("model file {} does not exist", path.display())));
            }
        }
        if self.decoder.is_learned() && self.decoder.model_path().is_none() {
            let (Some(ds), Some(training)) = (&self.dataset, &self.training) else {
                return Err(FormatError::invalid(format!(
                    "decoder {} without a model needs dataset and training sections",
                    self.decoder.label()
                )));
            };
            check_probability("dataset.p_f", ds.p_f)?;
            let matches = matches!(
                (&self.decoder, training),
                (DecoderSpec::Gnn { .. }, TrainingSpec::Gnn(_)) | (DecoderSpec::Nbp { .. }, TrainingSpec::Nbp(_))
            );
            if !matches {
                return Err(FormatError::invalid("training kind does not match the decoder"));
            }
        }
        if !self.output.dir.is_dir() {
            return Err(FormatError::invalid(format!(
                "output directory {} does not exist",
                self.output.dir.display()
            )));
        }
        Ok(())
    }
}
