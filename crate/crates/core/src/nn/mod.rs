//! Small reverse-mode autodiff engine and the layers the learned decoders use.

mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;
mod train;

pub use gradcheck::{gradient_check, GradCheck};
pub use layers::{attention_aggregate, attention_single, gru_cell, message_attention, mlp2, Attention, AttentionVars, EdgeMlp, EdgeMlpVars, Gru, GruVars, Mlp2, Mlp2Vars};
pub use params::{AdamConfig, Param, ParamId, ParameterStore};
pub use tape::{Index, Tape, Var, BCE_EPS};
pub use tensor::Tensor;
pub use train::{fit, EpochReport, FitConfig, GradClip, Trainable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("loss must be a 1x1 tensor, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,
    #[error("{op}: index out of range (bound {bound})")]
    IndexOutOfRange { op: &'static str, bound: usize },
    #[error("unknown parameter {0}")]
    UnknownParameter(alloc::string::String),
}
