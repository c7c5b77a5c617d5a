//! A small differentiable policy and the DPO-family losses trained on it.
//!
//! The policy scores an answer `y` given a context (video tokens followed by
//! question tokens): the context and the answer prefix are each mean-pooled,
//! pass through one `tanh` layer, and a softmax predicts the next token. Losses
//! compare the trainable `theta` against a frozen reference copy:
//!
//! - `dpo_m`: chosen vs rejected answer, same video and question.
//! - `dpo_v`: chosen answer under the original vs the rejected video.
//! - `dpo_t`: chosen answer under the question with vs without the appended
//!   perturbation clause (the perturbed side is preferred unless flipped).
//!
//! Gradients are computed by a hand-written reverse pass in [`policy`].

mod checkpoint;
mod data;
mod loss;
pub mod policy;
mod train;
mod vocab;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, BlockEntry,
    Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use data::{build_vocab, encode_tuple, encode_tuples, synthetic_tuples, SyntheticSplit};
pub use loss::{
    backward, dpo_term, evaluate, loss_dpo_m, loss_dpo_t, loss_dpo_v, loss_pano, mean_gap,
    sigmoid, softplus, Evaluation, LossBreakdown, LossKind, PanoExample,
};
pub use policy::{log_prob, log_prob_backward, Block, Dims, PolicyPair, ToyPolicyParams};
pub use train::{
    init_pair, train, train_epochs, write_history_csv, EpochRecord, Schedule, TrainConfig,
    TrainOutcome,
};
pub use vocab::{tokenize_text, Vocab, BOS, EOS, PAD, SPECIALS, UNK};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("token not in vocabulary: {token}")]
    OutOfVocab { token: String },
    #[error("{0} sequence is empty")]
    EmptySequence(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite value in {term}")]
    NonFinite { term: String },
    #[error("non-finite gradient in parameter block {block}")]
    NonFiniteGradient { block: &'static str },
    #[error("training diverged at step {step}: non-finite {term}")]
    Diverged { step: usize, term: String },
    #[error("parameter shape: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
