//! Prototypical-network few-shot learner: embedding network, episode sampler,
//! training loop and evaluator.

mod episode;
mod eval;
mod images;
mod net;
mod proto;
pub mod tensor;
mod train;

use thiserror::Error;

pub use episode::{sample_episode, Episode, EpisodeSpec, QuerySplit};
pub use eval::{evaluate, evaluate_embeddings, EpisodeRecord};
pub use images::{image_to_input, input_size_for, ImageSet, CHANNELS};
pub use net::{Architecture, EmbeddingNet, ForwardPass, ParamGroup};
pub use proto::{
    classify_query, compute_prototypes, predict, prototypical_loss, squared_distances, LossOutput,
};
pub use train::{
    train, Adam, ModelArtifact, Precision, ProtoClassifier, TrainConfig, TrainOutcome,
    ARTIFACT_VERSION,
};

#[derive(Debug, Error)]
pub enum FewShotError {
    #[error("expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("class {class} has no support embeddings")]
    EmptyClass { class: usize },
    #[error("class {class} has {have} members, episode needs {need}")]
    InsufficientClassMembers {
        class: usize,
        have: usize,
        need: usize,
    },
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("training diverged at episode {episode}: loss {loss}")]
    Diverged { episode: usize, loss: f64 },
    #[error("non-finite value in loss computation")]
    NumericalOverflow,
    #[error("image {id}: {message}")]
    Image { id: String, message: String },
    #[error("model artifact: {0}")]
    Artifact(String),
}
