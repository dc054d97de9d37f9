//! N-pair metric learning over a trainable embedding table with NT-Xent
//! loss, and top-k retrieval evaluation.

mod batch;
mod eval;
mod loss;
pub mod synthetic;
mod table;
mod train;

pub use batch::{sample_npair_batch, NPairBatch, SamplingWeights};
pub use eval::{
    evaluate_topk, self_retrieval_topk, ExactGallery, Gallery, IndexGallery, TopKReport, TopKResult, DEFAULT_KS,
};
pub use loss::{nt_xent_gradient, nt_xent_loss, nt_xent_loss_and_gradient};
pub use table::{parse_labels, read_labels, EmbeddingTable, LabelSet, DEFAULT_SOURCE};
pub use train::{epoch_batches, train, TrainConfig, TrainOutcome};
