//! Edge-aware attributed multiplex embedding of flow units.

mod coldstart;
mod eval;
mod linalg;
mod loss;
mod negatives;
mod params;
mod table;
mod train;
mod walks;

pub use coldstart::estimate_cold_start;
pub use eval::{
    average_precision, f1_at_median, link_prediction_eval, metrics, roc_auc, split_edges, Ablation, EdgeSplit,
    LinkMetrics, LinkReport, LinkSet,
};
pub use linalg::cosine;
pub use loss::{loss_and_grad, loss_registry, LogSigmoidLoss, MarginLoss, PairLoss, TrainingPairSets};
pub use negatives::{
    edge_pairs, sample_negatives, sampler_registry, NegativeSample, NegativeSampler, RegionalSampler,
    UniformSampler,
};
pub use params::{forward, Dims, ModelParams, NodeCache, Propagated, TypedCache};
pub use table::{EmbeddingEntry, EmbeddingTable, Provenance, FORMAT_VERSION, MAGIC};
pub use train::{
    build_pair_sets, embed_all, table_from_params, train, train_outcome, train_with_validation, validation_auc, EatneConfig,
    EpochRecord, TrainOutcome,
};
pub use walks::{extract_positive_pairs, generate_walks, PairSet};
