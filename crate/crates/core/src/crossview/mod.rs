//! Cross-view alignment: MixModule aggregation, symmetric InfoNCE,
//! cosine retrieval and rotational heading refinement.

mod embedding;
mod heading;
mod infonce;
mod mix;
mod retrieval;
mod train;

pub use embedding::{cosine, dot, norm, Embedding, UNIT_TOLERANCE};
pub use heading::{refine_heading, ring_correlation, rotate, wrap_angle, Pose, DEFAULT_RING_BINS};
pub use infonce::{
    info_nce, info_nce_grad, info_nce_grad_with, info_nce_loss, info_nce_loss_with, AlignBatch, AlignGrad,
    Denominator, DEFAULT_TEMPERATURE,
};
pub use mix::{mix_backward, mix_forward, mix_forward_traced, MixConfig, MixModuleParams, MixStage, MixTrace};
pub use retrieval::{rank_of, retrieve, IndexEntry, Ranking, RetrievalIndex};
pub use train::{
    build_index, evaluate_recall, init_model, sgd_step, synthetic_views, train_alignment, AlignConfig, AlignModel,
    AlignReport, RecallReport, SyntheticViewConfig, ViewPair,
};

pub const ALIGN_CHECKPOINT_KIND: &str = "align-model";
