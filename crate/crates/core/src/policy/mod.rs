//! Conditional next-state policy, rollouts and VPFT initialization.

mod guidance;
mod params;
mod rollout;
mod vpft;

pub use guidance::Guidance;
pub use params::{
    log_softmax, policy_backward, policy_forward, policy_forward_traced, softmax, PolicyParams, PolicyTrace, ACTIONS,
    DEFAULT_HIDDEN, DEFAULT_HISTORY,
};
pub use rollout::{choose_action, history_indices, sample_rollout, Rollout, RolloutStep, Sampling};
pub use vpft::{plausible_set, vpft_build, vpft_loss, vpft_train, VpftConfig, VpftCorpus, VpftSample, DEFAULT_K};

pub const POLICY_CHECKPOINT_KIND: &str = "policy";
