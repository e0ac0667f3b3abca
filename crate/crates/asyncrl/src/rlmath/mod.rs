//! Numerical kernel: masked importance-sampling loss, group-mean
//! advantages, toy-policy log-probabilities, and the Newton-Schulz
//! matrix optimizer. Everything here is a pure function in f64.

mod loss;
mod muon;
mod policy;

pub use loss::{
    batch_train_logprobs, compute_advantages, icepop_gradient, icepop_loss, mask_ratio,
    rollout_ratio_guard, GuardDecision, LossReport, MathError,
};
pub use muon::{muon_step, newton_schulz_orthogonalize, MuonState};
pub use policy::{
    log_softmax, logprob_gradient, policy_logprobs, prompt_features, sample_token, token_distribution,
    FeatureSource,
};
