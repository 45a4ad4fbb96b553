//! Mixture-martingale confidence sets and UCB bandits.
//!
//! The crate builds confidence sets for the parameter of a linear reward
//! model from Gaussian-mixture martingales, computes upper confidence bounds
//! over those sets (exactly via a one-dimensional dual, or in closed form for
//! a fixed regularizer), and runs LinUCB-style bandit loops on top of them.

pub mod bandit;
pub mod confidence;
pub mod error;
pub mod features;
pub mod linalg;
pub mod mixtures;
pub mod oracle;
pub mod rng;
pub mod studies;
pub mod ucb;

pub use bandit::{
    run_batch, run_linucb, ActionSource, BanditRun, Environment, Noise, Policy, RoundRecord, RunConfig, SyntheticLinear,
    SyntheticSetup,
};
pub use confidence::{
    radius_amm, radius_amm_sq, radius_mm_naive, radius_oful, radius_special, radius_special_sq,
    ConfidenceParams, ConfidenceSet, DenseRadius, EfficientRadius, GramState,
};
pub use error::{Error, Result};
pub use features::{feature_norm_bound, ActionSet, FeatureMap};
pub use mixtures::{mixture_dense, KernelFunction, MeanFunction, MixtureFamily, MixtureSpec, MixtureState};
pub use rng::SeededRng;
pub use ucb::{
    analytic_lcb, analytic_ucb, argmax_action, argmax_action_with_gradient, exact_lcb, exact_ucb, AnalyticBound,
    Argmax, DualProfile, DualSearchConfig, DualSolution, SearchOptions, UcbQuery,
};
