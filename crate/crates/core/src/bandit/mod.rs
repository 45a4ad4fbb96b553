//! The LinUCB loop with CMM, AMM and OFUL policies, synthetic environments,
//! regret accounting and regret-bound evaluators.

mod bounds;
mod env;
mod run;

pub use bounds::{
    bound_holds, eval_bound_data_dependent, eval_bound_data_independent, eval_bound_general,
    replay_bound_data_dependent, GeneralBoundParams, StandardBoundParams,
};
pub use env::{
    sample_theta_star, ActionSource, Blackbox, Environment, Noise, Pull, RoundOptimum, SyntheticLinear, SyntheticSetup,
};
pub use run::{
    coverage_fraction, run_batch, run_linucb, BanditRun, Policy, RadiusTracker, RoundRecord, RunConfig,
    DENSE_ROUND_LIMIT,
};
