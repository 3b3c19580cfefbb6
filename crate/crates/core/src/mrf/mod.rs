//! Exact inference and learning on small discrete MRFs with `[0, 1]` edge
//! weights: brute-force oracles, max-product belief propagation, and EM with
//! a MAP plug-in E-step.

mod bp;
mod bruteforce;
mod em;
pub mod io;
mod model;
pub mod random;

pub use bp::{max_product_bp, BpConfig, BpResult, MessageSet};
pub use bruteforce::{
    expected_potentials, for_each_assignment, joint_prob_bruteforce, log_likelihood, log_partition,
    map_bruteforce, sample_bruteforce, JointTable, PotentialExpectations, ENUMERATION_LIMIT,
};
pub use em::{
    em_fit, fit_weights, mean_log_likelihood, mstep_weights, EmConfig, EmFit, MStepConfig,
    WeightFit,
};
pub use model::{Assignment, DiscreteMrf, PairwisePotential, MAX_CARDINALITY};

#[cfg(test)]
mod tests;
