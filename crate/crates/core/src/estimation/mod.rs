//! h-MLLE by minorize-maximize and the greedy approximation sequence.

mod beta_mle;
mod greedy;
mod mm;

pub use beta_mle::{maximize_weighted_beta, BetaMleOutcome, NewtonStatus, WeightedBetaStats};
pub use greedy::{greedy_fit, greedy_gap_bound, GreedyGrid, GreedyStep, PointObjective};
pub use mm::{
    minorizer_value, mm_fit, mm_from, responsibilities, update_component, update_weights,
    ComponentUpdate, FitResult, MMConfig, Responsibilities,
};
