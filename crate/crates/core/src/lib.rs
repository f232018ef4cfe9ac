//! Bayesian network structure learning by compiling BDeu-scored parent-set
//! choices into weighted MAX-SAT and solving with a MaxWalkSat-style local
//! search.
//!
//! The pipeline runs in stages, each with a persisted text artifact:
//!
//! 1. [`bif`]: parse a network, forward-sample a [`Dataset`].
//! 2. [`scoring`]: exact log BDeu family scores for every parent set up to a cap.
//! 3. [`pruning`]: drop parent sets dominated by a better-scoring subset.
//! 4. [`encoder`]: weighted CNF under the ancestor or total-order encoding.
//! 5. [`solver`]: stochastic local search over the weighted CNF.
//! 6. [`decoder`]: map the best assignment back to a DAG and score it exactly.
//! 7. [`bma`]: model averaging over the feasible structures visited in search.

pub mod bif;
pub mod bma;
pub mod dataset;
pub mod decoder;
pub mod digest;
pub mod encoder;
pub mod pruning;
pub mod scoring;
pub mod solver;
mod varset;

pub use bif::{BayesNet, VariableDecl};
pub use bma::{PosteriorEstimate, SearchRecord};
pub use dataset::{ContingencyTable, Dataset};
pub use decoder::LearnedStructure;
pub use encoder::{AtomMap, CycleMode, EncodingMode, Wcnf};
pub use pruning::PrunedScoreTable;
pub use scoring::ScoreTable;
pub use solver::{Assignment, SolverConfig, SolverStats};
pub use varset::ParentSet;
