//! Adaptive-depth graph neural networks for weighted-graph classification.
//!
//! A DDQN meta-policy looks at each instance's built adjacency and decides
//! how many feature-aggregation layers a parameter-shared GNN should apply
//! to it. The crate covers the whole pipeline: dense differentiable
//! numerics, KNN graph building, GCN/GAT models with truncated-depth
//! forwards, the DDQN policy machinery, the co-training MDP, and an
//! experiment harness with baselines, sweeps, and a CLI.

pub mod checkpoint;
pub mod error;
pub mod experiments;
pub mod gnn;
pub mod mdp;
pub mod netbuild;
pub mod numerics;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
