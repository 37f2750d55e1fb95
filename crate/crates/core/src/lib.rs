//! Single-node injection attacks on graph-neural-network node classifiers.
//!
//! The crate trains small GNN classifiers (GCN, SGC, a linearized
//! surrogate, plus optional TAGCN/GCNII variants) on citation graphs, then
//! attacks them by injecting one node wired to a chosen target and picking
//! its discrete bag-of-words features. Attackers range from statistical
//! baselines through gradient greedy search to a PPO agent that learns a
//! generalizable policy over (target, label) goals from black-box victim
//! queries alone.
//!
//! Modules follow the pipeline: [`graph`] stores datasets, [`tensor`] is a
//! small f64 autodiff engine, [`victim`] trains and serves classifiers,
//! [`env`] is the episodic attack environment, [`ppo`] the agent,
//! [`baselines`] the comparison attackers, and [`harness`] the experiment
//! orchestration behind the `snia` CLI.

pub mod baselines;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod ppo;
pub mod seeding;
pub mod tensor;
pub mod testkit;
pub mod victim;

pub use error::{Result, SniaError};
