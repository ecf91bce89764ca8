//! Round-based simulator for three multi-level clustering protocols for
//! wireless sensor networks: EEMC, LAMC and PAMC.
//!
//! A run deploys nodes uniformly over a field, then repeats rounds of
//! cluster setup followed by data gathering until half of the nodes have
//! exhausted their batteries. Every radio transmission is recorded in a
//! [`ledger::MessageLedger`], so energy use and control overhead can be
//! audited message by message.

pub mod config;
pub mod election;
pub mod experiment;
pub mod harness;
pub mod ledger;
pub mod model;
pub mod power;
pub mod protocol;

pub use config::{parse_config, SimConfig};
pub use harness::{run_lifetime, run_round, LifetimeResult, RoundReport};
pub use model::{Endpoint, EnergyModel, Field, Node, NodeId, Point, Role, World};
pub use protocol::{operate, setup, Protocol, ProtocolParams, Topology};
