//! Strategic-server M/M/N queues.
//!
//! Servers pick their own service rates to trade idle time against effort
//! cost. This crate computes the resulting symmetric equilibria, the staffing
//! levels that account for them, how routing policies change the picture,
//! and the price of anarchy. Exact CTMC solves and a discrete-event simulator
//! serve as oracles for the closed forms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod ctmc;
pub mod equilibrium;
pub mod error;
pub mod idle;
pub mod numeric;
pub mod params;
pub mod poa;
pub mod policy;
pub mod routing;
pub mod sim;
pub mod special;
pub mod staffing;

pub use cost::{validate_cost, CostFunction, CostSpec, CostValidation, EffortCost};
pub use error::{Error, Result};
pub use params::{EconomicParams, ModelConfig, SystemConfig, TaggedProfile};
pub use policy::{IdleOrderPolicy, Routing};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
