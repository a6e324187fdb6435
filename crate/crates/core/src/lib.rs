//! Pedestrian traffic assignment with bidirectional link interaction.
//!
//! The crate models walking networks in which the two directions of every
//! footpath share one physical space: opposing flow slows you down, and in
//! the asymmetric model it does so differently than same-direction flow.
//! On top of that it provides:
//!
//! * [`pvdf`]: deterministic and stochastic pedestrian volume-delay
//!   functions with calibrated street defaults.
//! * [`assign`]: a user-equilibrium solver (method of successive averages)
//!   over [`network`] graphs, deterministic or one-draw-per-stream
//!   stochastic.
//! * [`calibrate`]: fits the speed law, the pVDF families, and the spread
//!   model to density/speed/travel-time observations.
//! * [`netgen`]: generates footpath networks (sidewalks, crossings, blocks,
//!   centroids, connectors) from street centerlines.
//! * [`io`]: CSV/GeoJSON/TOML readers and writers for all of the above.
//!
//! ```
//! use walkflow::{assign, fixtures, network, pvdf};
//!
//! let (nodes, links) = fixtures::toy_nodes_links();
//! let demand = fixtures::toy_demand_case1();
//! let net = network::build_network(nodes, links, &demand)
//!     .unwrap()
//!     .with_flow_scale(fixtures::TOY_FLOW_SCALE)
//!     .unwrap();
//! let result = assign::solve(
//!     &net,
//!     &demand,
//!     &pvdf::PvdfConfig::default(),
//!     &assign::SolverConfig::default(),
//! )
//! .unwrap();
//! assert!(result.converged);
//! ```

// Validation guards negate the required property (`!(x > 0.0)`) so that NaN
// fails them; the positive comparison this lint suggests would let it pass.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod calibrate;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod netgen;
pub mod network;
pub mod pvdf;

mod geom;
mod optim;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
