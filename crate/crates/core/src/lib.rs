//! Certified upper and lower bounds on the value function of linear
//! time-varying two-player zero-sum differential games with zonotopic
//! control sets, plus reachability queries built on the bounds.

pub mod bounds;
pub mod bundle_io;
pub mod characteristics;
pub mod cli;
pub mod config;
pub mod cost;
pub mod error;
pub mod exprs;
pub mod geometry;
pub mod ltv;
pub mod oracle;
pub mod presets;
pub mod table;
pub mod reachability;
pub mod zonotope;

pub use bounds::{bound_interval, grid_eval, lower_bound, upper_bound, AxisSpec, BoundInterval, GridSpec};
pub use characteristics::{precompute, CharacteristicBundle, TimeGrid};
pub use config::RunConfig;
pub use cost::ConvexCost;
pub use error::{Error, Result};
pub use ltv::LtvSystem;
pub use reachability::{classify, classify_grid, ReachLabel};
pub use zonotope::Zonotope;
