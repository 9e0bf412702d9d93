//! Geo-consistent visual planning at desk scale.
//!
//! Pipeline pieces, leaf to root: [`canvas`] turns an aligned raster into a
//! topological road graph, [`crossview`] aligns ground and satellite
//! embeddings, [`planner`] runs curvature-aware A* over the graph, [`nav`]
//! provides gridworld environments, [`policy`], [`reward`] and [`grpo`]
//! train the conditional next-state policy, and [`metrics`] scores the lot.

pub mod canvas;
pub mod checkpoint;
pub mod crossview;
pub mod error;
pub mod grpo;
pub mod metrics;
pub mod nav;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
