//! Long-horizon planning over polytopic sets of feasible trajectory
//! parameters.

pub mod basis;
pub mod decomposition;
pub mod error;
pub mod lp;
pub mod mode_graph;
pub mod pendulum;
pub mod planner;
pub mod polytope;
pub mod rng;

pub use error::{Error, Result};
