//! UAV data collection under jamming: radio model, world simulation, agents and a
//! small value-based RL stack.
//!
//! Geometry, radio and the learner are generic over [`scalar::Real`]; the simulation
//! layer runs in `f64` and the policy networks in `f32`. The aliases below name the
//! concrete instantiations used throughout.

pub mod agent;
pub mod config;
pub mod env;
pub mod error;
pub mod features;
pub mod geom;
pub mod jammers;
pub mod learner;
pub mod orca;
pub mod radio;
pub mod scalar;
pub mod stats;
pub mod world;

pub use error::{Error, Result};

pub type Vec2 = geom::Vec2<f64>;
pub type Rect = geom::Rect<f64>;
pub type RadioParams = radio::RadioParams<f64>;
pub type RegionGrid = radio::RegionGrid<f64>;
/// Policy network precision.
pub type QNet = learner::DuelingNet<f32>;
