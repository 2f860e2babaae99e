//! Trip-based agent simulation of a respiratory epidemic.
//!
//! Agents move between locations along weekly trip chains and infect each
//! other through viral shedding aggregated per location. All randomness
//! comes from counter-based streams keyed by agent id, so a run is
//! bit-identical for any number of worker threads.
//!
//! The model is generic over the floating point type; the aliases at the
//! crate root fix it to `f64`, with `*F32` variants for `f32`.

pub mod analysis;
pub mod calibrate;
pub mod engine;
pub mod error;
pub mod infection;
pub mod interventions;
pub mod mobility;
pub mod num;
pub mod rng;
pub mod scenario;
pub mod schedule;
pub mod time;
pub mod transmission;
pub mod world;

pub use error::{Error, Result};
pub use num::Scalar;
pub use time::{SimTime, TimeSpan};

pub type World = world::World<f64>;
pub type WorldF32 = world::World<f32>;
pub type Agent = world::Agent<f64>;
pub type Infection = infection::Infection<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type ScenarioF32 = scenario::Scenario<f32>;
pub type ParameterSet = scenario::ParameterSet<f64>;
pub type ParameterSetF32 = scenario::ParameterSet<f32>;
pub type RunOutput = engine::RunOutput<f64>;
pub type RunOutputF32 = engine::RunOutput<f32>;
