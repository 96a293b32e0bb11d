pub mod config;
pub mod disturbances;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod measurement;
pub mod nn;
pub mod ppo;
pub mod reference;
pub mod trim;
