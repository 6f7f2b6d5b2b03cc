pub mod cli;
pub mod data;
pub mod error;
pub mod fairness;
pub mod impute;
pub mod models;
pub mod runner;
pub mod scenario;
pub mod seeding;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
