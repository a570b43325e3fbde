//! Case persistence, the scoring service, the case generator and config files.

pub mod config;
pub mod generate;
pub mod numbers;
pub mod service;
pub mod store;

pub use config::Config;
pub use generate::{default_suite, generate_cases, GenerateSpec};
pub use service::Engine;
pub use store::{load_cases, read_cases, save_cases, write_cases, CaseStore, LoadReport, SkippedLine};
