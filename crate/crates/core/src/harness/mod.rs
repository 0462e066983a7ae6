//! Scenarios, primary scheduling, studies and file formats.

pub mod config;
pub mod export;
pub mod five_g;
pub mod mu;
pub mod pipeline;
pub mod primary;
pub mod scenario;
pub mod study;

pub use config::ScenarioConfig;
pub use mu::choose_mu_patterns;
pub use pipeline::{augment_primary, run_pipeline, Pipeline};
pub use primary::{schedule_primary, schedule_primary_guarded};
pub use scenario::{generate_scenario, Scenario};
