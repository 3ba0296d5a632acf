//! Scenario runner and game driver for the aacgka protocol.

pub mod generate;
pub mod runner;
pub mod scenario;

pub use generate::random_scenario;
pub use runner::{run_scenario, run_scenario_with, Runner};
pub use scenario::{parse_scenario, ParseError, ScenarioScript};
