//! Deterministic discrete-event simulation of a reserved path: border
//! routers on a line of ASes, strict-priority links and adversaries.

pub mod config;
pub mod report;
mod sim;

pub use config::{AdversaryConfig, ConfigError, FlowConfig, PathConfig, Requirement, Scenario};
pub use report::{assert_requirement, requirements_csv, FlowReport, Report};
pub use sim::run_scenario;

/// Runs a scenario and checks every requirement it lists.
pub fn run_and_check(
    sc: &Scenario,
) -> Result<(Report, Vec<(Requirement, Result<(), String>)>), ConfigError> {
    let report = run_scenario(sc, None)?;
    let results = sc
        .assert
        .iter()
        .map(|&r| (r, assert_requirement(&report, r)))
        .collect();
    Ok((report, results))
}
