//! Runs a shipped preset with fewer trials and prints the CSV. Pass a
//! preset name or config path as the first argument.

use std::io;

use simest::harness::{write_rows, Scenario, ScenarioConfig};

fn main() -> simest::Result<()> {
    let source = std::env::args().nth(1).unwrap_or_else(|| "fig2c_m10_n100".into());
    let mut config = ScenarioConfig::resolve(&source)?;
    config.sweep.trials = 200;
    let scenario = Scenario::build(&config)?;
    eprintln!(
        "{}: {} atoms, {} users, {} blocks of {} slots",
        config.name,
        scenario.geometry.atoms_per_layer,
        scenario.users.len(),
        scenario.blocks,
        scenario.tau_p()
    );
    write_rows(&scenario.sweep()?, io::stdout().lock())
}
