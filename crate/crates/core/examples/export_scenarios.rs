//! Writes the bundled reproduction scenarios as TOML files.
//!
//! Usage: `cargo run -p fluidnav-core --example export_scenarios -- <dir>`

use std::path::PathBuf;

use fluidnav::io::write_scenario;
use fluidnav::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "scenarios".into()),
    );
    std::fs::create_dir_all(&dir)?;
    let specs = [
        (
            "sncf.toml",
            scenarios::sncf_six_agents(scenarios::SNCF_SPACING),
        ),
        ("tvnc.toml", scenarios::tvnc_six_agents()),
        ("tvc.toml", scenarios::tvc_six_agents()),
    ];
    for (name, spec) in specs {
        write_scenario(&spec, dir.join(name))?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
