//! Prints the reward of each preset for a few attitudes, with the
//! per-component breakdown, and writes one preset to JSON.
//!
//! cargo run --release --example reward_presets -- [preset.json]

use pars::flightdyn::ControlCommand;
use pars::reward::{preset, total_reward, DEFAULT_CONTROL_DT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let states = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (-100.0, 45.0), (-30.0, 60.0)];
    let hold = ControlCommand::NEUTRAL;
    for id in 1..=4u8 {
        let spec = preset(id)?;
        println!("preset {id}");
        for (phi, gamma) in states {
            let r = total_reward(&spec, f64::to_radians(phi), f64::to_radians(gamma), hold, hold, DEFAULT_CONTROL_DT);
            let terms: Vec<String> = r
                .terms
                .iter()
                .map(|t| format!("{} {:.3}", t.source.name(), t.contribution))
                .collect();
            println!("  phi {phi:>6.1} gamma {gamma:>5.1}: {:.4}  [{}]", r.total, terms.join(", "));
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, serde_json::to_string_pretty(&preset(4)?)?)?;
        println!("wrote preset 4 to {path}");
    }
    Ok(())
}
