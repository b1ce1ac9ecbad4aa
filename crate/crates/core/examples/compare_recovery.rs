//! Flies a trained policy and the PID baseline from both named upsets and
//! writes the aligned CSV, the SVG panels and the recovery-time table.
//!
//! cargo run --release --example compare_recovery -- <policy.json> [out_dir]

use pars::cli::{cmd_compare, CompareArgs};
use pars::scenario::Scenario;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let checkpoint: PathBuf = args.next().ok_or("usage: compare_recovery <policy.json> [out_dir]")?.into();
    let out: PathBuf = args.next().unwrap_or_else(|| "runs/compare".into()).into();
    for scenario in [Scenario::Case1, Scenario::Case2] {
        let report = cmd_compare(&CompareArgs {
            checkpoint: checkpoint.clone(),
            scenario,
            gains: None,
            seed: 0,
            preset: 4,
            duration: 30.0,
            out: out.join(scenario.to_string()),
        })?;
        println!("{scenario}:");
        for row in &report.table {
            let t = row.recovery_s.map_or("not recovered".into(), |t| format!("{t:.1} s"));
            println!("  {:<6} {:<4} {t}", row.channel, row.controller);
        }
        println!("  min n_z: rl {:.2} g, pid {:.2} g", report.rl.min_nz_g, report.pid.min_nz_g);
        println!("  plot {}", report.svg.display());
    }
    Ok(())
}
