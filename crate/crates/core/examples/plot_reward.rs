//! Draws the asymptotic reward shaping curve for several scales as SVG.
//!
//! cargo run --release --example plot_reward -- [out_dir]

use pars::cli::cmd_plot_reward;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "runs/plot_reward".into()).into();
    let path = cmd_plot_reward(&[0.05, 0.157, 0.5, 1.0], &out)?;
    println!("wrote {}", path.display());
    Ok(())
}
