pub mod baseline;
pub mod cli;
pub mod env;
pub mod flightdyn;
pub mod hpo;
pub mod nn;
pub mod plot;
pub mod reward;
pub mod sac;
pub mod scenario;
