//! Trims the jet trainer at 150 m/s, then flies a 1 s aileron doublet and a
//! 1 s elevator pulse and prints the response every half second.
//!
//! cargo run --release --example flight_dynamics

use pars::flightdyn::{flight_path_angle, load_factor, AeroModel, ControlCommand, FlightModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let aero = AeroModel::jet_trainer();
    let trim = FlightModel::trim(&aero, 150.0, 4000.0)?;
    let model = trim.model(&aero);
    println!(
        "trim: alpha {:.2} deg, elevator {:.3}, thrust {:.0} N",
        trim.state.alpha().to_degrees(),
        trim.command.elevator,
        trim.thrust
    );

    let dt = 0.02;
    let mut state = trim.state;
    println!("{:>5} {:>8} {:>8} {:>8} {:>7} {:>7}", "t", "phi", "theta", "gamma", "n_z", "V");
    for i in 0..500 {
        let t = i as f64 * dt;
        let aileron = match t {
            t if (1.0..1.5).contains(&t) => 0.3,
            t if (1.5..2.0).contains(&t) => -0.3,
            _ => 0.0,
        };
        let pulse = if (4.0..5.0).contains(&t) { -0.1 } else { 0.0 };
        let cmd = ControlCommand::new(aileron, trim.command.elevator + pulse);
        if i % 25 == 0 {
            println!(
                "{t:>5.1} {:>8.2} {:>8.2} {:>8.2} {:>7.2} {:>7.1}",
                state.phi.to_degrees(),
                state.theta.to_degrees(),
                flight_path_angle(&state)?.to_degrees(),
                load_factor(&aero, &state, cmd),
                state.airspeed()
            );
        }
        state = model.step(&state, cmd, dt)?;
    }
    Ok(())
}
