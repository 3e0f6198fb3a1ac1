//! Probe the frame with a single force pulse and derive the reward response
//! filter for several action delays.
//!
//!     cargo run --example build_filter

use reflexq::dynamics::{delay_steps, discretize, SdofParams};
use reflexq::gamma_filter::{probe_and_build, FilterConfig};

fn main() -> reflexq::Result<()> {
    let dt = 0.01;
    let model = discretize(SdofParams::default(), dt)?;
    for delay in [0.0, 0.5, 1.0, 5.0] {
        let steps = delay_steps(delay, dt)?;
        let (response, filter) = probe_and_build(&model, steps, &FilterConfig::default())?;
        let active: Vec<String> = filter.gammas[filter.leading_zeros()..]
            .iter()
            .map(|g| format!("{g:.3}"))
            .collect();
        println!(
            "delay {delay:>4} s: {} probe samples, {} weights ({} zeros then [{}]), bootstrap {:.3}",
            response.len(),
            filter.len(),
            filter.leading_zeros(),
            active.join(", "),
            filter.bootstrap_gamma
        );
    }
    Ok(())
}
