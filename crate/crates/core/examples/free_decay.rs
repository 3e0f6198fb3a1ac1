//! Free vibration of the frame from a 1 cm initial offset, stepped with the
//! exact zero-order-hold discretization.
//!
//!     cargo run --example free_decay

use reflexq::dynamics::{discretize, SdofParams, StateVector};

fn main() -> reflexq::Result<()> {
    let params = SdofParams::default();
    let model = discretize(params, 0.01)?;
    println!(
        "omega {:.3} rad/s, damping ratio {:.4}, period {:.4} s",
        params.natural_frequency(),
        params.damping_ratio(),
        params.period()
    );
    let mut x = StateVector::new(0.01, 0.0);
    println!("{:>6} {:>14} {:>14}", "t", "u [m]", "v [m/s]");
    for k in 1..=20 {
        let (next, _) = model.step(x, 0.0, 0.0)?;
        x = next;
        println!("{:>6.2} {:>14.6e} {:>14.6e}", k as f64 * 0.01, x.displacement, x.velocity);
    }
    Ok(())
}
