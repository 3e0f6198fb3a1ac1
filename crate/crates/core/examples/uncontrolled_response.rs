//! Uncontrolled response to a ground-motion record.
//!
//!     cargo run --example uncontrolled_response -- [record.AT2|record.csv]
//!
//! Without an argument a synthetic sweep is used.

use reflexq::dynamics::{discretize, simulate_uncontrolled, SdofParams};
use reflexq::excitation::{load_at2, load_csv, resample, synth, SynthKind};
use reflexq::reward::Peaks;

fn main() -> reflexq::Result<()> {
    let dt = 0.01;
    let motion = match std::env::args().nth(1) {
        Some(path) if path.to_ascii_lowercase().ends_with(".at2") => resample(&load_at2(&path)?, dt)?,
        Some(path) => resample(&load_csv(&path)?, dt)?,
        None => synth(SynthKind::Sweep { start_hz: 0.5, end_hz: 20.0 }, 20.0, dt, 3.0, 0)?,
    };
    let model = discretize(SdofParams::default(), dt)?;
    let trace = simulate_uncontrolled(&model, &motion)?;
    let peaks = Peaks::of(&trace);
    println!("{}: {} samples, PGA {:.3} m/s2", motion.name, motion.len(), motion.peak());
    println!("peak displacement {:.3} cm", peaks.displacement * 100.0);
    println!("peak velocity     {:.4} m/s", peaks.velocity);
    println!("peak acceleration {:.3} m/s2", peaks.acceleration);
    Ok(())
}
