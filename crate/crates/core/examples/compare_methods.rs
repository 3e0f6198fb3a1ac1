//! Desk-scale comparison of the one-step and filtered targets on a synthetic
//! broadband record.
//!
//!     cargo run --release --example compare_methods -- [episodes] [seeds] [delay_s]

use std::time::Instant;

use reflexq::config::{ExperimentConfig, Method, RecordSource};
use reflexq::excitation::SynthKind;
use reflexq::trainer::run;

fn main() -> reflexq::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let episodes: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(150);
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let delay: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let base = ExperimentConfig {
        record: RecordSource::Synthetic {
            kind: SynthKind::WhiteNoise,
            amplitude: 3.0,
            seed: 1,
        },
        steps_per_episode: 2000,
        episodes,
        delay_seconds: delay,
        ..Default::default()
    };

    println!("method    seed  best_episode  disp_%   vel_%   acc_%   secs");
    for method in [Method::Original, Method::Enhanced] {
        for seed in 0..seeds {
            let t = Instant::now();
            let out = run(ExperimentConfig { method, seed, ..base.clone() })?;
            let (episode, eval, _) = out.best.as_ref().expect("at least one evaluation");
            let [d, v, a] = eval.improvement();
            println!(
                "{:<9} {seed:>4}  {episode:>12}  {d:>6.2}  {v:>6.2}  {a:>6.2}  {:>5.1}",
                method.as_str(),
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
