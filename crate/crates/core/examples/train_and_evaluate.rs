//! Train one controller, write its run directory, then reload the saved
//! network and evaluate it again.
//!
//!     cargo run --release --example train_and_evaluate -- [out_dir]

use reflexq::config::{ExperimentConfig, Method};
use reflexq::trainer::{evaluate, format_summary_table, run_to_dir};
use reflexq::QModel;

fn main() -> reflexq::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example_run".into());
    let mut cfg = ExperimentConfig {
        method: Method::Enhanced,
        delay_seconds: 0.5,
        episodes: 30,
        ..Default::default()
    };
    cfg.apply_overrides(&["training.steps_per_episode=1000", "training.eval_every=5"])?;
    let result = run_to_dir(cfg.clone(), &out)?;
    print!("{}", format_summary_table(&result.summary()));

    let model = QModel::load(std::path::Path::new(&out).join("model.json"))?;
    let again = evaluate(&model, &cfg)?;
    println!("reloaded final model: improvement {:?} %", again.improvement().map(|v| (v * 100.0).round() / 100.0));
    Ok(())
}
