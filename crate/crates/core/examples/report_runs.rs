//! Aggregate finished run directories into one table, averaging over seeds.
//!
//!     cargo run --release --example report_runs -- <run_dir>...

use reflexq::report::build_report;
use reflexq::trainer::format_summary_table;

fn main() -> reflexq::Result<()> {
    let dirs: Vec<String> = std::env::args().skip(1).collect();
    if dirs.is_empty() {
        eprintln!("usage: report_runs <run_dir>...");
        std::process::exit(2);
    }
    let report = build_report(&dirs)?;
    print!("{}", format_summary_table(&report.rows));
    println!("\nmean episode reward per run:");
    for line in report.reward_csv.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
