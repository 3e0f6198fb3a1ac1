//! Aggregation of finished runs into comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::{
    improvement_pct, load_summary_csv, SummaryRow, TrainingLog, MANIFEST_FILE, METRICS,
    SUMMARY_CSV_FILE, TRAINING_LOG_FILE,
};

/// Manifest fields that must agree across compared runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunIdentity {
    pub structure: serde_json::Value,
    pub record_sha256: String,
    pub samples: u64,
}

#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub label: String,
    pub identity: RunIdentity,
    pub summary: Vec<SummaryRow>,
    pub log: TrainingLog,
}

/// Largest tolerated difference between a stored improvement and the one
/// recomputed from its peak columns.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-9;

pub fn load_run(dir: impl AsRef<Path>) -> Result<LoadedRun> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::file(&mpath, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let field = |ptr: &str| {
        manifest
            .pointer(ptr)
            .cloned()
            .ok_or_else(|| Error::IncompatibleRuns(format!("{}: manifest lacks {ptr}", mpath.display())))
    };
    let identity = RunIdentity {
        structure: field("/structure")?,
        record_sha256: field("/record/sha256")?.as_str().unwrap_or_default().to_string(),
        samples: field("/record/samples")?.as_u64().unwrap_or_default(),
    };
    let label = format!(
        "{}@{}s#{}",
        field("/method")?.as_str().unwrap_or("?"),
        field("/delay_s")?,
        field("/seed")?
    );
    let summary = load_summary_csv(dir.join(SUMMARY_CSV_FILE))?;
    for row in &summary {
        cross_check(row).map_err(|m| Error::IncompatibleRuns(format!("{}: {m}", dir.display())))?;
    }
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        label,
        identity,
        summary,
        log: TrainingLog::load_csv(dir.join(TRAINING_LOG_FILE))?,
    })
}

/// Recomputes the improvement from the row's peaks.
pub fn cross_check(row: &SummaryRow) -> std::result::Result<(), String> {
    let recomputed = improvement_pct(row.uncontrolled, row.controlled);
    if (recomputed - row.improvement_pct).abs() > CROSS_CHECK_TOLERANCE {
        return Err(format!(
            "{} {}: improvement {} disagrees with recomputed {recomputed}",
            row.method, row.metric, row.improvement_pct
        ));
    }
    Ok(())
}

/// Rejects runs on different structures or records.
pub fn check_compatible(runs: &[LoadedRun]) -> Result<()> {
    let Some(first) = runs.first() else {
        return Err(Error::IncompatibleRuns("no runs given".into()));
    };
    for r in &runs[1..] {
        if r.identity.structure != first.identity.structure {
            return Err(Error::IncompatibleRuns(format!(
                "{} and {} use different structures",
                first.dir.display(),
                r.dir.display()
            )));
        }
        if r.identity.record_sha256 != first.identity.record_sha256 || r.identity.samples != first.identity.samples {
            return Err(Error::IncompatibleRuns(format!(
                "{} and {} use different records",
                first.dir.display(),
                r.dir.display()
            )));
        }
    }
    Ok(())
}

/// Averages rows over runs sharing method, delay and metric. Improvement is
/// recomputed from the averaged peaks.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let metric_rank = |m: &str| METRICS.iter().position(|x| *x == m).unwrap_or(METRICS.len());
    let mut groups: BTreeMap<(String, u64, usize, String), (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.method.clone(), r.delay_s.to_bits(), metric_rank(&r.metric), r.metric.clone());
        let e = groups.entry(key).or_insert((0.0, 0.0, 0));
        e.0 += r.uncontrolled;
        e.1 += r.controlled;
        e.2 += 1;
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((method, delay, _, metric), (u, c, n))| {
            let (u, c) = (u / n as f64, c / n as f64);
            SummaryRow {
                method,
                delay_s: f64::from_bits(delay),
                metric,
                uncontrolled: u,
                controlled: c,
                improvement_pct: improvement_pct(u, c),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.delay_s.total_cmp(&b.delay_s))
            .then(metric_rank(&a.metric).cmp(&metric_rank(&b.metric)))
    });
    out
}

/// Per-episode mean reward, one column per run.
pub fn reward_table(runs: &[LoadedRun]) -> String {
    let mut out = String::from("episode");
    for r in runs {
        out.push(',');
        out.push_str(&r.label);
    }
    out.push('\n');
    let longest = runs.iter().map(|r| r.log.records.len()).max().unwrap_or(0);
    for i in 0..longest {
        let _ = write!(out, "{}", i + 1);
        for r in runs {
            out.push(',');
            if let Some(rec) = r.log.records.get(i) {
                let _ = write!(out, "{}", rec.mean_reward);
            }
        }
        out.push('\n');
    }
    out
}

/// Path of the reward table written next to a report table.
pub fn reward_path(table: &Path) -> PathBuf {
    let stem = table.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    table.with_file_name(format!("{stem}_reward.csv"))
}

pub struct Report {
    pub rows: Vec<SummaryRow>,
    pub reward_csv: String,
}

pub fn build_report<P: AsRef<Path>>(dirs: &[P]) -> Result<Report> {
    let runs = dirs.iter().map(load_run).collect::<Result<Vec<_>>>()?;
    check_compatible(&runs)?;
    let all: Vec<SummaryRow> = runs.iter().flat_map(|r| r.summary.iter().cloned()).collect();
    Ok(Report {
        rows: aggregate(&all),
        reward_csv: reward_table(&runs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::Peaks;
    use crate::trainer::summary_rows;

    fn peaks(d: f64, v: f64, a: f64) -> Peaks {
        Peaks {
            displacement: d,
            velocity: v,
            acceleration: a,
        }
    }

    #[test]
    fn published_layout_example() {
        let rows = summary_rows("enhanced", 10.0, &peaks(4.39, 0.91, 22.97), &peaks(3.15, 0.66, 18.0));
        assert!((rows[0].improvement_pct - 28.246).abs() < 0.3);
        assert!(rows.iter().all(|r| cross_check(r).is_ok()));
    }

    #[test]
    fn aggregation_averages_seeds() {
        let mut rows = summary_rows("original", 1.0, &peaks(2.0, 1.0, 1.0), &peaks(1.0, 1.0, 1.0));
        rows.extend(summary_rows("original", 1.0, &peaks(2.0, 1.0, 1.0), &peaks(1.5, 1.0, 1.0)));
        rows.extend(summary_rows("enhanced", 1.0, &peaks(2.0, 1.0, 1.0), &peaks(0.5, 1.0, 1.0)));
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 6);
        assert_eq!(agg[0].method, "enhanced");
        assert_eq!(agg[3].metric, "peak_displacement");
        assert_eq!(agg[3].controlled, 1.25);
        assert_eq!(agg[3].improvement_pct, 37.5);
    }

    #[test]
    fn single_run_single_rows() {
        let rows = summary_rows("original", 0.0, &peaks(2.0, 1.0, 1.0), &peaks(1.0, 1.0, 1.0));
        assert_eq!(aggregate(&rows), rows);
    }

    #[test]
    fn tampered_row_fails_cross_check() {
        let mut row = summary_rows("original", 0.0, &peaks(2.0, 1.0, 1.0), &peaks(1.0, 1.0, 1.0))[0].clone();
        row.improvement_pct += 0.1;
        assert!(cross_check(&row).is_err());
    }
}
