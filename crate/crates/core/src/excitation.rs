//! Ground-acceleration records: loading, resampling and synthesis.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, m/s². AT2 files store accelerations in g.
pub const STANDARD_GRAVITY: f64 = 9.80665;

const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionSource {
    Csv,
    At2,
    Synthetic,
}

/// Uniformly sampled ground acceleration, m/s².
#[derive(Clone, Debug, PartialEq)]
pub struct GroundMotion {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub name: String,
    pub source: MotionSource,
}

impl GroundMotion {
    pub fn new(
        dt: f64,
        samples: Vec<f64>,
        name: impl Into<String>,
        source: MotionSource,
    ) -> Result<Self> {
        let name = name.into();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInterval(dt));
        }
        if samples.is_empty() {
            return Err(Error::EmptyRecord(name));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "{name}: sample {i} is not finite"
            )));
        }
        Ok(Self {
            dt,
            samples,
            name,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Trims or zero-pads to exactly `steps` samples.
    pub fn fit_to_steps(&self, steps: usize) -> Result<Self> {
        let mut samples = self.samples.clone();
        samples.resize(steps, 0.0);
        GroundMotion::new(self.dt, samples, self.name.clone(), self.source)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "# ground motion: {}", self.name)?;
        writeln!(out, "# time_s,accel_m_s2")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{},{}", i as f64 * self.dt, v)?;
        }
        fs::write(path, out).map_err(|e| Error::file(path, e))
    }
}

/// Two-column CSV (time s, acceleration m/s²); lines starting with `#` are ignored.
pub fn load_csv(path: impl AsRef<Path>) -> Result<GroundMotion> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

pub fn parse_csv(text: &str, origin: &str) -> Result<GroundMotion> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut dt: Option<f64> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let malformed = |message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(malformed(format!("expected 2 columns, found {}", record.len())));
        }
        let parse = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| malformed(format!("not a number: {f:?}")))
        };
        let t = parse(&record[0])?;
        let a = parse(&record[1])?;
        if let Some(&prev) = times.last() {
            let step = t - prev;
            match dt {
                None => dt = Some(step),
                Some(expected) => {
                    if (step - expected).abs() > SPACING_TOLERANCE {
                        return Err(Error::NonUniformSpacing {
                            path: origin.to_string(),
                            line,
                            expected,
                            found: step,
                        });
                    }
                }
            }
        }
        times.push(t);
        values.push(a);
    }
    if values.is_empty() {
        return Err(Error::EmptyRecord(origin.to_string()));
    }
    let dt = dt.ok_or_else(|| Error::Parse {
        path: origin.to_string(),
        line: 1,
        message: "need at least two rows to infer the sample interval".into(),
    })?;
    GroundMotion::new(dt, values, origin, MotionSource::Csv)
}

/// PEER NGA `.AT2` record: three free-text header lines, a fourth line with
/// `NPTS` and `DT`, then accelerations in g.
pub fn load_at2(path: impl AsRef<Path>) -> Result<GroundMotion> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_at2(&text, &path.display().to_string())
}

pub fn parse_at2(text: &str, origin: &str) -> Result<GroundMotion> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines.get(3).ok_or_else(|| Error::Parse {
        path: origin.to_string(),
        line: lines.len() as u64,
        message: "missing NPTS/DT header line".into(),
    })?;
    let (npts, dt) = parse_at2_header(header).ok_or_else(|| Error::Parse {
        path: origin.to_string(),
        line: 4,
        message: format!("cannot read NPTS and DT from {header:?}"),
    })?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInterval(dt));
    }
    let mut samples = Vec::with_capacity(npts);
    for (i, line) in lines.iter().enumerate().skip(4) {
        for token in line.split_whitespace() {
            let g: f64 = parse_fortran_real(token).ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i as u64 + 1,
                message: format!("not a number: {token:?}"),
            })?;
            samples.push(g * STANDARD_GRAVITY);
        }
    }
    if samples.len() != npts {
        return Err(Error::CountMismatch {
            expected: npts,
            found: samples.len(),
        });
    }
    GroundMotion::new(dt, samples, origin, MotionSource::At2)
}

fn parse_fortran_real(token: &str) -> Option<f64> {
    let token = token.trim_end_matches(',');
    token
        .parse()
        .ok()
        .or_else(|| token.replace(['D', 'd'], "E").parse().ok())
}

/// Accepts both `NPTS=  5000, DT= .0050 SEC` and `5000 0.0050 NPTS, DT`.
fn parse_at2_header(line: &str) -> Option<(usize, f64)> {
    let upper = line.to_ascii_uppercase();
    if upper.contains("NPTS=") || upper.contains("NPTS =") {
        let npts = value_after(&upper, "NPTS")?;
        let dt = value_after(&upper, "DT")?;
        let npts = npts.parse::<f64>().ok()?;
        if npts < 0.0 || npts.fract() != 0.0 {
            return None;
        }
        return Some((npts as usize, dt.parse().ok()?));
    }
    let mut numbers = upper
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<f64>().ok());
    let npts = numbers.next()?;
    let dt = numbers.next()?;
    if npts < 0.0 || npts.fract() != 0.0 {
        return None;
    }
    Some((npts as usize, dt))
}

fn value_after<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let start = line.find(key)? + key.len();
    let rest = line[start..].trim_start().strip_prefix('=')?.trim_start();
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'E')))
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

/// Linear interpolation onto a uniform grid spanning the original duration.
pub fn resample(motion: &GroundMotion, target_dt: f64) -> Result<GroundMotion> {
    if !(target_dt > 0.0 && target_dt.is_finite()) {
        return Err(Error::InvalidInterval(target_dt));
    }
    if target_dt == motion.dt {
        return Ok(motion.clone());
    }
    let duration = motion.duration();
    let count = (duration / target_dt + 1e-9).floor() as usize + 1;
    let last = motion.samples.len() - 1;
    let samples = (0..count)
        .map(|i| {
            let pos = i as f64 * target_dt / motion.dt;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = (pos - lo as f64).clamp(0.0, 1.0);
            let (a, b) = (motion.samples[lo], motion.samples[hi]);
            if frac == 0.0 || a == b {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect();
    GroundMotion::new(target_dt, samples, motion.name.clone(), motion.source)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    Sine { frequency_hz: f64 },
    /// Linear chirp between two frequencies.
    Sweep { start_hz: f64, end_hz: f64 },
    /// Zero-mean uniform noise whose standard deviation equals the amplitude.
    WhiteNoise,
}

impl SynthKind {
    pub fn label(&self) -> &'static str {
        match self {
            SynthKind::Sine { .. } => "sine",
            SynthKind::Sweep { .. } => "sweep",
            SynthKind::WhiteNoise => "white_noise",
        }
    }
}

pub fn synth(
    kind: SynthKind,
    duration: f64,
    dt: f64,
    amplitude: f64,
    seed: u64,
) -> Result<GroundMotion> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInterval(dt));
    }
    if !(duration > 0.0 && amplitude > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "synthetic record needs positive duration and amplitude (got {duration}, {amplitude})"
        )));
    }
    let count = (duration / dt).round().max(1.0) as usize;
    let tau = std::f64::consts::TAU;
    let samples: Vec<f64> = match kind {
        SynthKind::Sine { frequency_hz } => (0..count)
            .map(|i| amplitude * (tau * frequency_hz * i as f64 * dt).sin())
            .collect(),
        SynthKind::Sweep { start_hz, end_hz } => {
            let rate = (end_hz - start_hz) / duration;
            (0..count)
                .map(|i| {
                    let t = i as f64 * dt;
                    amplitude * (tau * (start_hz * t + 0.5 * rate * t * t)).sin()
                })
                .collect()
        }
        SynthKind::WhiteNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let half_width = amplitude * 3f64.sqrt();
            (0..count)
                .map(|_| rng.gen_range(-half_width..=half_width))
                .collect()
        }
    };
    let name = format!("synthetic-{}-seed{seed}", kind.label());
    GroundMotion::new(dt, samples, name, MotionSource::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn csv_two_rows() {
        let m = parse_csv("0,0\n0.01,1.0\n", "t").unwrap();
        assert_eq!(m.dt, 0.01);
        assert_eq!(m.samples, vec![0.0, 1.0]);
    }

    #[test]
    fn csv_non_uniform_rejected() {
        let err = parse_csv("0,0\n0.01,1\n0.03,2\n", "t").unwrap_err();
        assert!(matches!(err, Error::NonUniformSpacing { line: 3, .. }), "{err}");
    }

    #[test]
    fn csv_header_comments_ignored() {
        let m = parse_csv("# a header\n# time,acc\n0,5\n0.02,6\n", "t").unwrap();
        assert_eq!(m.samples, vec![5.0, 6.0]);
        assert_eq!(m.dt, 0.02);
    }

    #[test]
    fn csv_errors_carry_line_number() {
        let err = parse_csv("0,0\n0.01,abc\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(matches!(parse_csv("# only\n", "t"), Err(Error::EmptyRecord(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = synth(SynthKind::WhiteNoise, 1.0, 0.01, 2.0, 9).unwrap();
        let path = dir.path().join("m.csv");
        m.write_csv(&path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.samples, m.samples);
        assert_relative_eq!(back.dt, m.dt, max_relative = 1e-12);
    }

    const AT2_HEADER: &str = "PEER NGA STRONG MOTION DATABASE RECORD\nLANDERS 06/28/92, TEST, 000\nACCELERATION TIME SERIES IN UNITS OF G\n";

    #[test]
    fn at2_units_converted() {
        let text = format!("{AT2_HEADER}NPTS=   3, DT=   .0100 SEC\n .1 .2 .1\n");
        let m = parse_at2(&text, "x.AT2").unwrap();
        assert_eq!(m.dt, 0.01);
        assert_relative_eq!(m.samples[0], 0.980665, epsilon = 1e-12);
        assert_relative_eq!(m.samples[1], 1.96133, epsilon = 1e-12);
        assert_eq!(m.source, MotionSource::At2);
    }

    #[test]
    fn at2_new_style_header() {
        let text = format!("{AT2_HEADER}    2    0.0050    NPTS, DT\n -.1000E-01  0.2E-01\n");
        let m = parse_at2(&text, "x.AT2").unwrap();
        assert_eq!(m.dt, 0.005);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn at2_count_mismatch() {
        let text = format!("{AT2_HEADER}NPTS=   4, DT=   .0100 SEC\n .1 .2 .1\n");
        assert!(matches!(
            parse_at2(&text, "x"),
            Err(Error::CountMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn at2_zero_interval() {
        let text = format!("{AT2_HEADER}NPTS=   1, DT=   0.0 SEC\n .1\n");
        assert!(matches!(parse_at2(&text, "x"), Err(Error::InvalidInterval(_))));
        let text = format!("{AT2_HEADER}no numbers here\n");
        assert!(matches!(parse_at2(&text, "x"), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn resample_identity_and_interpolation() {
        let m = GroundMotion::new(0.02, vec![0.0, 1.0], "r", MotionSource::Csv).unwrap();
        assert_eq!(resample(&m, 0.02).unwrap(), m);
        assert_eq!(resample(&m, 0.01).unwrap().samples, vec![0.0, 0.5, 1.0]);
        let c = GroundMotion::new(0.013, vec![2.5; 40], "c", MotionSource::Csv).unwrap();
        assert!(resample(&c, 0.01).unwrap().samples.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn synth_properties() {
        let s = synth(SynthKind::Sine { frequency_hz: 1.0 }, 2.0, 0.01, 3.0, 0).unwrap();
        assert_relative_eq!(s.peak(), 3.0, epsilon = 1e-12);
        let a = synth(SynthKind::WhiteNoise, 5.0, 0.01, 1.0, 42).unwrap();
        let b = synth(SynthKind::WhiteNoise, 5.0, 0.01, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = synth(SynthKind::WhiteNoise, 5.0, 0.01, 1.0, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn white_noise_std_matches_amplitude() {
        let a = 2.0;
        let m = synth(SynthKind::WhiteNoise, 200.0, 0.01, a, 7).unwrap();
        assert!(m.len() >= 10_000);
        let n = m.len() as f64;
        let mean = m.samples.iter().sum::<f64>() / n;
        let var = m.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - a).abs() < 0.1 * a, "std {}", var.sqrt());
    }

    #[test]
    fn fit_pads_and_trims() {
        let m = GroundMotion::new(0.01, vec![1.0, 2.0, 3.0], "f", MotionSource::Csv).unwrap();
        assert_eq!(m.fit_to_steps(5).unwrap().samples, vec![1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(m.fit_to_steps(2).unwrap().samples, vec![1.0, 2.0]);
    }
}
