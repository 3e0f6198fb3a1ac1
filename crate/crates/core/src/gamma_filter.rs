//! Reflexive γ-function: a finite reward response filter derived from the
//! environment's response to a single probe action.
//!
//! Construction:
//!
//! 1. [`probe`] applies one action for a single control step from rest and
//!    records the rectified displacement response, one value per step after
//!    the action. The probe goes through the same delay line as the agent's
//!    actions, so action-effect delays show up as leading zeros.
//! 2. [`build`] keeps the peak values of that response: the running maxima
//!    while rising and the values not exceeded later while falling. The
//!    envelope through those points is linearly interpolated at every step,
//!    normalised to a maximum of one, and truncated at the first step after
//!    the peak where it falls below the cutoff threshold.
//! 3. The retained samples weight the rewards in the Q-target, and the
//!    envelope value at the cutoff step discounts the bootstrap term:
//!    `TQ = Σ_j γ_j·r_j + γ_{n+1}·max_a Q(s', a)`.
//!
//! `γ_j` weights the reward observed at the end of the `(j+1)`-th step after
//! the action was taken, i.e. the sample whose displacement produced
//! `response[j]`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DelayLine, DiscreteModel, StateVector};
use crate::error::{Error, Result};

/// Reading of "the response is reduced by p percent of its peak".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    /// Cut once the envelope drops below `(1 − p/100)` of the peak.
    #[default]
    DropBy,
    /// Cut once the envelope drops below `p/100` of the peak.
    DropTo,
}

impl CutoffRule {
    pub fn threshold(self, percent: f64) -> f64 {
        match self {
            CutoffRule::DropBy => 1.0 - percent / 100.0,
            CutoffRule::DropTo => percent / 100.0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CutoffRule::DropBy => "drop_by",
            CutoffRule::DropTo => "drop_to",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "drop_by" => Some(CutoffRule::DropBy),
            "drop_to" => Some(CutoffRule::DropTo),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReflexiveGamma {
    /// `γ_0..γ_n`
    pub gammas: Vec<f64>,
    /// `γ_{n+1}`, the weight of the bootstrap term.
    pub bootstrap_gamma: f64,
    pub dt: f64,
    pub probe_force: f64,
    pub cutoff_percent: f64,
    pub rule: CutoffRule,
}

impl ReflexiveGamma {
    /// `[1]` with the given bootstrap discount: reduces the enhanced target to
    /// the one-step Q-learning target.
    pub fn one_step(discount: f64, dt: f64) -> Self {
        Self {
            gammas: vec![1.0],
            bootstrap_gamma: discount,
            dt,
            probe_force: 0.0,
            cutoff_percent: 0.0,
            rule: CutoffRule::DropBy,
        }
    }

    /// Filter from explicit weights, e.g. a hand-written override. Only
    /// finiteness and non-negativity are checked.
    pub fn from_weights(gammas: Vec<f64>, bootstrap_gamma: f64, dt: f64) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::FilterBuild("filter needs at least one weight".into()));
        }
        if gammas
            .iter()
            .chain(std::iter::once(&bootstrap_gamma))
            .any(|g| !(g.is_finite() && *g >= 0.0))
        {
            return Err(Error::FilterBuild("weights must be finite and non-negative".into()));
        }
        Ok(Self {
            gammas,
            bootstrap_gamma,
            dt,
            probe_force: 0.0,
            cutoff_percent: 0.0,
            rule: CutoffRule::DropBy,
        })
    }

    /// `n + 1`, the number of rewards a window carries.
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// `n`
    pub fn n(&self) -> usize {
        self.gammas.len() - 1
    }

    /// `Δt_γ = (n+1)·dt`
    pub fn window_duration(&self) -> f64 {
        self.gammas.len() as f64 * self.dt
    }

    pub fn peak_index(&self) -> usize {
        first_max(&self.gammas).0
    }

    pub fn leading_zeros(&self) -> usize {
        self.gammas.iter().take_while(|&&g| g == 0.0).count()
    }

    /// `Σ_{j≤k} γ_j·r_j` for `rewards = r_0..r_k`, `k ≤ n`.
    pub fn weighted_rewards(&self, rewards: &[f64]) -> Result<f64> {
        if rewards.len() > self.gammas.len() {
            return Err(Error::LengthMismatch {
                expected: self.gammas.len(),
                found: rewards.len(),
            });
        }
        let mut acc = 0.0;
        for (g, r) in self.gammas.iter().zip(rewards) {
            acc += g * r;
        }
        Ok(acc)
    }

    /// `Σ_{j=0..n} γ_j·r_j + γ_{n+1}·max_next_q`
    pub fn enhanced_target(&self, rewards: &[f64], max_next_q: f64) -> Result<f64> {
        if rewards.len() != self.gammas.len() {
            return Err(Error::LengthMismatch {
                expected: self.gammas.len(),
                found: rewards.len(),
            });
        }
        Ok(self.weighted_rewards(rewards)? + self.bootstrap_gamma * max_next_q)
    }

    /// Checks range, normalisation, unimodality and the cutoff rule; returns
    /// a description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.gammas.is_empty() {
            return Err("empty filter".into());
        }
        if let Some(g) = self.gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(format!("weight {g} outside [0, 1]"));
        }
        let (peak, max) = first_max(&self.gammas);
        if max != 1.0 {
            return Err(format!("maximum weight is {max}, not 1"));
        }
        if self.gammas[..=peak].windows(2).any(|w| w[1] < w[0]) {
            return Err("weights decrease before the peak".into());
        }
        if self.gammas[peak..].windows(2).any(|w| w[1] > w[0]) {
            return Err("weights increase after the peak".into());
        }
        if self.cutoff_percent > 0.0 {
            let threshold = self.rule.threshold(self.cutoff_percent);
            if self.gammas[peak + 1..].iter().any(|&g| g < threshold) {
                return Err("a retained weight after the peak is below the cutoff".into());
            }
            if !(self.bootstrap_gamma < threshold) {
                return Err(format!(
                    "bootstrap weight {} is not below the cutoff {threshold}",
                    self.bootstrap_gamma
                ));
            }
            if self.bootstrap_gamma > *self.gammas.last().unwrap() {
                return Err("bootstrap weight exceeds the last retained weight".into());
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# reflexive gamma filter");
        let _ = writeln!(out, "# dt={}", self.dt);
        let _ = writeln!(out, "# probe_force={}", self.probe_force);
        let _ = writeln!(out, "# cutoff_percent={}", self.cutoff_percent);
        let _ = writeln!(out, "# cutoff_rule={}", self.rule.as_str());
        let _ = writeln!(out, "step,gamma");
        for (i, g) in self.gammas.iter().enumerate() {
            let _ = writeln!(out, "{i},{g}");
        }
        let _ = writeln!(out, "bootstrap,{}", self.bootstrap_gamma);
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::file(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line: line as u64 + 1,
            message,
        };
        let num = |line: usize, s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(line, format!("not a number: {s:?}")))
        };
        let mut filter = ReflexiveGamma {
            gammas: Vec::new(),
            bootstrap_gamma: f64::NAN,
            dt: f64::NAN,
            probe_force: 0.0,
            cutoff_percent: 0.0,
            rule: CutoffRule::DropBy,
        };
        let mut saw_bootstrap = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "step,gamma" {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.trim().split_once('=') {
                    match key.trim() {
                        "dt" => filter.dt = num(i, value)?,
                        "probe_force" => filter.probe_force = num(i, value)?,
                        "cutoff_percent" => filter.cutoff_percent = num(i, value)?,
                        "cutoff_rule" => {
                            filter.rule = CutoffRule::parse(value.trim())
                                .ok_or_else(|| err(i, format!("unknown cutoff rule {value:?}")))?
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if saw_bootstrap {
                return Err(err(i, "rows after the bootstrap row".into()));
            }
            let (key, value) = line
                .split_once(',')
                .ok_or_else(|| err(i, "expected two columns".into()))?;
            if key.trim() == "bootstrap" {
                filter.bootstrap_gamma = num(i, value)?;
                saw_bootstrap = true;
                continue;
            }
            let step: usize = key
                .trim()
                .parse()
                .map_err(|_| err(i, format!("bad step index {key:?}")))?;
            if step != filter.gammas.len() {
                return Err(err(i, format!("expected step {}, found {step}", filter.gammas.len())));
            }
            filter.gammas.push(num(i, value)?);
        }
        if !saw_bootstrap || filter.gammas.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: text.lines().count() as u64,
                message: "filter needs weight rows and a final bootstrap row".into(),
            });
        }
        if !(filter.dt > 0.0) {
            return Err(Error::InvalidInterval(filter.dt));
        }
        Ok(filter)
    }
}

fn first_max(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
}

/// Rectified displacement response to `probe_force` held for one control
/// step from rest, delayed by `delay_steps`. `result[i]` is `|u|` at the end
/// of step `i + 1` after the action.
pub fn probe(
    model: &DiscreteModel,
    delay_steps: usize,
    probe_force: f64,
    horizon_steps: usize,
) -> Result<Vec<f64>> {
    if !(probe_force.is_finite() && probe_force != 0.0) {
        return Err(Error::ProbeFailed(format!(
            "probe force must be finite and non-zero, got {probe_force}"
        )));
    }
    let mut line = DelayLine::new(delay_steps);
    let mut state = StateVector::default();
    let mut out = Vec::with_capacity(horizon_steps);
    for step in 0..horizon_steps {
        let command = if step == 0 { probe_force } else { 0.0 };
        let force = line.push(command);
        let (next, _) = model.advance(state, force, 0.0);
        if !next.is_finite() {
            return Err(Error::SimulationDiverged { step });
        }
        state = next;
        out.push(state.displacement.abs());
    }
    Ok(out)
}

/// Peak envelope of a non-negative response, normalised to a maximum of one.
///
/// Retained points are the running maxima up to the first global peak and,
/// after it, every value not exceeded later on. Values in between are
/// linearly interpolated.
pub fn peak_envelope(response: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = response.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::FilterBuild(format!(
            "response must be finite and non-negative (found {v})"
        )));
    }
    let (_, max) = first_max(response);
    if !(max > 0.0) {
        return Err(Error::FilterBuild("response is identically zero".into()));
    }
    let anchors = envelope_anchors(response);

    let mut envelope = vec![0.0; response.len()];
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (response[a], response[b]);
        for (offset, slot) in envelope[a..b].iter_mut().enumerate() {
            *slot = if offset == 0 {
                va
            } else {
                va + (vb - va) * offset as f64 / (b - a) as f64
            };
        }
    }
    let last = *anchors.last().unwrap();
    envelope[last] = response[last];
    for v in envelope.iter_mut() {
        *v /= max;
    }
    Ok(envelope)
}

/// Indices retained by [`peak_envelope`].
fn envelope_anchors(response: &[f64]) -> Vec<usize> {
    let (peak, _) = first_max(response);
    let mut anchors = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for (i, &v) in response[..=peak].iter().enumerate() {
        if v >= running {
            anchors.push(i);
            running = v;
        }
    }
    let mut tail = Vec::new();
    let mut later_max = f64::NEG_INFINITY;
    for (i, &v) in response.iter().enumerate().skip(peak + 1).rev() {
        if v >= later_max {
            tail.push(i);
            later_max = v;
        }
    }
    anchors.extend(tail.into_iter().rev());
    anchors
}

/// Builds the filter from a rectified response using the drop-by cutoff.
pub fn build(response: &[f64], cutoff_percent: f64, dt: f64) -> Result<ReflexiveGamma> {
    build_with_rule(response, cutoff_percent, CutoffRule::DropBy, dt)
}

pub fn build_with_rule(
    response: &[f64],
    cutoff_percent: f64,
    rule: CutoffRule,
    dt: f64,
) -> Result<ReflexiveGamma> {
    if !(cutoff_percent > 0.0 && cutoff_percent < 100.0) {
        return Err(Error::InvalidParameters(format!(
            "cutoff percentage must lie in (0, 100), got {cutoff_percent}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInterval(dt));
    }
    let envelope = peak_envelope(response)?;
    let (peak, _) = first_max(&envelope);
    let threshold = rule.threshold(cutoff_percent);
    let cutoff = envelope
        .iter()
        .enumerate()
        .skip(peak + 1)
        .find(|(_, &v)| v < threshold)
        .map(|(i, _)| i)
        .ok_or_else(|| {
            Error::FilterBuild(format!(
                "response never fell below {threshold} of its peak within {} steps",
                response.len()
            ))
        })?;
    Ok(ReflexiveGamma {
        bootstrap_gamma: envelope[cutoff],
        gammas: envelope[..cutoff].to_vec(),
        dt,
        probe_force: 0.0,
        cutoff_percent,
        rule,
    })
}

/// `TQ = Σ γ_j·r_j + γ_{n+1}·max_next_q`
pub fn enhanced_target(filter: &ReflexiveGamma, rewards: &[f64], max_next_q: f64) -> Result<f64> {
    filter.enhanced_target(rewards, max_next_q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub cutoff_percent: f64,
    pub rule: CutoffRule,
    /// Probe magnitude, N. The normalised filter does not depend on it.
    pub probe_force: f64,
    /// Observation window after the peak, in natural periods.
    pub periods_after_peak: f64,
    /// Hard limit on the probe length after the delay, in natural periods.
    pub max_periods: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            cutoff_percent: 15.0,
            rule: CutoffRule::DropBy,
            probe_force: 10_000.0,
            periods_after_peak: 4.0,
            max_periods: 1000.0,
        }
    }
}

fn reliable_end(response: &[f64]) -> usize {
    let anchors = envelope_anchors(response);
    if anchors.len() >= 2 {
        anchors[anchors.len() - 2]
    } else {
        0
    }
}

/// Probes the environment and builds the filter, lengthening the probe until
/// at least `periods_after_peak` natural periods follow the peak and the
/// cutoff is reached.
pub fn probe_and_build(
    model: &DiscreteModel,
    delay_steps: usize,
    cfg: &FilterConfig,
) -> Result<(Vec<f64>, ReflexiveGamma)> {
    let period_steps = (model.params.period() / model.dt).ceil().max(1.0) as usize;
    let after_peak = (cfg.periods_after_peak * period_steps as f64).ceil() as usize;
    let cap = delay_steps + (cfg.max_periods * period_steps as f64).ceil() as usize;
    let mut horizon = (delay_steps + after_peak + 2).min(cap);
    loop {
        let response = probe(model, delay_steps, cfg.probe_force, horizon)?;
        let (peak, _) = first_max(&response);
        let needed = peak + after_peak + 1;
        if needed <= horizon {
            match build_with_rule(&response, cfg.cutoff_percent, cfg.rule, model.dt) {
                // the last sample is always an anchor; a cutoff inside the
                // segment leading to it is a truncation artefact
                Ok(mut filter) if filter.len() <= reliable_end(&response) => {
                    filter.probe_force = cfg.probe_force;
                    return Ok((response, filter));
                }
                Ok(_) if horizon < cap => {
                    log::debug!("probe horizon {horizon}: cutoff only at the truncation edge");
                }
                Ok(_) => {
                    return Err(Error::ProbeFailed(format!(
                        "response did not decay within {cap} steps"
                    )))
                }
                Err(Error::FilterBuild(msg)) if horizon < cap => {
                    log::debug!("probe horizon {horizon} too short: {msg}");
                }
                Err(Error::FilterBuild(msg)) => return Err(Error::ProbeFailed(msg)),
                Err(e) => return Err(e),
            }
        }
        if horizon >= cap {
            return Err(Error::ProbeFailed(format!(
                "cutoff not reached within {cap} steps"
            )));
        }
        horizon = (horizon * 2).max(needed).min(cap);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{discretize, SdofParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn frame() -> DiscreteModel {
        discretize(SdofParams::default(), 0.01).unwrap()
    }

    #[test]
    fn build_direct_rule_application() {
        let r = [0.0, 0.5, 1.0, 0.9, 0.84, 0.5, 0.2, 0.1];
        let f = build(&r, 15.0, 0.01).unwrap();
        assert_eq!(f.gammas, vec![0.0, 0.5, 1.0, 0.9]);
        assert_eq!(f.bootstrap_gamma, 0.84);
        assert_eq!(f.n(), 3);
        f.check_invariants().unwrap();
    }

    #[test]
    fn drop_to_rule_keeps_longer_window() {
        let r = [0.0, 0.5, 1.0, 0.9, 0.84, 0.5, 0.2, 0.1];
        let f = build_with_rule(&r, 15.0, CutoffRule::DropTo, 0.01).unwrap();
        assert_eq!(f.gammas, vec![0.0, 0.5, 1.0, 0.9, 0.84, 0.5, 0.2]);
        assert_eq!(f.bootstrap_gamma, 0.1);
    }

    #[test]
    fn envelope_bridges_oscillation_troughs() {
        // |sin|-like lobes: 1.0 then 0.6 two steps later, trough in between
        let r = [0.2, 1.0, 0.1, 0.6, 0.0, 0.3, 0.0];
        let env = peak_envelope(&r).unwrap();
        assert_relative_eq!(env[2], 0.8, epsilon = 1e-15);
        assert_relative_eq!(env[4], 0.45, epsilon = 1e-15);
        assert_relative_eq!(env[6], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(build(&[0.0, 0.0], 15.0, 0.01), Err(Error::FilterBuild(_))));
        assert!(matches!(build(&[0.0, 1.0, 0.95], 15.0, 0.01), Err(Error::FilterBuild(_))));
        assert!(matches!(build(&[0.0, -1.0], 15.0, 0.01), Err(Error::FilterBuild(_))));
    }

    #[test]
    fn leading_zero_shift() {
        let r = [0.3, 1.0, 0.7, 0.2];
        let base = build(&r, 15.0, 0.01).unwrap();
        let mut shifted = vec![0.0; 5];
        shifted.extend_from_slice(&r);
        let s = build(&shifted, 15.0, 0.01).unwrap();
        assert_eq!(&s.gammas[..5], &[0.0; 5]);
        assert_eq!(&s.gammas[5..], &base.gammas[..]);
        assert_eq!(s.bootstrap_gamma, base.bootstrap_gamma);
    }

    #[test]
    fn target_examples() {
        let f = ReflexiveGamma::one_step(0.9, 0.01);
        assert_eq!(f.enhanced_target(&[2.0], 10.0).unwrap(), 2.0 + 0.9 * 10.0);
        let f = ReflexiveGamma::from_weights(vec![0.0, 0.0, 1.0], 0.85, 0.01).unwrap();
        assert_eq!(f.enhanced_target(&[5.0, 7.0, 2.0], 10.0).unwrap(), 10.5);
        assert_eq!(f.enhanced_target(&[0.0; 3], 4.0).unwrap(), 0.85 * 4.0);
        assert!(matches!(
            f.enhanced_target(&[1.0], 0.0),
            Err(Error::LengthMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (_, f) = probe_and_build(&frame(), 3, &FilterConfig::default()).unwrap();
        let back = ReflexiveGamma::parse_csv(&f.to_csv_string(), "mem").unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn probe_shift_and_linearity() {
        let model = frame();
        let base = probe(&model, 0, 1000.0, 60).unwrap();
        let delayed = probe(&model, 7, 1000.0, 67).unwrap();
        assert_eq!(&delayed[..7], &[0.0; 7]);
        assert_eq!(&delayed[7..], &base[..]);
        let doubled = probe(&model, 0, 2000.0, 60).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            assert_eq!(2.0 * a, *b);
        }
        assert!(base[0] > 0.0);
    }

    #[test]
    fn paper_frame_filter_is_short() {
        let (_, f) = probe_and_build(&frame(), 0, &FilterConfig::default()).unwrap();
        f.check_invariants().unwrap();
        assert!(f.n() <= 5, "n = {}", f.n());
        let (_, d) = probe_and_build(&frame(), 500, &FilterConfig::default()).unwrap();
        assert_eq!(d.leading_zeros(), 500 + f.leading_zeros());
        assert_eq!(&d.gammas[500..], &f.gammas[..]);
    }

    #[test]
    fn undamped_probe_fails() {
        let model = discretize(
            SdofParams {
                mass: 1.0,
                stiffness: 400.0,
                damping: 0.0,
            },
            0.01,
        )
        .unwrap();
        let cfg = FilterConfig {
            max_periods: 20.0,
            ..FilterConfig::default()
        };
        assert!(matches!(probe_and_build(&model, 0, &cfg), Err(Error::ProbeFailed(_))));
    }

    proptest! {
        #[test]
        fn scale_invariance(c in 1e-3..1e3f64, decay in 0.02..0.4f64, freq in 0.1..1.5f64) {
            let r: Vec<f64> = (0..400)
                .map(|i| ((-decay * i as f64).exp() * (freq * i as f64 + 0.3).sin()).abs())
                .collect();
            let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
            let a = build(&r, 15.0, 0.01).unwrap();
            let b = build(&scaled, 15.0, 0.01).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.gammas.iter().zip(&b.gammas) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn target_is_linear(rs in proptest::collection::vec(-5.0..5.0f64, 4), q in -20.0..20.0f64, k in -3.0..3.0f64) {
            let f = build(&[0.0, 0.5, 1.0, 0.9, 0.6], 15.0, 0.01).unwrap();
            let t = f.enhanced_target(&rs, q).unwrap();
            let scaled: Vec<f64> = rs.iter().map(|r| k * r).collect();
            let ts = f.enhanced_target(&scaled, k * q).unwrap();
            prop_assert!((ts - k * t).abs() <= 1e-12 * (1.0 + t.abs() * k.abs()));
        }
    }
}
