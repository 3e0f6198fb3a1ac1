//! Experiment configuration with flat dotted keys.
//!
//! A config file is TOML; `training.episodes = 150` and a `[training]` table
//! are equivalent. Every key can be overridden with `key=value` strings (the
//! value uses TOML syntax, bare words are taken as strings). Precedence is
//! override > file > default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::dynamics::{DelayTarget, SdofParams};
use crate::error::{Error, Result};
use crate::excitation::SynthKind;
use crate::gamma_filter::{CutoffRule, FilterConfig};
use crate::reward::ForceTerm;
use crate::agent::EpsilonSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One-step Q-learning target.
    Original,
    /// Reflexive γ-filter target.
    Enhanced,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::Enhanced => "enhanced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Method::Original),
            "enhanced" => Ok(Method::Enhanced),
            other => Err(Error::Config(format!(
                "method must be original or enhanced, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordSource {
    /// `.AT2` (by extension) or two-column CSV.
    File { path: PathBuf },
    Synthetic {
        kind: SynthKind,
        amplitude: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOverride {
    pub gammas: Vec<f64>,
    pub bootstrap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub structure: SdofParams,
    pub record: RecordSource,
    pub delay_seconds: f64,
    pub delay_target: DelayTarget,
    pub method: Method,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub sample_rate_hz: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub target_sync_episodes: usize,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    pub filter: FilterConfig,
    /// Probe magnitude; `None` uses the maximum actuator force.
    pub probe_force: Option<f64>,
    pub filter_override: Option<FilterOverride>,
    pub force_penalty: f64,
    pub force_unit: f64,
    pub force_term: ForceTerm,
    pub n_actions: usize,
    pub max_force: f64,
    pub hidden_layers: Vec<usize>,
    pub step_size: f64,
    /// Discount of the one-step target.
    pub discount: f64,
    pub eval_every: usize,
    /// Environment steps between minibatch updates.
    pub train_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            structure: SdofParams::default(),
            record: RecordSource::Synthetic {
                kind: SynthKind::WhiteNoise,
                amplitude: 3.0,
                seed: 1,
            },
            delay_seconds: 0.0,
            delay_target: DelayTarget::Force,
            method: Method::Enhanced,
            episodes: 1000,
            steps_per_episode: 6000,
            sample_rate_hz: 100.0,
            buffer_capacity: 60_000,
            batch_size: 50,
            target_sync_episodes: 50,
            epsilon: EpsilonSchedule::default(),
            seed: 0,
            filter: FilterConfig::default(),
            probe_force: None,
            filter_override: None,
            force_penalty: 0.005,
            force_unit: 1000.0,
            force_term: ForceTerm::Absolute,
            n_actions: 11,
            max_force: 10_000.0,
            hidden_layers: vec![40, 40],
            step_size: 1e-4,
            discount: 0.99,
            eval_every: 10,
            train_every: 1,
        }
    }
}

/// Keys whose defaults come from the published protocol; all others are
/// engineering assumptions.
const PAPER_KEYS: &[&str] = &[
    "structure.mass",
    "structure.stiffness",
    "structure.damping",
    "training.episodes",
    "training.steps_per_episode",
    "training.sample_rate_hz",
    "training.buffer_capacity",
    "training.batch_size",
    "training.target_sync_episodes",
    "epsilon.start",
    "epsilon.min",
    "filter.cutoff_percent",
    "reward.force_penalty",
    "network.hidden",
];

pub fn provenance(key: &str) -> &'static str {
    if PAPER_KEYS.contains(&key) {
        "paper"
    } else {
        "assumed"
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses the value half of a `key=value` override.
pub fn parse_override_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("{key}: expected a number, got {v}"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!(
            "{key}: expected a non-negative integer, got {v}"
        ))),
    }
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("{key}: expected a string, got {v}")))
}

fn as_f64_list(key: &str, v: &toml::Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::Config(format!("{key}: expected an array")))?
        .iter()
        .map(|x| as_f64(key, x))
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_toml_str(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let RecordSource::File { path: record } = &mut cfg.record {
            if record.is_relative() {
                if let Some(dir) = path.parent() {
                    *record = dir.join(&*record);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply_toml_str(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        self.apply_flat(&flat)
    }

    /// Applies `key=value` strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut flat = BTreeMap::new();
        for item in overrides {
            let (k, v) = item
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", item.as_ref())))?;
            flat.insert(k.trim().to_string(), parse_override_value(v));
        }
        self.apply_flat(&flat)
    }

    fn apply_flat(&mut self, flat: &BTreeMap<String, toml::Value>) -> Result<()> {
        // record fields depend on each other; gather them first
        let mut record_kind: Option<String> = None;
        let mut record_path: Option<PathBuf> = None;
        let (mut amplitude, mut rec_seed, mut freq, mut start_hz, mut end_hz) =
            match &self.record {
                RecordSource::Synthetic { kind, amplitude, seed } => {
                    let (f, s, e) = match kind {
                        SynthKind::Sine { frequency_hz } => (*frequency_hz, 0.5, 20.0),
                        SynthKind::Sweep { start_hz, end_hz } => (2.0, *start_hz, *end_hz),
                        SynthKind::WhiteNoise => (2.0, 0.5, 20.0),
                    };
                    (*amplitude, *seed, f, s, e)
                }
                RecordSource::File { .. } => (3.0, 1, 2.0, 0.5, 20.0),
            };
        let mut record_touched = false;
        let mut override_gammas = self.filter_override.as_ref().map(|o| o.gammas.clone());
        let mut override_bootstrap = self.filter_override.as_ref().map(|o| o.bootstrap);

        for (key, v) in flat {
            let k = key.as_str();
            match k {
                "structure.mass" => self.structure.mass = as_f64(k, v)?,
                "structure.stiffness" => self.structure.stiffness = as_f64(k, v)?,
                "structure.damping" => self.structure.damping = as_f64(k, v)?,
                "record.path" => {
                    record_path = Some(PathBuf::from(as_str(k, v)?));
                    record_touched = true;
                }
                "record.kind" => {
                    record_kind = Some(as_str(k, v)?.to_string());
                    record_touched = true;
                }
                "record.amplitude" => {
                    amplitude = as_f64(k, v)?;
                    record_touched = true;
                }
                "record.seed" => {
                    rec_seed = as_usize(k, v)? as u64;
                    record_touched = true;
                }
                "record.frequency_hz" => {
                    freq = as_f64(k, v)?;
                    record_touched = true;
                }
                "record.start_hz" => {
                    start_hz = as_f64(k, v)?;
                    record_touched = true;
                }
                "record.end_hz" => {
                    end_hz = as_f64(k, v)?;
                    record_touched = true;
                }
                "delay.seconds" => self.delay_seconds = as_f64(k, v)?,
                "delay.target" => {
                    self.delay_target = match as_str(k, v)? {
                        "force" => DelayTarget::Force,
                        "force_and_ground" => DelayTarget::ForceAndGround,
                        other => return Err(Error::Config(format!("{k}: unknown target {other:?}"))),
                    }
                }
                "method" => self.method = Method::parse(as_str(k, v)?)?,
                "training.episodes" => self.episodes = as_usize(k, v)?,
                "training.steps_per_episode" => self.steps_per_episode = as_usize(k, v)?,
                "training.sample_rate_hz" => self.sample_rate_hz = as_f64(k, v)?,
                "training.buffer_capacity" => self.buffer_capacity = as_usize(k, v)?,
                "training.batch_size" => self.batch_size = as_usize(k, v)?,
                "training.target_sync_episodes" => self.target_sync_episodes = as_usize(k, v)?,
                "training.seed" => self.seed = as_usize(k, v)? as u64,
                "training.step_size" => self.step_size = as_f64(k, v)?,
                "training.discount" => self.discount = as_f64(k, v)?,
                "training.eval_every" => self.eval_every = as_usize(k, v)?,
                "training.train_every" => self.train_every = as_usize(k, v)?,
                "epsilon.start" => self.epsilon.start = as_f64(k, v)?,
                "epsilon.min" => self.epsilon.min = as_f64(k, v)?,
                "epsilon.decay_fraction" => self.epsilon.decay_fraction = as_f64(k, v)?,
                "filter.cutoff_percent" => self.filter.cutoff_percent = as_f64(k, v)?,
                "filter.rule" => {
                    self.filter.rule = match as_str(k, v)? {
                        "drop_by" => CutoffRule::DropBy,
                        "drop_to" => CutoffRule::DropTo,
                        other => return Err(Error::Config(format!("{k}: unknown rule {other:?}"))),
                    }
                }
                "filter.probe_force" => self.probe_force = Some(as_f64(k, v)?),
                "filter.periods_after_peak" => self.filter.periods_after_peak = as_f64(k, v)?,
                "filter.max_periods" => self.filter.max_periods = as_f64(k, v)?,
                "filter.override_gammas" => override_gammas = Some(as_f64_list(k, v)?),
                "filter.override_bootstrap" => override_bootstrap = Some(as_f64(k, v)?),
                "reward.force_penalty" => self.force_penalty = as_f64(k, v)?,
                "reward.force_unit" => self.force_unit = as_f64(k, v)?,
                "reward.force_term" => {
                    self.force_term = match as_str(k, v)? {
                        "absolute" => ForceTerm::Absolute,
                        "signed" => ForceTerm::Signed,
                        other => return Err(Error::Config(format!("{k}: unknown term {other:?}"))),
                    }
                }
                "actions.count" => self.n_actions = as_usize(k, v)?,
                "actions.max_force" => self.max_force = as_f64(k, v)?,
                "network.hidden" => {
                    self.hidden_layers = v
                        .as_array()
                        .ok_or_else(|| Error::Config(format!("{k}: expected an array")))?
                        .iter()
                        .map(|x| as_usize(k, x))
                        .collect::<Result<_>>()?
                }
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }

        if record_touched {
            self.record = match (record_path, record_kind.as_deref()) {
                (Some(path), None) => RecordSource::File { path },
                (Some(_), Some(_)) => {
                    return Err(Error::Config(
                        "record.path and record.kind are mutually exclusive".into(),
                    ))
                }
                (None, kind) => {
                    let kind = match kind {
                        Some("sine") => SynthKind::Sine { frequency_hz: freq },
                        Some("sweep") => SynthKind::Sweep { start_hz, end_hz },
                        Some("white_noise") => SynthKind::WhiteNoise,
                        Some(other) => {
                            return Err(Error::Config(format!("record.kind: unknown kind {other:?}")))
                        }
                        None => match &self.record {
                            RecordSource::Synthetic { kind, .. } => match kind {
                                SynthKind::Sine { .. } => SynthKind::Sine { frequency_hz: freq },
                                SynthKind::Sweep { .. } => SynthKind::Sweep { start_hz, end_hz },
                                SynthKind::WhiteNoise => SynthKind::WhiteNoise,
                            },
                            RecordSource::File { .. } => {
                                return Err(Error::Config(
                                    "synthetic record parameters given without record.kind".into(),
                                ))
                            }
                        },
                    };
                    RecordSource::Synthetic {
                        kind,
                        amplitude,
                        seed: rec_seed,
                    }
                }
            };
        }

        self.filter_override = match (override_gammas, override_bootstrap) {
            (Some(gammas), Some(bootstrap)) => Some(FilterOverride { gammas, bootstrap }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "filter.override_gammas and filter.override_bootstrap must be given together"
                        .into(),
                ))
            }
        };
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(crate::agent::STATE_DIM)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(self.n_actions))
            .collect()
    }

    pub fn resolved_probe_force(&self) -> f64 {
        self.probe_force.unwrap_or(self.max_force)
    }

    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.sample_rate_hz > 0.0, "training.sample_rate_hz must be > 0")?;
        check(self.steps_per_episode > 0, "training.steps_per_episode must be > 0")?;
        check(self.batch_size > 0, "training.batch_size must be > 0")?;
        check(self.buffer_capacity >= self.batch_size, "training.buffer_capacity must be >= batch size")?;
        check(self.target_sync_episodes > 0, "training.target_sync_episodes must be > 0")?;
        check(self.eval_every > 0, "training.eval_every must be > 0")?;
        check(self.train_every > 0, "training.train_every must be > 0")?;
        check(self.step_size > 0.0, "training.step_size must be > 0")?;
        check((0.0..=1.0).contains(&self.discount), "training.discount must lie in [0, 1]")?;
        check(self.delay_seconds >= 0.0, "delay.seconds must be >= 0")?;
        check(
            (0.0..=1.0).contains(&self.epsilon.start) && (0.0..=1.0).contains(&self.epsilon.min),
            "epsilon values must lie in [0, 1]",
        )?;
        check(!self.hidden_layers.is_empty(), "network.hidden needs at least one layer")?;
        check(self.force_unit > 0.0 && self.force_penalty >= 0.0, "reward force settings invalid")?;
        Ok(())
    }

    /// Resolved configuration as `(key, value, provenance)` rows.
    pub fn entries(&self) -> Vec<(String, Json, &'static str)> {
        let mut rows: Vec<(&str, Json)> = vec![
            ("structure.mass", json!(self.structure.mass)),
            ("structure.stiffness", json!(self.structure.stiffness)),
            ("structure.damping", json!(self.structure.damping)),
        ];
        match &self.record {
            RecordSource::File { path } => rows.push(("record.path", json!(path.display().to_string()))),
            RecordSource::Synthetic { kind, amplitude, seed } => {
                rows.push(("record.kind", json!(kind.label())));
                match kind {
                    SynthKind::Sine { frequency_hz } => rows.push(("record.frequency_hz", json!(frequency_hz))),
                    SynthKind::Sweep { start_hz, end_hz } => {
                        rows.push(("record.start_hz", json!(start_hz)));
                        rows.push(("record.end_hz", json!(end_hz)));
                    }
                    SynthKind::WhiteNoise => {}
                }
                rows.push(("record.amplitude", json!(amplitude)));
                rows.push(("record.seed", json!(seed)));
            }
        }
        rows.extend([
            ("delay.seconds", json!(self.delay_seconds)),
            ("delay.target", json!(self.delay_target)),
            ("method", json!(self.method.as_str())),
            ("training.episodes", json!(self.episodes)),
            ("training.steps_per_episode", json!(self.steps_per_episode)),
            ("training.sample_rate_hz", json!(self.sample_rate_hz)),
            ("training.buffer_capacity", json!(self.buffer_capacity)),
            ("training.batch_size", json!(self.batch_size)),
            ("training.target_sync_episodes", json!(self.target_sync_episodes)),
            ("training.seed", json!(self.seed)),
            ("training.step_size", json!(self.step_size)),
            ("training.discount", json!(self.discount)),
            ("training.eval_every", json!(self.eval_every)),
            ("training.train_every", json!(self.train_every)),
            ("epsilon.start", json!(self.epsilon.start)),
            ("epsilon.min", json!(self.epsilon.min)),
            ("epsilon.decay_fraction", json!(self.epsilon.decay_fraction)),
            ("filter.cutoff_percent", json!(self.filter.cutoff_percent)),
            ("filter.rule", json!(self.filter.rule)),
            ("filter.probe_force", json!(self.resolved_probe_force())),
            ("filter.periods_after_peak", json!(self.filter.periods_after_peak)),
            ("filter.max_periods", json!(self.filter.max_periods)),
            ("reward.force_penalty", json!(self.force_penalty)),
            ("reward.force_unit", json!(self.force_unit)),
            ("reward.force_term", json!(self.force_term)),
            ("actions.count", json!(self.n_actions)),
            ("actions.max_force", json!(self.max_force)),
            ("network.hidden", json!(self.hidden_layers)),
        ]);
        if let Some(o) = &self.filter_override {
            rows.push(("filter.override_gammas", json!(o.gammas)));
            rows.push(("filter.override_bootstrap", json!(o.bootstrap)));
        }
        rows.into_iter()
            .map(|(k, v)| (k.to_string(), v, provenance(k)))
            .collect()
    }
}
