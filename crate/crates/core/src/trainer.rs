//! Training runs: baseline, filter construction, episode loop, evaluation
//! and artifact output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::agent::{
    argmax, observe, select_action, sync_target, train_minibatch_cached, ActionSpace, ExperienceWindow,
    Observation, ReplayBuffer, StateScale, TargetCache, TargetRule,
};
use crate::config::{ExperimentConfig, Method, RecordSource};
use crate::dynamics::{delay_steps, discretize, simulate_uncontrolled, DiscreteModel, Environment, ResponseSample};
use crate::error::{Error, Result};
use crate::excitation::{load_at2, load_csv, resample, synth, GroundMotion};
use crate::gamma_filter::{probe_and_build, FilterConfig, ReflexiveGamma};
use crate::nn::{QModel, QNetwork, Workspace};
use crate::reward::{reward, Peaks, RewardConfig};

pub const TOOL_NAME: &str = "reflexq";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `(uncontrolled − controlled) / uncontrolled × 100`
pub fn improvement_pct(uncontrolled: f64, controlled: f64) -> f64 {
    (uncontrolled - controlled) / uncontrolled * 100.0
}

/// Reads or synthesises the record, resamples it to the control rate and
/// fits it to the episode length. Returns the record and a SHA-256 digest of
/// its source (file bytes, or the synthesised samples).
pub fn load_record(config: &ExperimentConfig) -> Result<(GroundMotion, String)> {
    let dt = config.dt();
    match &config.record {
        RecordSource::File { path } => {
            let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            let is_at2 = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("at2"));
            let raw = if is_at2 { load_at2(path)? } else { load_csv(path)? };
            let motion = resample(&raw, dt)?.fit_to_steps(config.steps_per_episode)?;
            Ok((motion, digest))
        }
        RecordSource::Synthetic {
            kind,
            amplitude,
            seed,
        } => {
            let duration = config.steps_per_episode as f64 * dt;
            let motion = synth(*kind, duration, dt, *amplitude, *seed)?
                .fit_to_steps(config.steps_per_episode)?;
            let mut hasher = Sha256::new();
            for s in &motion.samples {
                hasher.update(s.to_le_bytes());
            }
            Ok((motion, hex::encode(hasher.finalize())))
        }
    }
}

/// Everything fixed before the first episode.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: DiscreteModel,
    pub motion: GroundMotion,
    pub record_digest: String,
    pub delay_steps: usize,
    pub uncontrolled_trace: Vec<ResponseSample>,
    pub baseline: Peaks,
    pub reward: RewardConfig,
    pub scale: StateScale,
    pub actions: ActionSpace,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let model = discretize(config.structure, config.dt())?;
    let (motion, record_digest) = load_record(config)?;
    let uncontrolled_trace = simulate_uncontrolled(&model, &motion)?;
    let baseline = Peaks::of(&uncontrolled_trace);
    let reward = RewardConfig {
        force_penalty: config.force_penalty,
        force_unit: config.force_unit,
        force_term: config.force_term,
        ..RewardConfig::from_peaks(baseline)?
    };
    reward.validate()?;
    let scale = StateScale::from_peaks(&baseline, motion.peak());
    Ok(Prepared {
        delay_steps: delay_steps(config.delay_seconds, config.dt())?,
        actions: ActionSpace::new(config.n_actions, config.max_force)?,
        model,
        motion,
        record_digest,
        uncontrolled_trace,
        baseline,
        reward,
        scale,
    })
}

/// Target rule for the configured method, plus the filter and probe response
/// when one was built.
pub fn target_rule(
    config: &ExperimentConfig,
    prepared: &Prepared,
) -> Result<(TargetRule, Option<ReflexiveGamma>, Option<Vec<f64>>)> {
    match config.method {
        Method::Original => Ok((TargetRule::OneStep { discount: config.discount }, None, None)),
        Method::Enhanced => {
            if let Some(o) = &config.filter_override {
                let filter = ReflexiveGamma::from_weights(o.gammas.clone(), o.bootstrap, config.dt())?;
                return Ok((TargetRule::Filtered(filter.clone()), Some(filter), None));
            }
            let fcfg = FilterConfig {
                probe_force: config.resolved_probe_force(),
                ..config.filter
            };
            let (response, filter) = probe_and_build(&prepared.model, prepared.delay_steps, &fcfg)?;
            Ok((TargetRule::Filtered(filter.clone()), Some(filter), Some(response)))
        }
    }
}

/// Greedy rollout over the record with a frozen network.
pub fn greedy_rollout(
    net: &QNetwork,
    prepared: &Prepared,
    config: &ExperimentConfig,
    scale: &StateScale,
) -> Result<(Vec<ResponseSample>, f64)> {
    let mut env = Environment::new(
        &prepared.model,
        &prepared.motion,
        prepared.delay_steps,
        config.delay_target,
    )?;
    let mut ws = Workspace::default();
    let mut total = 0.0;
    while !env.is_done() {
        let state = observe(env.history(), scale);
        let action = argmax(net.forward_with(&mut ws, &state)?);
        let sample = env.step(prepared.actions.force(action))?;
        total += reward(&sample, &prepared.reward);
    }
    let steps = env.steps_taken().max(1) as f64;
    Ok((env.into_trace(), total / steps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub trace: Vec<ResponseSample>,
    pub controlled: Peaks,
    pub uncontrolled: Peaks,
    pub mean_reward: f64,
}

impl Evaluation {
    /// Improvement % for displacement, velocity and acceleration.
    pub fn improvement(&self) -> [f64; 3] {
        [
            improvement_pct(self.uncontrolled.displacement, self.controlled.displacement),
            improvement_pct(self.uncontrolled.velocity, self.controlled.velocity),
            improvement_pct(self.uncontrolled.acceleration, self.controlled.acceleration),
        ]
    }
}

fn evaluate_prepared(
    net: &QNetwork,
    prepared: &Prepared,
    config: &ExperimentConfig,
    scale: &StateScale,
) -> Result<Evaluation> {
    let (trace, mean_reward) = greedy_rollout(net, prepared, config, scale)?;
    Ok(Evaluation {
        controlled: Peaks::of(&trace),
        uncontrolled: prepared.baseline,
        trace,
        mean_reward,
    })
}

/// Greedy evaluation of a checkpoint on the configured scenario.
pub fn evaluate(model: &QModel, config: &ExperimentConfig) -> Result<Evaluation> {
    let prepared = prepare(config)?;
    let sizes = model.net.layer_sizes();
    if model.net.input_dim() != crate::agent::STATE_DIM || model.net.n_actions() != config.n_actions {
        return Err(Error::InvalidParameters(format!(
            "model layers {sizes:?} do not fit {} inputs and {} actions",
            crate::agent::STATE_DIM,
            config.n_actions
        )));
    }
    let scale: Observation = model
        .input_scale
        .as_slice()
        .try_into()
        .map_err(|_| Error::Checkpoint("input scale has the wrong length".into()))?;
    evaluate_prepared(&model.net, &prepared, config, &StateScale(scale))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub peaks: Peaks,
    pub improvement: [f64; 3],
    pub mean_reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub mean_td_error: Option<f64>,
    pub updates: usize,
    pub eval: Option<EvalSummary>,
}

const LOG_COLUMNS: [&str; 12] = [
    "episode",
    "epsilon",
    "mean_reward",
    "mean_td_error",
    "updates",
    "eval_peak_displacement",
    "eval_peak_velocity",
    "eval_peak_acceleration",
    "eval_improvement_displacement",
    "eval_improvement_velocity",
    "eval_improvement_acceleration",
    "eval_mean_reward",
];

/// Append-only per-episode log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// `key=value` lines written as `#` comments ahead of the table.
    pub header: Vec<(String, String)>,
    pub records: Vec<EpisodeRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub fn push(&mut self, record: EpisodeRecord) {
        self.records.push(record);
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(&LOG_COLUMNS.join(","));
        out.push('\n');
        for r in &self.records {
            let e = r.eval;
            let fields = [
                r.episode.to_string(),
                r.epsilon.to_string(),
                r.mean_reward.to_string(),
                opt(r.mean_td_error),
                r.updates.to_string(),
                opt(e.map(|e| e.peaks.displacement)),
                opt(e.map(|e| e.peaks.velocity)),
                opt(e.map(|e| e.peaks.acceleration)),
                opt(e.map(|e| e.improvement[0])),
                opt(e.map(|e| e.improvement[1])),
                opt(e.map(|e| e.improvement[2])),
                opt(e.map(|e| e.mean_reward)),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
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
        let mut log = TrainingLog::default();
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    log.header.push((k.to_string(), v.to_string()));
                }
            } else if !line.trim().is_empty() {
                rows.push((i as u64 + 1, line));
            }
        }
        let parse_err = |line: u64, message: String| Error::Parse {
            path: origin.into(),
            line,
            message,
        };
        let mut rows = rows.into_iter();
        match rows.next() {
            Some((_, h)) if h == LOG_COLUMNS.join(",") => {}
            Some((line, h)) => return Err(parse_err(line, format!("unexpected header {h:?}"))),
            None => return Err(parse_err(1, "missing header".into())),
        }
        for (line, row) in rows {
            let f: Vec<&str> = row.split(',').collect();
            if f.len() != LOG_COLUMNS.len() {
                return Err(parse_err(line, format!("expected {} fields", LOG_COLUMNS.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))
            };
            let maybe = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            let int = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| parse_err(line, format!("bad integer {s:?}")))
            };
            let eval = match maybe(f[5])? {
                None => None,
                Some(d) => Some(EvalSummary {
                    peaks: Peaks {
                        displacement: d,
                        velocity: num(f[6])?,
                        acceleration: num(f[7])?,
                    },
                    improvement: [num(f[8])?, num(f[9])?, num(f[10])?],
                    mean_reward: num(f[11])?,
                }),
            };
            log.records.push(EpisodeRecord {
                episode: int(f[0])?,
                epsilon: num(f[1])?,
                mean_reward: num(f[2])?,
                mean_td_error: maybe(f[3])?,
                updates: int(f[4])?,
                eval,
            });
        }
        Ok(log)
    }
}

#[derive(Clone, Debug)]
pub struct BestSnapshot {
    pub episode: usize,
    pub evaluation: Evaluation,
    pub net: QNetwork,
}

/// Single training run. Owns its buffer, networks and RNG.
pub struct Trainer {
    pub config: ExperimentConfig,
    pub prepared: Prepared,
    pub rule: TargetRule,
    pub filter: Option<ReflexiveGamma>,
    pub probe_response: Option<Vec<f64>>,
    pub net: QNetwork,
    pub target_net: QNetwork,
    pub buffer: ReplayBuffer,
    cache: TargetCache,
    pub log: TrainingLog,
    pub best: Option<BestSnapshot>,
    rng: ChaCha8Rng,
    ws: Workspace,
    episodes_done: usize,
    global_step: usize,
    started: Instant,
    started_utc: chrono::DateTime<chrono::Utc>,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let started = Instant::now();
        let started_utc = chrono::Utc::now();
        let prepared = prepare(&config)?;
        let (rule, filter, probe_response) = target_rule(&config, &prepared)?;
        let net = QNetwork::init(&config.layer_sizes(), config.seed)?;
        let target_net = net.clone();
        let buffer = ReplayBuffer::new(config.buffer_capacity)?;
        // separate stream from network initialisation
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ac7104);
        log::info!(
            "{} run: delay {} steps, {} episodes of {} steps, uniform replay sampling, per-example SGD",
            config.method.as_str(),
            prepared.delay_steps,
            config.episodes,
            prepared.motion.len()
        );
        if let Some(f) = &filter {
            log::info!("filter: {} weights, peak at {}, bootstrap {}", f.len(), f.peak_index(), f.bootstrap_gamma);
        }
        let mut log = TrainingLog::default();
        log.header = log_header(&config, &prepared, filter.as_ref());
        Ok(Self {
            config,
            prepared,
            rule,
            filter,
            probe_response,
            net,
            target_net,
            buffer,
            cache: TargetCache::default(),
            log,
            best: None,
            rng,
            ws: Workspace::default(),
            episodes_done: 0,
            global_step: 0,
            started,
            started_utc,
        })
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// Runs all remaining episodes.
    pub fn train(&mut self) -> Result<()> {
        while self.episodes_done < self.config.episodes {
            self.run_episode()?;
        }
        Ok(())
    }

    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let episode = self.episodes_done;
        let cfg = &self.config;
        let prepared = &self.prepared;
        let epsilon = cfg.epsilon.at(episode, cfg.episodes);
        let window_len = self.rule.window_len();
        let mut env = Environment::new(&prepared.model, &prepared.motion, prepared.delay_steps, cfg.delay_target)?;
        let n_steps = prepared.motion.len();
        let mut states: Vec<Observation> = Vec::with_capacity(n_steps + 1);
        let mut actions: Vec<usize> = Vec::with_capacity(n_steps);
        let mut rewards: Vec<f64> = Vec::with_capacity(n_steps);
        states.push(observe(env.history(), &prepared.scale));
        let mut td_total = 0.0;
        let mut updates = 0usize;

        while !env.is_done() {
            let t = actions.len();
            let action = select_action(&self.net, &mut self.ws, &states[t], epsilon, &mut self.rng)?;
            let sample = env.step(prepared.actions.force(action))?;
            rewards.push(reward(&sample, &prepared.reward));
            states.push(observe(env.history(), &prepared.scale));
            actions.push(action);
            if t + 1 >= window_len {
                let t0 = t + 1 - window_len;
                let slot = self.buffer.push(ExperienceWindow {
                    state: states[t0],
                    action: actions[t0],
                    rewards: rewards[t0..t0 + window_len].to_vec(),
                    next_state: states[t0 + window_len],
                    terminal: false,
                });
                self.cache.invalidate(slot);
            }
            self.global_step += 1;
            if self.buffer.len() >= cfg.batch_size && self.global_step % cfg.train_every == 0 {
                td_total += train_minibatch_cached(
                    &mut self.net,
                    &self.target_net,
                    &self.buffer,
                    &mut self.cache,
                    cfg.batch_size,
                    &self.rule,
                    cfg.step_size,
                    &mut self.rng,
                    &mut self.ws,
                )?;
                updates += 1;
            }
        }
        let end = actions.len();
        for t0 in (end + 1).saturating_sub(window_len)..end {
            let slot = self.buffer.push(ExperienceWindow {
                state: states[t0],
                action: actions[t0],
                rewards: rewards[t0..end].to_vec(),
                next_state: states[end],
                terminal: true,
            });
            self.cache.invalidate(slot);
        }

        self.episodes_done += 1;
        let done = self.episodes_done;
        if done % cfg.target_sync_episodes == 0 {
            sync_target(&self.net, &mut self.target_net);
            self.cache.clear();
        }
        let eval = if done % cfg.eval_every == 0 || done == cfg.episodes {
            let evaluation = evaluate_prepared(&self.net, prepared, cfg, &prepared.scale)?;
            let summary = EvalSummary {
                peaks: evaluation.controlled,
                improvement: evaluation.improvement(),
                mean_reward: evaluation.mean_reward,
            };
            let better = self
                .best
                .as_ref()
                .map_or(true, |b| summary.improvement[0] > b.evaluation.improvement()[0]);
            if better {
                self.best = Some(BestSnapshot {
                    episode: done,
                    evaluation,
                    net: self.net.clone(),
                });
            }
            Some(summary)
        } else {
            None
        };
        let record = EpisodeRecord {
            episode: done,
            epsilon,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len().max(1) as f64,
            mean_td_error: (updates > 0).then(|| td_total / updates as f64),
            updates,
            eval,
        };
        log::debug!(
            "episode {done}: eps {epsilon:.3} reward {:.4} updates {updates}",
            record.mean_reward
        );
        self.log.push(record);
        Ok(record)
    }

    fn model_of(&self, net: &QNetwork) -> QModel {
        QModel {
            net: net.clone(),
            input_scale: self.prepared.scale.0.to_vec(),
        }
    }

    pub fn finish(self) -> RunOutput {
        let final_model = self.model_of(&self.net);
        let best = self.best.as_ref().map(|b| (b.episode, b.evaluation.clone(), self.model_of(&b.net)));
        RunOutput {
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            started_utc: self.started_utc,
            config: self.config,
            prepared: self.prepared,
            filter: self.filter,
            probe_response: self.probe_response,
            log: self.log,
            final_model,
            best,
        }
    }

    /// Writes what exists so far after a failure.
    pub fn write_partial(&self, dir: impl AsRef<Path>, error: &Error) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        self.log.write_csv(dir.join(TRAINING_LOG_FILE))?;
        let path = dir.join("error.txt");
        fs::write(&path, format!("{error}\nafter {} episodes\n", self.episodes_done))
            .map_err(|e| Error::file(&path, e))
    }
}

fn log_header(
    config: &ExperimentConfig,
    prepared: &Prepared,
    filter: Option<&ReflexiveGamma>,
) -> Vec<(String, String)> {
    let mut h = vec![
        ("method".to_string(), config.method.as_str().to_string()),
        ("seed".into(), config.seed.to_string()),
        ("delay_s".into(), config.delay_seconds.to_string()),
        ("delay_steps".into(), prepared.delay_steps.to_string()),
        ("record".into(), prepared.motion.name.clone()),
        ("record_sha256".into(), prepared.record_digest.clone()),
        ("uncontrolled_peak_displacement".into(), prepared.baseline.displacement.to_string()),
        ("uncontrolled_peak_velocity".into(), prepared.baseline.velocity.to_string()),
        ("uncontrolled_peak_acceleration".into(), prepared.baseline.acceleration.to_string()),
    ];
    if let Some(f) = filter {
        h.push(("filter_len".into(), f.len().to_string()));
        h.push(("filter_peak_index".into(), f.peak_index().to_string()));
        h.push(("filter_bootstrap".into(), f.bootstrap_gamma.to_string()));
    }
    h
}

/// Trains to completion.
pub fn run(config: ExperimentConfig) -> Result<RunOutput> {
    let mut trainer = Trainer::new(config)?;
    trainer.train()?;
    Ok(trainer.finish())
}

/// Trains and writes artifacts; on failure the partial log is flushed to
/// `dir` before the error is returned.
pub fn run_to_dir(config: ExperimentConfig, dir: impl AsRef<Path>) -> Result<RunOutput> {
    let dir = dir.as_ref();
    let mut trainer = Trainer::new(config)?;
    if let Err(e) = trainer.train() {
        if let Err(w) = trainer.write_partial(dir, &e) {
            log::error!("could not flush partial log: {w}");
        }
        return Err(e);
    }
    let out = trainer.finish();
    out.write_artifacts(dir)?;
    Ok(out)
}

/// Runs independent configurations on up to `jobs` worker threads. Results
/// come back in input order.
pub fn run_many<F, T>(configs: Vec<ExperimentConfig>, jobs: usize, work: F) -> Vec<Result<T>>
where
    F: Fn(ExperimentConfig) -> Result<T> + Sync,
    T: Send,
{
    let n = configs.len();
    let jobs = jobs.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = work(configs[i].clone());
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .unwrap_or_else(|| Err(Error::InvalidParameters("worker did not finish".into())))
        })
        .collect()
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const EVAL_TRACE_FILE: &str = "eval_trace.csv";
pub const UNCONTROLLED_TRACE_FILE: &str = "uncontrolled_trace.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_TXT_FILE: &str = "summary.txt";
pub const MODEL_FILE: &str = "model.json";
pub const BEST_MODEL_FILE: &str = "best_model.json";
pub const FILTER_FILE: &str = "filter.csv";
pub const PROBE_TRACE_FILE: &str = "probe_trace.csv";

pub const TRACE_COLUMNS: [&str; 6] = ["time", "u", "v", "a", "force", "ground_accel"];

pub fn trace_to_csv_string(trace: &[ResponseSample]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for s in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.time, s.displacement, s.velocity, s.acceleration, s.applied_force, s.ground_accel
        );
    }
    out
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[ResponseSample]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trace_to_csv_string(trace)).map_err(|e| Error::file(path, e))
}

pub fn load_trace_csv(path: impl AsRef<Path>) -> Result<Vec<ResponseSample>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: origin.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let v: Vec<f64> = row
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: origin.clone(),
                line,
                message: e.to_string(),
            })?;
        if v.len() != TRACE_COLUMNS.len() {
            return Err(Error::Parse {
                path: origin,
                line,
                message: format!("expected {} fields", TRACE_COLUMNS.len()),
            });
        }
        out.push(ResponseSample {
            time: v[0],
            displacement: v[1],
            velocity: v[2],
            acceleration: v[3],
            applied_force: v[4],
            ground_accel: v[5],
        });
    }
    Ok(out)
}

pub fn write_series_csv(path: impl AsRef<Path>, column: &str, series: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("step,{column}\n");
    for (i, v) in series.iter().enumerate() {
        let _ = writeln!(out, "{i},{v}");
    }
    fs::write(path, out).map_err(|e| Error::file(path, e))
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub delay_s: f64,
    pub metric: String,
    pub uncontrolled: f64,
    pub controlled: f64,
    pub improvement_pct: f64,
}

pub const METRICS: [&str; 3] = ["peak_displacement", "peak_velocity", "peak_acceleration"];

pub fn summary_rows(method: &str, delay_s: f64, uncontrolled: &Peaks, controlled: &Peaks) -> Vec<SummaryRow> {
    let pairs = [
        (uncontrolled.displacement, controlled.displacement),
        (uncontrolled.velocity, controlled.velocity),
        (uncontrolled.acceleration, controlled.acceleration),
    ];
    METRICS
        .iter()
        .zip(pairs)
        .map(|(m, (u, c))| SummaryRow {
            method: method.to_string(),
            delay_s,
            metric: m.to_string(),
            uncontrolled: u,
            controlled: c,
            improvement_pct: improvement_pct(u, c),
        })
        .collect()
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    // serde would use a shorter float format for integral values; keep the
    // shortest round-trip form explicitly
    w.write_record(["method", "delay_s", "metric", "uncontrolled", "controlled", "improvement_pct"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.delay_s.to_string(),
            r.metric.clone(),
            r.uncontrolled.to_string(),
            r.controlled.to_string(),
            r.improvement_pct.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn load_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: origin.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: SummaryRow = row.map_err(|e| Error::Parse {
            path: origin.clone(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Fixed-width table with displacement in cm, as in published tables.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>8} {:<24} {:>14} {:>14} {:>10}",
        "method", "delay_s", "metric", "uncontrolled", "controlled", "impr_%"
    );
    for r in rows {
        let (scale, unit) = match r.metric.as_str() {
            "peak_displacement" => (100.0, "cm"),
            "peak_velocity" => (1.0, "m/s"),
            "peak_acceleration" => (1.0, "m/s2"),
            _ => (1.0, ""),
        };
        let _ = writeln!(
            out,
            "{:<10} {:>8} {:<24} {:>14} {:>14} {:>10.2}",
            r.method,
            r.delay_s,
            format!("{} [{unit}]", r.metric),
            format!("{:.4}", r.uncontrolled * scale),
            format!("{:.4}", r.controlled * scale),
            r.improvement_pct
        );
    }
    out
}

/// Finished run and everything needed to write its artifacts.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub prepared: Prepared,
    pub filter: Option<ReflexiveGamma>,
    pub probe_response: Option<Vec<f64>>,
    pub log: TrainingLog,
    pub final_model: QModel,
    /// Episode, evaluation and network of the snapshot with the largest
    /// displacement improvement.
    pub best: Option<(usize, Evaluation, QModel)>,
    pub wall_clock_seconds: f64,
    pub started_utc: chrono::DateTime<chrono::Utc>,
}

impl RunOutput {
    pub fn summary(&self) -> Vec<SummaryRow> {
        match &self.best {
            Some((_, eval, _)) => summary_rows(
                self.config.method.as_str(),
                self.config.delay_seconds,
                &eval.uncontrolled,
                &eval.controlled,
            ),
            None => Vec::new(),
        }
    }

    /// Best displacement improvement over all evaluation snapshots.
    pub fn best_improvement(&self) -> Option<[f64; 3]> {
        self.best.as_ref().map(|(_, e, _)| e.improvement())
    }

    pub fn manifest(&self, artifacts: &[&str]) -> serde_json::Value {
        let cfg = &self.config;
        let entries: Vec<_> = cfg
            .entries()
            .into_iter()
            .map(|(k, v, p)| json!({"key": k, "value": v, "provenance": p}))
            .collect();
        let assumed: Vec<_> = cfg
            .entries()
            .into_iter()
            .filter(|(_, _, p)| *p == "assumed")
            .map(|(k, _, _)| k)
            .collect();
        let record_path = match &cfg.record {
            RecordSource::File { path } => Some(path.display().to_string()),
            RecordSource::Synthetic { .. } => None,
        };
        json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "started_utc": self.started_utc.to_rfc3339(),
            "wall_clock_seconds": self.wall_clock_seconds,
            "method": cfg.method.as_str(),
            "seed": cfg.seed,
            "delay_s": cfg.delay_seconds,
            "delay_steps": self.prepared.delay_steps,
            "structure": cfg.structure,
            "record": {
                "name": self.prepared.motion.name,
                "path": record_path,
                "sha256": self.prepared.record_digest,
                "samples": self.prepared.motion.len(),
                "dt": self.prepared.motion.dt,
            },
            "uncontrolled_peaks": self.prepared.baseline,
            "filter": self.filter.as_ref().map(|f| json!({
                "len": f.len(),
                "peak_index": f.peak_index(),
                "leading_zeros": f.leading_zeros(),
                "bootstrap": f.bootstrap_gamma,
            })),
            "best_episode": self.best.as_ref().map(|b| b.0),
            "config": entries,
            "assumptions": assumed,
            "notes": [
                "replay minibatches are sampled uniformly",
                "one gradient step per sampled window, in draw order",
            ],
            "artifacts": artifacts,
        })
    }

    /// Writes all artifacts into `dir`; returns the file names written.
    pub fn write_artifacts(&self, dir: impl AsRef<Path>) -> Result<Vec<String>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut files: Vec<&str> = Vec::new();
        self.log.write_csv(dir.join(TRAINING_LOG_FILE))?;
        files.push(TRAINING_LOG_FILE);
        write_trace_csv(dir.join(UNCONTROLLED_TRACE_FILE), &self.prepared.uncontrolled_trace)?;
        files.push(UNCONTROLLED_TRACE_FILE);
        let eval_trace: &[ResponseSample] = self.best.as_ref().map_or(&[], |b| &b.1.trace);
        write_trace_csv(dir.join(EVAL_TRACE_FILE), eval_trace)?;
        files.push(EVAL_TRACE_FILE);
        let rows = self.summary();
        write_summary_csv(dir.join(SUMMARY_CSV_FILE), &rows)?;
        files.push(SUMMARY_CSV_FILE);
        let txt = dir.join(SUMMARY_TXT_FILE);
        let mut text = format_summary_table(&rows);
        if let Some((episode, eval, _)) = &self.best {
            let _ = writeln!(text, "\nbest snapshot: episode {episode}, mean reward {}", eval.mean_reward);
        }
        fs::write(&txt, text).map_err(|e| Error::file(&txt, e))?;
        files.push(SUMMARY_TXT_FILE);
        self.final_model.save(dir.join(MODEL_FILE))?;
        files.push(MODEL_FILE);
        if let Some((_, _, model)) = &self.best {
            model.save(dir.join(BEST_MODEL_FILE))?;
            files.push(BEST_MODEL_FILE);
        }
        if let Some(f) = &self.filter {
            f.write_csv(dir.join(FILTER_FILE))?;
            files.push(FILTER_FILE);
        }
        if let Some(p) = &self.probe_response {
            write_series_csv(dir.join(PROBE_TRACE_FILE), "abs_displacement", p)?;
            files.push(PROBE_TRACE_FILE);
        }
        files.push(MANIFEST_FILE);
        let manifest = self.manifest(&files);
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::file(&path, e))?;
        Ok(files.into_iter().map(String::from).collect())
    }
}

/// Directory for one run of a fan-out.
pub fn run_dir(root: &Path, config: &ExperimentConfig) -> PathBuf {
    root.join(format!(
        "{}_delay{}_seed{}",
        config.method.as_str(),
        config.delay_seconds,
        config.seed
    ))
}
