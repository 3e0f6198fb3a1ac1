//! Action selection, experience replay and Q-targets for the one-step and
//! filtered learning rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ResponseSample;
use crate::error::{Error, Result};
use crate::gamma_filter::ReflexiveGamma;
use crate::nn::{QNetwork, Workspace};
use crate::reward::Peaks;

/// `{u_t, u_{t−1}, u_{t−2}, v_t, a_t, ẍg_t}`
pub const STATE_DIM: usize = 6;

pub type Observation = [f64; STATE_DIM];

/// Symmetric uniform grid of actuator forces including zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSpace {
    forces: Vec<f64>,
    max_force: f64,
}

impl ActionSpace {
    pub fn new(n_actions: usize, max_force: f64) -> Result<Self> {
        if n_actions == 0 || n_actions % 2 == 0 {
            return Err(Error::InvalidParameters(format!(
                "action count must be odd, got {n_actions}"
            )));
        }
        if !(max_force >= 0.0 && max_force.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "max force must be non-negative, got {max_force}"
            )));
        }
        let half = (n_actions / 2) as i64;
        let forces = (-half..=half)
            .map(|i| {
                if half == 0 {
                    0.0
                } else {
                    max_force * i as f64 / half as f64
                }
            })
            .collect();
        Ok(Self { forces, max_force })
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn forces(&self) -> &[f64] {
        &self.forces
    }

    pub fn force(&self, index: usize) -> f64 {
        self.forces[index]
    }

    pub fn max_force(&self) -> f64 {
        self.max_force
    }
}

/// Divisors bringing each state component to order one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateScale(pub Observation);

impl StateScale {
    pub fn from_peaks(peaks: &Peaks, ground_peak: f64) -> Self {
        let nz = |v: f64| if v > 0.0 { v } else { 1.0 };
        let u = nz(peaks.displacement);
        StateScale([
            u,
            u,
            u,
            nz(peaks.velocity),
            nz(peaks.acceleration),
            nz(ground_peak),
        ])
    }

    pub fn identity() -> Self {
        StateScale([1.0; STATE_DIM])
    }
}

/// Normalised observation built from the latest three samples of `history`.
/// Displacements before the start of the record count as zero.
pub fn observe(history: &[ResponseSample], scale: &StateScale) -> Observation {
    let n = history.len();
    let back = |k: usize| {
        if n > k {
            history[n - 1 - k].displacement
        } else {
            0.0
        }
    };
    let last = history.last().copied().unwrap_or_default();
    let raw = [
        back(0),
        back(1),
        back(2),
        last.velocity,
        last.acceleration,
        last.ground_accel,
    ];
    let mut out = [0.0; STATE_DIM];
    for ((o, r), s) in out.iter_mut().zip(raw).zip(scale.0) {
        *o = r / s;
    }
    out
}

/// Replay record spanning the rewards that follow one action.
///
/// `rewards[j]` is the reward at the end of the `(j+1)`-th step after the
/// action and `next_state` is the observation after the last of them.
/// Windows cut short by the end of an episode are marked terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceWindow {
    pub state: Observation,
    pub action: usize,
    pub rewards: Vec<f64>,
    pub next_state: Observation,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; the oldest window is evicted first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ExperienceWindow>,
    oldest: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameters("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            oldest: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `window`, evicting the oldest when full; returns its slot.
    pub fn push(&mut self, window: ExperienceWindow) -> usize {
        if self.items.len() < self.capacity {
            self.items.push(window);
            self.items.len() - 1
        } else {
            let slot = self.oldest;
            self.items[slot] = window;
            self.oldest = (self.oldest + 1) % self.capacity;
            slot
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &ExperienceWindow> {
        self.items[self.oldest..]
            .iter()
            .chain(&self.items[..self.oldest])
    }

    /// Uniform sample without replacement, in draw order.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&ExperienceWindow>> {
        Ok(self
            .sample_slots(batch_size, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    /// Slot indices of a uniform sample without replacement.
    pub fn sample_slots<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size > self.items.len() || batch_size == 0 {
            return Err(Error::InsufficientBuffer {
                have: self.items.len(),
                need: batch_size.max(1),
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch_size).into_vec())
    }

    pub fn slot(&self, index: usize) -> &ExperienceWindow {
        &self.items[index]
    }
}

/// Memoised `max Q(s')` per buffer slot under one frozen target network.
/// Clear it whenever the target network changes and invalidate a slot
/// whenever it is overwritten.
#[derive(Clone, Debug, Default)]
pub struct TargetCache {
    values: Vec<Option<f64>>,
}

impl TargetCache {
    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = None);
    }

    pub fn invalidate(&mut self, slot: usize) {
        if let Some(v) = self.values.get_mut(slot) {
            *v = None;
        }
    }

    fn get_or_insert(&mut self, slot: usize, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if slot >= self.values.len() {
            self.values.resize(slot + 1, None);
        }
        match self.values[slot] {
            Some(v) => Ok(v),
            None => {
                let v = compute()?;
                self.values[slot] = Some(v);
                Ok(v)
            }
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice. One uniform draw decides exploration; a second picks
/// the random action.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    ws: &mut Workspace,
    state: &Observation,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..net.n_actions()))
    } else {
        Ok(argmax(net.forward_with(ws, state)?))
    }
}

/// Linear decay from `start` to `min` over the first `decay_fraction` of
/// training, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            min: 0.1,
            decay_fraction: 0.8,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, total_episodes: usize) -> f64 {
        let span = self.decay_fraction * total_episodes as f64;
        let e = episode as f64;
        if span <= 0.0 || e >= span {
            self.min
        } else {
            self.start + (self.min - self.start) * e / span
        }
    }
}

pub fn epsilon_schedule(episode: usize, total_episodes: usize) -> f64 {
    EpsilonSchedule::default().at(episode, total_episodes)
}

/// How Q-targets are formed from a window.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetRule {
    /// `r + γ·max Q(s')`
    OneStep { discount: f64 },
    /// `Σ γ_j·r_j + γ_{n+1}·max Q(s')`
    Filtered(ReflexiveGamma),
}

impl TargetRule {
    /// Number of rewards a complete window carries.
    pub fn window_len(&self) -> usize {
        match self {
            TargetRule::OneStep { .. } => 1,
            TargetRule::Filtered(f) => f.len(),
        }
    }
}

fn max_q(net: &QNetwork, ws: &mut Workspace, state: &Observation) -> Result<f64> {
    let q = net.forward_with(ws, state)?;
    Ok(q[argmax(q)])
}

pub fn standard_target(
    target_net: &QNetwork,
    window: &ExperienceWindow,
    discount: f64,
) -> Result<f64> {
    standard_target_with(target_net, &mut Workspace::default(), window, discount)
}

fn standard_target_with(
    target_net: &QNetwork,
    ws: &mut Workspace,
    window: &ExperienceWindow,
    discount: f64,
) -> Result<f64> {
    if window.rewards.len() != 1 {
        return Err(Error::LengthMismatch {
            expected: 1,
            found: window.rewards.len(),
        });
    }
    let r = window.rewards[0];
    if window.terminal {
        return Ok(r);
    }
    Ok(r + discount * max_q(target_net, ws, &window.next_state)?)
}

pub fn enhanced_target_for_window(
    target_net: &QNetwork,
    window: &ExperienceWindow,
    filter: &ReflexiveGamma,
) -> Result<f64> {
    enhanced_target_with(target_net, &mut Workspace::default(), window, filter)
}

fn enhanced_target_with(
    target_net: &QNetwork,
    ws: &mut Workspace,
    window: &ExperienceWindow,
    filter: &ReflexiveGamma,
) -> Result<f64> {
    if window.terminal {
        return filter.weighted_rewards(&window.rewards);
    }
    let q = max_q(target_net, ws, &window.next_state)?;
    filter.enhanced_target(&window.rewards, q)
}

pub fn target_for_window(
    target_net: &QNetwork,
    ws: &mut Workspace,
    window: &ExperienceWindow,
    rule: &TargetRule,
) -> Result<f64> {
    match rule {
        TargetRule::OneStep { discount } => standard_target_with(target_net, ws, window, *discount),
        TargetRule::Filtered(filter) => enhanced_target_with(target_net, ws, window, filter),
    }
}

/// Same arithmetic as [`target_for_window`] with `max Q(s')` supplied.
fn target_with_max_q(window: &ExperienceWindow, rule: &TargetRule, q: f64) -> Result<f64> {
    match rule {
        TargetRule::OneStep { discount } => {
            if window.rewards.len() != 1 {
                return Err(Error::LengthMismatch {
                    expected: 1,
                    found: window.rewards.len(),
                });
            }
            Ok(window.rewards[0] + discount * q)
        }
        TargetRule::Filtered(filter) => filter.enhanced_target(&window.rewards, q),
    }
}

/// Samples a minibatch and takes one gradient step per window, in draw
/// order. Returns the mean squared TD error measured before each step.
#[allow(clippy::too_many_arguments)]
pub fn train_minibatch<R: Rng + ?Sized>(
    net: &mut QNetwork,
    target_net: &QNetwork,
    buffer: &ReplayBuffer,
    batch_size: usize,
    rule: &TargetRule,
    step_size: f64,
    rng: &mut R,
    ws: &mut Workspace,
) -> Result<f64> {
    train_minibatch_cached(
        net,
        target_net,
        buffer,
        &mut TargetCache::default(),
        batch_size,
        rule,
        step_size,
        rng,
        ws,
    )
}

/// [`train_minibatch`] reusing bootstrap values from `cache`. Results are
/// identical as long as the cache contract is kept.
#[allow(clippy::too_many_arguments)]
pub fn train_minibatch_cached<R: Rng + ?Sized>(
    net: &mut QNetwork,
    target_net: &QNetwork,
    buffer: &ReplayBuffer,
    cache: &mut TargetCache,
    batch_size: usize,
    rule: &TargetRule,
    step_size: f64,
    rng: &mut R,
    ws: &mut Workspace,
) -> Result<f64> {
    let slots = buffer.sample_slots(batch_size, rng)?;
    let mut total = 0.0;
    for &slot in &slots {
        let window = buffer.slot(slot);
        let target = if window.terminal {
            target_for_window(target_net, ws, window, rule)?
        } else {
            let q = cache.get_or_insert(slot, || max_q(target_net, ws, &window.next_state))?;
            target_with_max_q(window, rule, q)?
        };
        total += net.train_on_target_with(ws, &window.state, window.action, target, step_size)?;
    }
    Ok(total / slots.len() as f64)
}

pub fn sync_target(net: &QNetwork, target_net: &mut QNetwork) {
    target_net.clone_from(net);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window(tag: f64) -> ExperienceWindow {
        ExperienceWindow {
            state: [tag; STATE_DIM],
            action: 0,
            rewards: vec![tag],
            next_state: [0.0; STATE_DIM],
            terminal: false,
        }
    }

    /// Linear net whose outputs are exactly its biases.
    fn constant_net(q: &[f64]) -> QNetwork {
        QNetwork::from_parameters(
            &[STATE_DIM, q.len()],
            vec![vec![0.0; STATE_DIM * q.len()]],
            vec![q.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn action_grid() {
        let a = ActionSpace::new(5, 10_000.0).unwrap();
        assert_eq!(a.forces(), &[-10_000.0, -5_000.0, 0.0, 5_000.0, 10_000.0]);
        assert!(ActionSpace::new(4, 1.0).is_err());
        assert_eq!(ActionSpace::new(1, 5.0).unwrap().forces(), &[0.0]);
        let d = ActionSpace::new(11, 10_000.0).unwrap();
        assert!(d.forces().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.force(5), 0.0);
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ws = Workspace::default();
        let s = [0.0; STATE_DIM];
        let net = constant_net(&[1.0, 3.0, 2.0]);
        assert_eq!(select_action(&net, &mut ws, &s, 0.0, &mut rng).unwrap(), 1);
        let net = constant_net(&[2.0, 2.0, 1.0]);
        assert_eq!(select_action(&net, &mut ws, &s, 0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ws = Workspace::default();
        let net = constant_net(&[0.0; 11]);
        let mut counts = [0usize; 11];
        let draws = 10_000;
        for _ in 0..draws {
            counts[select_action(&net, &mut ws, &[0.0; STATE_DIM], 1.0, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 11.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 10 degrees of freedom, p = 0.001
        assert!(chi2 < 29.59, "chi2 = {chi2}");
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_schedule(0, 1000), 1.0);
        assert_eq!(epsilon_schedule(1000, 1000), 0.1);
        assert!((epsilon_schedule(400, 1000) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_schedule(900, 1000), 0.1);
    }

    #[test]
    fn standard_target_examples() {
        let net = constant_net(&[2.0, -1.0]);
        let w = ExperienceWindow {
            rewards: vec![1.0],
            ..window(0.0)
        };
        assert!((standard_target(&net, &w, 0.99).unwrap() - 2.98).abs() < 1e-12);
        assert_eq!(standard_target(&net, &w, 0.0).unwrap(), 1.0);
        let t = ExperienceWindow {
            terminal: true,
            ..w.clone()
        };
        assert_eq!(standard_target(&net, &t, 0.99).unwrap(), 1.0);
        let long = ExperienceWindow {
            rewards: vec![1.0, 2.0],
            ..w
        };
        assert!(standard_target(&net, &long, 0.99).is_err());
    }

    #[test]
    fn enhanced_target_examples() {
        let net = constant_net(&[4.0, 10.0]);
        let w = ExperienceWindow {
            rewards: vec![0.7],
            ..window(0.3)
        };
        let degenerate = ReflexiveGamma::one_step(0.99, 0.01);
        assert_eq!(
            enhanced_target_for_window(&net, &w, &degenerate).unwrap(),
            standard_target(&net, &w, 0.99).unwrap()
        );
        let f = ReflexiveGamma::from_weights(vec![0.0, 0.5, 1.0], 0.8, 0.01).unwrap();
        let t = ExperienceWindow {
            rewards: vec![3.0, 2.0],
            terminal: true,
            ..w.clone()
        };
        assert_eq!(enhanced_target_for_window(&net, &t, &f).unwrap(), 1.0);
        let z = ReflexiveGamma::from_weights(vec![0.0; 3], 0.8, 0.01).unwrap();
        let full = ExperienceWindow {
            rewards: vec![3.0, 2.0, 5.0],
            ..w.clone()
        };
        assert_eq!(enhanced_target_for_window(&net, &full, &z).unwrap(), 8.0);
        assert!(enhanced_target_for_window(&net, &w, &f).is_err());
    }

    #[test]
    fn ring_eviction_keeps_latest() {
        let mut buf = ReplayBuffer::new(5).unwrap();
        for i in 0..13 {
            buf.push(window(i as f64));
        }
        let tags: Vec<f64> = buf.iter().map(|w| w.rewards[0]).collect();
        assert_eq!(tags, vec![8.0, 9.0, 10.0, 11.0, 12.0]);
    }

    #[test]
    fn sampling_without_replacement() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        for i in 0..60 {
            buf.push(window(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = buf.sample(50, &mut rng).unwrap();
        let mut tags: Vec<i64> = batch.iter().map(|w| w.rewards[0] as i64).collect();
        tags.sort();
        tags.dedup();
        assert_eq!(tags.len(), 50);
        assert!(matches!(
            buf.sample(61, &mut rng),
            Err(Error::InsufficientBuffer { have: 60, need: 61 })
        ));
    }

    #[test]
    fn matching_targets_leave_net_unchanged() {
        let net0 = QNetwork::init(&[STATE_DIM, 8, 3], 2).unwrap();
        let s = [0.1; STATE_DIM];
        let q = net0.forward(&s).unwrap();
        let discount = 0.5;
        let max_next = q.iter().cloned().fold(f64::MIN, f64::max);
        let w = ExperienceWindow {
            state: s,
            action: 1,
            rewards: vec![q[1] - discount * max_next],
            next_state: s,
            terminal: false,
        };
        let mut buf = ReplayBuffer::new(10).unwrap();
        for _ in 0..10 {
            buf.push(w.clone());
        }
        let mut net = net0.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rule = TargetRule::OneStep { discount };
        let mse = train_minibatch(&mut net, &net0, &buf, 5, &rule, 0.1, &mut rng, &mut Workspace::default()).unwrap();
        assert!(mse < 1e-28);
        for i in 0..net.parameter_count() {
            assert!((net.parameter(i) - net0.parameter(i)).abs() < 1e-14);
        }
    }

    #[test]
    fn repeated_training_reduces_td_error() {
        let target = QNetwork::init(&[STATE_DIM, 16, 16, 3], 1).unwrap();
        let mut net = target.clone();
        let mut buf = ReplayBuffer::new(64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..64 {
            let mut s = [0.0; STATE_DIM];
            for v in s.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            buf.push(ExperienceWindow {
                state: s,
                action: i % 3,
                rewards: vec![(i % 7) as f64 * 0.3],
                next_state: s,
                terminal: true,
            });
        }
        let rule = TargetRule::OneStep { discount: 0.9 };
        let mut ws = Workspace::default();
        let first = train_minibatch(&mut net, &target, &buf, 64, &rule, 0.01, &mut rng, &mut ws).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = train_minibatch(&mut net, &target, &buf, 64, &rule, 0.01, &mut rng, &mut ws).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn minibatch_is_deterministic() {
        let target = QNetwork::init(&[STATE_DIM, 8, 3], 1).unwrap();
        let mut buf = ReplayBuffer::new(30).unwrap();
        for i in 0..30 {
            buf.push(ExperienceWindow {
                action: i % 3,
                ..window(i as f64 * 0.1)
            });
        }
        let rule = TargetRule::OneStep { discount: 0.9 };
        let run = || {
            let mut net = target.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut ws = Workspace::default();
            let e = train_minibatch(&mut net, &target, &buf, 10, &rule, 0.01, &mut rng, &mut ws).unwrap();
            (net, e)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sync_copies_and_is_idempotent() {
        let mut net = QNetwork::init(&[STATE_DIM, 8, 3], 1).unwrap();
        let mut target = net.clone();
        net.train_on_target(&[0.5; STATE_DIM], 1, 5.0, 0.1).unwrap();
        assert_ne!(net, target);
        sync_target(&net, &mut target);
        assert_eq!(net, target);
        sync_target(&net, &mut target);
        assert_eq!(net, target);
    }

    #[test]
    fn greedy_choice_ignores_constant_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ws = Workspace::default();
        for seed in 0..20 {
            let net = QNetwork::init(&[STATE_DIM, 10, 5], seed).unwrap();
            let mut shifted = net.clone();
            shifted.shift_outputs(3.25);
            let s = [0.1 * seed as f64; STATE_DIM];
            assert_eq!(
                select_action(&net, &mut ws, &s, 0.0, &mut rng).unwrap(),
                select_action(&shifted, &mut ws, &s, 0.0, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn observation_uses_three_displacements() {
        let h: Vec<ResponseSample> = (0..4)
            .map(|i| ResponseSample {
                displacement: i as f64,
                velocity: 10.0,
                acceleration: 20.0,
                ground_accel: 30.0,
                ..Default::default()
            })
            .collect();
        let scale = StateScale([1.0, 1.0, 1.0, 2.0, 4.0, 5.0]);
        assert_eq!(observe(&h, &scale), [3.0, 2.0, 1.0, 5.0, 5.0, 6.0]);
        assert_eq!(observe(&h[..1], &scale)[..3], [0.0, 0.0, 0.0]);
    }
}
