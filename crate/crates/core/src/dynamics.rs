//! Discrete-time simulation of the single-degree-of-freedom controlled frame.
//!
//! The equation of motion `m·ü + c·u̇ + k·u = −m·ẍg + f` is written in state-space
//! form `ẋ = A·x + B·v` with `x = [u, u̇]` and `v = [ẍg, f]`, then discretised with
//! an exact zero-order hold. The control force reaches the structure through a
//! [`DelayLine`] that models the action-effect delay.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::GroundMotion;

pub type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mat_vec(a: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

fn mat_inverse(a: &Mat2) -> Option<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// Matrix exponential of a real 2×2 matrix in closed form.
///
/// With `μ = tr(M)/2` and `q = μ² − det(M)` (the squared half-gap between the
/// eigenvalues), `(M − μI)² = q·I`, so
/// `exp(M) = e^μ·(C(q)·I + S(q)·(M − μI))` where `C`, `S` are cosh/sinh-like
/// functions of `√q` that turn into cos/sin for complex eigenvalues.
pub fn expm2(m: &Mat2) -> Mat2 {
    let mu = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let q = mu * mu - det;
    let (c, s) = if q.abs() < 1e-8 {
        (1.0 + q / 2.0 + q * q / 24.0, 1.0 + q / 6.0 + q * q / 120.0)
    } else if q > 0.0 {
        let r = q.sqrt();
        (r.cosh(), r.sinh() / r)
    } else {
        let r = (-q).sqrt();
        (r.cos(), r.sin() / r)
    };
    let e = mu.exp();
    [
        [e * (c + s * (m[0][0] - mu)), e * s * m[0][1]],
        [e * s * m[1][0], e * (c + s * (m[1][1] - mu))],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdofParams {
    /// kg
    pub mass: f64,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
}

impl Default for SdofParams {
    /// The single-story moment frame of the case study.
    fn default() -> Self {
        Self {
            mass: 2000.0,
            stiffness: 7.9e6,
            damping: 2.5e5,
        }
    }
}

impl SdofParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mass.is_finite()
            && self.stiffness.is_finite()
            && self.damping.is_finite()
            && self.mass > 0.0
            && self.stiffness > 0.0
            && self.damping >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "need mass > 0, stiffness > 0, damping >= 0 (got m={}, k={}, c={})",
                self.mass, self.stiffness, self.damping
            )))
        }
    }

    /// Undamped natural circular frequency, 1/s.
    pub fn natural_frequency(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.natural_frequency()
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * (self.stiffness * self.mass).sqrt())
    }

    /// `ü = (−m·ẍg + f − c·u̇ − k·u)/m`
    pub fn acceleration(&self, state: StateVector, force: f64, ground_accel: f64) -> f64 {
        (-self.mass * ground_accel + force
            - self.damping * state.velocity
            - self.stiffness * state.displacement)
            / self.mass
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub displacement: f64,
    pub velocity: f64,
}

impl StateVector {
    pub fn new(displacement: f64, velocity: f64) -> Self {
        Self {
            displacement,
            velocity,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.displacement.is_finite() && self.velocity.is_finite()
    }

    /// `½(k·u² + m·u̇²)`
    pub fn energy(&self, params: &SdofParams) -> f64 {
        0.5 * (params.stiffness * self.displacement * self.displacement
            + params.mass * self.velocity * self.velocity)
    }
}

/// Exact zero-order-hold discretisation of the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    pub params: SdofParams,
    pub dt: f64,
    /// Continuous system matrix `[[0, 1], [−k/m, −c/m]]`.
    pub a: Mat2,
    /// Continuous input matrix for `v = [ẍg, f]`: `[[0, 0], [−1, 1/m]]`.
    pub b: Mat2,
    /// Measurement matrix (full state is observed).
    pub c_m: Mat2,
    pub a_d: Mat2,
    pub b_d: Mat2,
}

pub fn discretize(params: SdofParams, dt: f64) -> Result<DiscreteModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInterval(dt));
    }
    params.validate()?;
    let m = params.mass;
    let a = [
        [0.0, 1.0],
        [-params.stiffness / m, -params.damping / m],
    ];
    let b = [[0.0, 0.0], [-1.0, 1.0 / m]];
    let a_inv = mat_inverse(&a)
        .ok_or_else(|| Error::InvalidParameters("system matrix is singular".into()))?;
    let a_dt = [[a[0][0] * dt, a[0][1] * dt], [a[1][0] * dt, a[1][1] * dt]];
    let a_d = expm2(&a_dt);
    let a_d_minus_i = [
        [a_d[0][0] - 1.0, a_d[0][1]],
        [a_d[1][0], a_d[1][1] - 1.0],
    ];
    let b_d = mat_mul(&mat_mul(&a_inv, &a_d_minus_i), &b);
    Ok(DiscreteModel {
        params,
        dt,
        a,
        b,
        c_m: IDENTITY,
        a_d,
        b_d,
    })
}

impl DiscreteModel {
    /// One unchecked ZOH step; returns the next state and the acceleration at
    /// the new state under the held inputs.
    pub(crate) fn advance(
        &self,
        state: StateVector,
        force: f64,
        ground_accel: f64,
    ) -> (StateVector, f64) {
        let free = mat_vec(&self.a_d, [state.displacement, state.velocity]);
        let forced = mat_vec(&self.b_d, [ground_accel, force]);
        let next = StateVector::new(free[0] + forced[0], free[1] + forced[1]);
        let accel = self.params.acceleration(next, force, ground_accel);
        (next, accel)
    }

    pub fn step(
        &self,
        state: StateVector,
        force: f64,
        ground_accel: f64,
    ) -> Result<(StateVector, f64)> {
        let (next, accel) = self.advance(state, force, ground_accel);
        if next.is_finite() && accel.is_finite() {
            Ok((next, accel))
        } else {
            Err(Error::SimulationDiverged { step: 0 })
        }
    }

    /// Measured output `C_m·x`.
    pub fn measure(&self, state: StateVector) -> [f64; 2] {
        mat_vec(&self.c_m, [state.displacement, state.velocity])
    }
}

/// Constant action-effect delay on a signal path. Prefilled with zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayLine {
    buffer: VecDeque<f64>,
    delay_steps: usize,
}

impl DelayLine {
    pub fn new(delay_steps: usize) -> Self {
        Self {
            buffer: std::iter::repeat(0.0).take(delay_steps).collect(),
            delay_steps,
        }
    }

    /// Rounds a delay in seconds to the nearest whole step.
    pub fn from_seconds(delay: f64, dt: f64) -> Result<Self> {
        Ok(Self::new(delay_steps(delay, dt)?))
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Enqueues `value` and returns the value enqueued `delay_steps` pushes ago.
    pub fn push(&mut self, value: f64) -> f64 {
        if self.delay_steps == 0 {
            return value;
        }
        self.buffer.push_back(value);
        self.buffer.pop_front().unwrap_or(0.0)
    }

    pub fn reset(&mut self) {
        self.buffer.iter_mut().for_each(|v| *v = 0.0);
    }
}

pub fn delay_steps(delay: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInterval(dt));
    }
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "delay must be a non-negative number of seconds, got {delay}"
        )));
    }
    let steps = (delay / dt).round();
    let rounding = (steps * dt - delay).abs();
    if rounding > 1e-9 * dt.max(delay) {
        warn!("delay {delay} s is not a whole number of {dt} s steps; rounded to {steps} steps");
    }
    Ok(steps as usize)
}

/// Which inputs pass through the action-effect delay.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayTarget {
    /// Only the actuator force is delayed.
    #[default]
    Force,
    /// Force and ground excitation are both delayed.
    ForceAndGround,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub time: f64,
    pub displacement: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub applied_force: f64,
    pub ground_accel: f64,
}

/// Stateful closed-loop stepper over one ground-motion record.
///
/// `history()[0]` is the quiescent initial sample at `t = 0`; each call to
/// [`Environment::step`] appends the sample at the end of that control step.
#[derive(Clone, Debug)]
pub struct Environment<'a> {
    model: &'a DiscreteModel,
    motion: &'a GroundMotion,
    force_delay: DelayLine,
    ground_delay: Option<DelayLine>,
    state: StateVector,
    history: Vec<ResponseSample>,
}

impl<'a> Environment<'a> {
    pub fn new(
        model: &'a DiscreteModel,
        motion: &'a GroundMotion,
        delay_steps: usize,
        target: DelayTarget,
    ) -> Result<Self> {
        check_rates(model, motion)?;
        let ground_delay = match target {
            DelayTarget::Force => None,
            DelayTarget::ForceAndGround => Some(DelayLine::new(delay_steps)),
        };
        let mut history = Vec::with_capacity(motion.len() + 1);
        history.push(ResponseSample::default());
        Ok(Self {
            model,
            motion,
            force_delay: DelayLine::new(delay_steps),
            ground_delay,
            state: StateVector::default(),
            history,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.history.len() - 1
    }

    pub fn is_done(&self) -> bool {
        self.steps_taken() >= self.motion.len()
    }

    pub fn history(&self) -> &[ResponseSample] {
        &self.history
    }

    pub fn state(&self) -> StateVector {
        self.state
    }

    /// Applies `command` (through the delay line) for one control step.
    pub fn step(&mut self, command: f64) -> Result<ResponseSample> {
        let index = self.steps_taken();
        let raw_ground = *self.motion.samples.get(index).ok_or_else(|| {
            Error::InvalidParameters(format!("record exhausted after {index} steps"))
        })?;
        let ground = match &mut self.ground_delay {
            Some(line) => line.push(raw_ground),
            None => raw_ground,
        };
        let force = self.force_delay.push(command);
        let (next, accel) = self.model.advance(self.state, force, ground);
        if !(next.is_finite() && accel.is_finite()) {
            return Err(Error::SimulationDiverged { step: index });
        }
        self.state = next;
        let sample = ResponseSample {
            time: (index + 1) as f64 * self.model.dt,
            displacement: next.displacement,
            velocity: next.velocity,
            acceleration: accel,
            applied_force: force,
            ground_accel: ground,
        };
        self.history.push(sample);
        Ok(sample)
    }

    pub fn into_trace(mut self) -> Vec<ResponseSample> {
        self.history.remove(0);
        self.history
    }
}

fn check_rates(model: &DiscreteModel, motion: &GroundMotion) -> Result<()> {
    if (motion.dt - model.dt).abs() > 1e-9 * model.dt {
        return Err(Error::InvalidParameters(format!(
            "record interval {} s differs from model step {} s; resample first",
            motion.dt, model.dt
        )));
    }
    Ok(())
}

/// Closed-loop simulation over the whole record.
///
/// `controller` sees the sample history so far (initial sample first) and
/// returns the commanded force for the next step. The trace holds one sample
/// per record sample.
pub fn simulate<F>(
    model: &DiscreteModel,
    motion: &GroundMotion,
    mut controller: F,
    delay: DelayLine,
) -> Result<Vec<ResponseSample>>
where
    F: FnMut(&[ResponseSample]) -> f64,
{
    let mut env = Environment::new(model, motion, delay.delay_steps(), DelayTarget::Force)?;
    env.force_delay = delay;
    while !env.is_done() {
        let command = controller(env.history());
        env.step(command)?;
    }
    Ok(env.into_trace())
}

/// Simulation with no control force.
pub fn simulate_uncontrolled(
    model: &DiscreteModel,
    motion: &GroundMotion,
) -> Result<Vec<ResponseSample>> {
    simulate(model, motion, |_| 0.0, DelayLine::new(0))
}
