//! Multi-objective reward: displacement, velocity, acceleration and actuator force.

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_uncontrolled, DiscreteModel, ResponseSample};
use crate::error::{Error, Result};
use crate::excitation::GroundMotion;

/// How the actuator-force term enters the reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceTerm {
    /// `−P_a·|f|/unit`: force in either direction is penalised.
    #[default]
    Absolute,
    /// `P_a·f/unit`, the literal signed product.
    Signed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peaks {
    pub displacement: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl Peaks {
    pub fn of(trace: &[ResponseSample]) -> Self {
        trace.iter().fold(
            Peaks {
                displacement: 0.0,
                velocity: 0.0,
                acceleration: 0.0,
            },
            |p, s| Peaks {
                displacement: p.displacement.max(s.displacement.abs()),
                velocity: p.velocity.max(s.velocity.abs()),
                acceleration: p.acceleration.max(s.acceleration.abs()),
            },
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub u_max: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub force_penalty: f64,
    pub force_unit: f64,
    pub force_term: ForceTerm,
}

impl RewardConfig {
    pub fn from_peaks(peaks: Peaks) -> Result<Self> {
        let cfg = Self {
            u_max: peaks.displacement,
            v_max: peaks.velocity,
            a_max: peaks.acceleration,
            force_penalty: 0.005,
            force_unit: 1000.0,
            force_term: ForceTerm::Absolute,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.u_max) && positive(self.v_max) && positive(self.a_max)) {
            return Err(Error::DegeneratePeaks);
        }
        if !(self.force_penalty >= 0.0 && positive(self.force_unit)) {
            return Err(Error::InvalidParameters(format!(
                "force penalty must be >= 0 and force unit > 0 (got {}, {})",
                self.force_penalty, self.force_unit
            )));
        }
        Ok(())
    }
}

/// Peak |u|, |u̇|, |ü| of the response with no control force.
pub fn uncontrolled_peaks(model: &DiscreteModel, motion: &GroundMotion) -> Result<Peaks> {
    let peaks = Peaks::of(&simulate_uncontrolled(model, motion)?);
    if peaks.displacement == 0.0 || peaks.velocity == 0.0 || peaks.acceleration == 0.0 {
        return Err(Error::DegeneratePeaks);
    }
    Ok(peaks)
}

pub fn reward(sample: &ResponseSample, cfg: &RewardConfig) -> f64 {
    let r1 = 1.0 - sample.displacement.abs() / cfg.u_max;
    let r2 = 1.0 - sample.velocity.abs() / cfg.v_max;
    let r3 = 1.0 - sample.acceleration.abs() / cfg.a_max;
    let r4 = match cfg.force_term {
        ForceTerm::Absolute => -cfg.force_penalty * sample.applied_force.abs() / cfg.force_unit,
        ForceTerm::Signed => cfg.force_penalty * sample.applied_force / cfg.force_unit,
    };
    r1 + r2 + r3 + r4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{discretize, SdofParams};
    use crate::excitation::MotionSource;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> RewardConfig {
        RewardConfig::from_peaks(Peaks {
            displacement: 0.02,
            velocity: 0.5,
            acceleration: 10.0,
        })
        .unwrap()
    }

    fn sample(u: f64, v: f64, a: f64, f: f64) -> ResponseSample {
        ResponseSample {
            displacement: u,
            velocity: v,
            acceleration: a,
            applied_force: f,
            ..Default::default()
        }
    }

    #[test]
    fn reward_extremes() {
        let c = cfg();
        assert_eq!(reward(&sample(0.0, 0.0, 0.0, 0.0), &c), 3.0);
        assert_eq!(reward(&sample(0.02, -0.5, 10.0, 0.0), &c), 0.0);
        assert_relative_eq!(reward(&sample(0.0, 0.0, 0.0, 2000.0), &c), 2.99, epsilon = 1e-15);
        assert_relative_eq!(reward(&sample(0.0, 0.0, 0.0, -2000.0), &c), 2.99, epsilon = 1e-15);
    }

    #[test]
    fn signed_force_term() {
        let c = RewardConfig {
            force_term: ForceTerm::Signed,
            ..cfg()
        };
        assert_relative_eq!(reward(&sample(0.0, 0.0, 0.0, -2000.0), &c), 2.99, epsilon = 1e-15);
        assert_relative_eq!(reward(&sample(0.0, 0.0, 0.0, 2000.0), &c), 3.01, epsilon = 1e-15);
    }

    #[test]
    fn exceeding_peaks_goes_negative() {
        assert!(reward(&sample(0.05, 1.0, 30.0, 0.0), &cfg()) < 0.0);
    }

    #[test]
    fn zero_motion_peaks_are_degenerate() {
        let model = discretize(SdofParams::default(), 0.01).unwrap();
        let motion = GroundMotion::new(0.01, vec![0.0; 100], "z", MotionSource::Synthetic).unwrap();
        assert!(matches!(uncontrolled_peaks(&model, &motion), Err(Error::DegeneratePeaks)));
    }

    #[test]
    fn pulse_peaks_match_trace_scan() {
        let model = discretize(SdofParams::default(), 0.01).unwrap();
        let mut s = vec![0.0; 200];
        s[3] = 4.0;
        let motion = GroundMotion::new(0.01, s, "pulse", MotionSource::Synthetic).unwrap();
        let peaks = uncontrolled_peaks(&model, &motion).unwrap();
        let trace = simulate_uncontrolled(&model, &motion).unwrap();
        let mut u: f64 = 0.0;
        for s in &trace {
            if s.displacement.abs() > u {
                u = s.displacement.abs();
            }
        }
        assert_eq!(peaks.displacement, u);
        let a = trace.iter().map(|s| s.acceleration.abs()).fold(f64::MIN, f64::max);
        assert_eq!(peaks.acceleration, a);
    }

    proptest! {
        #[test]
        fn monotone_in_each_magnitude(
            u in 0.0..0.1f64, v in 0.0..2.0f64, a in 0.0..40.0f64, f in 0.0..2e4f64,
            du in 0.0..0.01f64, dv in 0.0..0.1f64, da in 0.0..1.0f64, df in 0.0..1e3f64,
        ) {
            let c = cfg();
            let base = reward(&sample(u, v, a, f), &c);
            prop_assert!(reward(&sample(u + du, v, a, f), &c) <= base);
            prop_assert!(reward(&sample(u, -(v + dv), a, f), &c) <= base);
            prop_assert!(reward(&sample(u, v, a + da, f), &c) <= base);
            prop_assert!(reward(&sample(u, v, a, -(f + df)), &c) <= base);
        }

        #[test]
        fn bounded_within_peaks(u in -0.02..0.02f64, v in -0.5..0.5f64, a in -10.0..10.0f64) {
            let r = reward(&sample(u, v, a, 0.0), &cfg());
            prop_assert!((0.0..=3.0).contains(&r));
        }
    }
}
