//! Scripted operator models driving the master shaft.
//!
//! Reproducible torque sources stand in for the human participant: step,
//! sine, and linear chirp torques, plus an impedance-controlled hand that
//! regulates the master toward a reference angle profile. All are pure
//! functions of time and master state; the chirp uses a closed-form phase
//! integral so no state accumulates between calls.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

use crate::transmission::ShaftState;

/// Reference angle trajectory for the impedance-tracking hand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceProfile {
    /// 0 rad before `onset`, `amplitude` rad after.
    Step { amplitude: f64, onset: f64 },
    /// amplitude·sin(2π·frequency·t + phase), rad.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl ReferenceProfile {
    fn angle(&self, t: f64) -> f64 {
        match *self {
            ReferenceProfile::Step { amplitude, onset } => {
                if t >= onset {
                    amplitude
                } else {
                    0.0
                }
            }
            ReferenceProfile::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (TAU * frequency * t + phase).sin(),
        }
    }

    fn validate(&self) -> Result<(), OperatorError> {
        match *self {
            ReferenceProfile::Step { amplitude, onset } => {
                check("target amplitude", amplitude, "finite", amplitude.is_finite())?;
                check("target onset", onset, "finite and ≥ 0", onset >= 0.0)
            }
            ReferenceProfile::Sine {
                amplitude,
                frequency,
                phase,
            } => {
                check("target amplitude", amplitude, "finite", amplitude.is_finite())?;
                check("target frequency", frequency, "finite and > 0", frequency > 0.0)?;
                check("target phase", phase, "finite", phase.is_finite())
            }
        }
    }
}

/// Which torque source plays the participant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Zero torque before `onset` seconds, `amplitude` N·m after.
    TorqueStep { amplitude: f64, onset: f64 },
    /// amplitude·sin(2π·frequency·t + phase), N·m.
    TorqueSine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Linear sine sweep from `f0` to `f1` Hz over `duration` seconds with
    /// phase φ(t) = 2π(f0·t + (f1−f0)·t²/(2·duration)); past `duration` the
    /// sweep continues at f1 with continuous phase.
    TorqueChirp {
        amplitude: f64,
        f0: f64,
        f1: f64,
        duration: f64,
    },
    /// Hand impedance regulating the master toward a reference profile:
    /// τ = hand_stiffness·(ref(t) − angle) − hand_damping·velocity.
    ImpedanceTracker {
        target_angle_profile: ReferenceProfile,
        hand_stiffness: f64,
        hand_damping: f64,
    },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator spec: {field} must be {requirement} (got {value})")]
    InvalidSpec {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("operator torque evaluated at negative time t = {t}")]
    NegativeTime { t: f64 },
}

fn check(field: &'static str, value: f64, requirement: &'static str, ok: bool) -> Result<(), OperatorError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(OperatorError::InvalidSpec {
            field,
            requirement,
            value,
        })
    }
}

impl OperatorSpec {
    /// Check the parameter invariants for this variant.
    pub fn validate(&self) -> Result<(), OperatorError> {
        match *self {
            OperatorSpec::TorqueStep { amplitude, onset } => {
                check("amplitude", amplitude, "finite and ≥ 0", amplitude >= 0.0)?;
                check("onset", onset, "finite and ≥ 0", onset >= 0.0)
            }
            OperatorSpec::TorqueSine {
                amplitude,
                frequency,
                phase,
            } => {
                check("amplitude", amplitude, "finite and ≥ 0", amplitude >= 0.0)?;
                check("frequency", frequency, "finite and > 0", frequency > 0.0)?;
                check("phase", phase, "finite", phase.is_finite())
            }
            OperatorSpec::TorqueChirp {
                amplitude,
                f0,
                f1,
                duration,
            } => {
                check("amplitude", amplitude, "finite and ≥ 0", amplitude >= 0.0)?;
                check("f0", f0, "finite and > 0", f0 > 0.0)?;
                check("f1", f1, "finite and ≥ f0", f1 >= f0)?;
                check("duration", duration, "finite and > 0", duration > 0.0)
            }
            OperatorSpec::ImpedanceTracker {
                target_angle_profile,
                hand_stiffness,
                hand_damping,
            } => {
                target_angle_profile.validate()?;
                check("hand_stiffness", hand_stiffness, "finite and ≥ 0", hand_stiffness >= 0.0)?;
                check("hand_damping", hand_damping, "finite and ≥ 0", hand_damping >= 0.0)
            }
        }
    }
}

/// Torque the operator applies to the master shaft at time `t`, N·m.
pub fn operator_torque(
    t: f64,
    master: ShaftState,
    spec: &OperatorSpec,
) -> Result<f64, OperatorError> {
    spec.validate()?;
    if !(t >= 0.0) {
        return Err(OperatorError::NegativeTime { t });
    }
    Ok(match *spec {
        OperatorSpec::TorqueStep { amplitude, onset } => {
            if t >= onset {
                amplitude
            } else {
                0.0
            }
        }
        OperatorSpec::TorqueSine {
            amplitude,
            frequency,
            phase,
        } => amplitude * (TAU * frequency * t + phase).sin(),
        OperatorSpec::TorqueChirp {
            amplitude,
            f0,
            f1,
            duration,
        } => {
            let phase = if t <= duration {
                TAU * f0 * t + TAU * (f1 - f0) * t * t / (2.0 * duration)
            } else {
                let at_end = TAU * f0 * duration + TAU * (f1 - f0) * duration / 2.0;
                at_end + TAU * f1 * (t - duration)
            };
            amplitude * phase.sin()
        }
        OperatorSpec::ImpedanceTracker {
            target_angle_profile,
            hand_stiffness,
            hand_damping,
        } => {
            hand_stiffness * (target_angle_profile.angle(t) - master.angle)
                - hand_damping * master.velocity
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn step_switches_at_onset() {
        let spec = OperatorSpec::TorqueStep {
            amplitude: 1.0,
            onset: 0.1,
        };
        assert_eq!(operator_torque(0.05, ShaftState::REST, &spec).unwrap(), 0.0);
        assert_eq!(operator_torque(0.2, ShaftState::REST, &spec).unwrap(), 1.0);
        assert_eq!(operator_torque(0.1, ShaftState::REST, &spec).unwrap(), 1.0);
    }

    #[test]
    fn sine_hits_quarter_period_peak() {
        let spec = OperatorSpec::TorqueSine {
            amplitude: 2.0,
            frequency: 1.0,
            phase: 0.0,
        };
        let torque = operator_torque(0.25, ShaftState::REST, &spec).unwrap();
        assert_relative_eq!(torque, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn sampled_sine_mean_vanishes_over_whole_periods() {
        // 10 Hz sampled at 1 kHz: 100 samples per period, summed over 5
        // periods the sampled sine cancels exactly (roots of unity).
        let spec = OperatorSpec::TorqueSine {
            amplitude: 0.7,
            frequency: 10.0,
            phase: 0.3,
        };
        let dt = 1e-3;
        let n = 500;
        let mean = (0..n)
            .map(|i| operator_torque(i as f64 * dt, ShaftState::REST, &spec).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() <= 1e-12 * 0.7, "sampled mean {mean}");
    }

    #[test]
    fn chirp_phase_endpoints_match_formula() {
        let spec = OperatorSpec::TorqueChirp {
            amplitude: 1.0,
            f0: 1.0,
            f1: 5.0,
            duration: 2.0,
        };
        // Instantaneous frequency f(t) = f0 + (f1−f0)·t/duration; estimate it
        // at both ends from the phase finite difference of asin(τ).
        let eps = 1e-6;
        let probe = |t: f64| operator_torque(t, ShaftState::REST, &spec).unwrap().asin();
        let f_start = (probe(eps) - probe(0.0)) / eps / TAU;
        assert_relative_eq!(f_start, 1.0, max_relative = 1e-3);
        // Past the sweep the frequency holds at f1 with continuous phase.
        let t0 = 2.0 - eps;
        let t1 = 2.0 + eps;
        let jump = operator_torque(t1, ShaftState::REST, &spec).unwrap()
            - operator_torque(t0, ShaftState::REST, &spec).unwrap();
        assert!(jump.abs() < 1e-4, "phase discontinuity at sweep end: {jump}");
    }

    #[test]
    fn chirp_with_equal_endpoints_is_a_sine() {
        let chirp = OperatorSpec::TorqueChirp {
            amplitude: 1.3,
            f0: 4.0,
            f1: 4.0,
            duration: 3.0,
        };
        let sine = OperatorSpec::TorqueSine {
            amplitude: 1.3,
            frequency: 4.0,
            phase: 0.0,
        };
        for i in 0..100 {
            let t = i as f64 * 0.013;
            if t <= 3.0 {
                assert_eq!(
                    operator_torque(t, ShaftState::REST, &chirp).unwrap(),
                    operator_torque(t, ShaftState::REST, &sine).unwrap()
                );
            }
        }
    }

    #[test]
    fn tracker_applies_no_torque_at_target() {
        let spec = OperatorSpec::ImpedanceTracker {
            target_angle_profile: ReferenceProfile::Step {
                amplitude: 0.5,
                onset: 0.0,
            },
            hand_stiffness: 3.0,
            hand_damping: 0.4,
        };
        let at_target = ShaftState::new(0.5, 0.0);
        assert_eq!(operator_torque(1.0, at_target, &spec).unwrap(), 0.0);
        // Displaced below target with no velocity: pure stiffness pull.
        let below = ShaftState::new(0.3, 0.0);
        assert_relative_eq!(
            operator_torque(1.0, below, &spec).unwrap(),
            3.0 * 0.2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(OperatorSpec::TorqueSine {
            amplitude: 1.0,
            frequency: 0.0,
            phase: 0.0
        }
        .validate()
        .is_err());
        assert!(OperatorSpec::TorqueChirp {
            amplitude: 1.0,
            f0: 5.0,
            f1: 1.0,
            duration: 1.0
        }
        .validate()
        .is_err());
        assert!(matches!(
            operator_torque(
                -1.0,
                ShaftState::REST,
                &OperatorSpec::TorqueStep { amplitude: 1.0, onset: 0.0 }
            ),
            Err(OperatorError::NegativeTime { .. })
        ));
    }

    proptest! {
        /// Identical (t, state, spec) always yields identical torque.
        #[test]
        fn torque_is_deterministic(
            t in 0.0f64..20.0,
            angle in -2.0f64..2.0,
            vel in -10.0f64..10.0,
            amp in 0.0f64..3.0,
            freq in 0.1f64..30.0,
        ) {
            let state = ShaftState::new(angle, vel);
            let specs = [
                OperatorSpec::TorqueStep { amplitude: amp, onset: 0.5 },
                OperatorSpec::TorqueSine { amplitude: amp, frequency: freq, phase: 0.1 },
                OperatorSpec::TorqueChirp { amplitude: amp, f0: freq, f1: freq + 1.0, duration: 5.0 },
            ];
            for spec in &specs {
                let a = operator_torque(t, state, spec).unwrap();
                let b = operator_torque(t, state, spec).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a.abs() <= amp + 1e-12);
            }
        }
    }
}
